#ifndef FRID_COMMON_HPP_
#define FRID_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace frid {

// Error taxonomy; the CLI maps these onto exit codes (usage/validation 2,
// numerical failure 3, I/O 4).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64 finalizer; used to derive independent sub-seeds so that
// identities/clips are deterministic functions of (dataset seed, indices).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(base ^ 0x8f1b7c4d2e9a635ULL);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

}  // namespace frid

#endif  // FRID_COMMON_HPP_
