#ifndef FRID_CHECKPOINT_HPP_
#define FRID_CHECKPOINT_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "frid/binio.hpp"
#include "frid/tensor.hpp"

namespace frid {

// Checkpoint file: magic "FRID", format-version byte 0x01, then one record
// per tensor: name length (LE u32), name bytes, rank (LE u64), extents
// (LE u64 each), values (LE f32). Values are stored as 32-bit floats
// regardless of the in-memory scalar, so save(load(save(x))) is a byte-level
// fixed point.

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

template <typename S>
void save_checkpoint(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, Tensor<S>>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  binio::write_bytes(os, "FRID");
  os.put(static_cast<char>(0x01));
  for (const auto& [name, t] : tensors) {
    binio::write_u32(os, static_cast<std::uint32_t>(name.size()));
    binio::write_bytes(os, name);
    binio::write_u64(os, static_cast<std::uint64_t>(t.shape().size()));
    for (Eigen::Index e : t.shape())
      binio::write_u64(os, static_cast<std::uint64_t>(e));
    for (Eigen::Index i = 0; i < t.size(); ++i)
      binio::write_f32(os, static_cast<float>(t.values()[i]));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

inline std::vector<CheckpointEntry> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open: " + path.string());
  if (binio::read_bytes(is, 4) != "FRID")
    throw IoError(path.string() + ": not a FRID checkpoint");
  const int version = is.get();
  if (version != 0x01)
    throw IoError(path.string() + ": unsupported checkpoint version " +
                  std::to_string(version));
  std::vector<CheckpointEntry> entries;
  while (true) {
    is.peek();
    if (is.eof()) break;
    CheckpointEntry e;
    const std::uint32_t name_len = binio::read_u32(is);
    e.name = binio::read_bytes(is, name_len);
    const std::uint64_t rank = binio::read_u64(is);
    if (rank > 8) throw IoError(path.string() + ": implausible tensor rank");
    Eigen::Index n = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      const std::uint64_t ext = binio::read_u64(is);
      e.shape.push_back(static_cast<Eigen::Index>(ext));
      n *= static_cast<Eigen::Index>(ext);
    }
    e.values.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      e.values[static_cast<std::size_t>(i)] = binio::read_f32(is);
    entries.push_back(std::move(e));
  }
  return entries;
}

// Assigns checkpoint values into an existing set of named parameters.
// Every parameter must be present with a matching shape; extra file entries
// are an error as well.
template <typename S>
void assign_checkpoint(
    const std::vector<CheckpointEntry>& entries,
    std::vector<std::pair<std::string, Tensor<S>>> params) {
  if (entries.size() != params.size())
    throw IoError("checkpoint holds " + std::to_string(entries.size()) +
                  " tensors, model expects " + std::to_string(params.size()));
  std::size_t i = 0;
  for (auto& [name, t] : params) {
    const CheckpointEntry& e = entries[i++];
    if (e.name != name)
      throw IoError("checkpoint entry '" + e.name + "' does not match '" +
                    name + "'");
    if (e.shape != t.shape())
      throw IoError("checkpoint tensor '" + name + "' has shape " +
                    shape_str(e.shape) + ", expected " +
                    shape_str(t.shape()));
    for (Eigen::Index k = 0; k < t.size(); ++k)
      t.mutable_values()[k] = static_cast<S>(e.values[static_cast<std::size_t>(k)]);
  }
}

}  // namespace frid

#endif  // FRID_CHECKPOINT_HPP_
