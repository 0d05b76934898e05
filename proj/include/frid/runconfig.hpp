#ifndef FRID_RUNCONFIG_HPP_
#define FRID_RUNCONFIG_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "frid/common.hpp"

namespace frid {

// Flat "key = value" run configuration. Unknown keys are rejected; CLI flags
// override file values; every run serializes its resolved config next to its
// outputs.
class RunConfig {
 public:
  RunConfig();  // schema defaults

  static RunConfig from_file(const std::filesystem::path& path);
  void load_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  const std::string& get(const std::string& key) const;
  long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  void write(const std::filesystem::path& path) const;
  std::string serialize() const;

 private:
  static const std::map<std::string, std::string>& schema();
  std::map<std::string, std::string> kv_;
};

}  // namespace frid

#endif  // FRID_RUNCONFIG_HPP_
