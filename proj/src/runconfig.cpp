#include "frid/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace frid {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::schema() {
  static const std::map<std::string, std::string> defaults{
      // dataset
      {"seed", "7"},
      {"ids", "32"},
      {"clips_per_id", "4"},
      {"frames_per_clip", "16"},
      {"height", "64"},
      {"width", "32"},
      {"occlusion_prob", "0.25"},
      // optical flow
      {"flow_alpha", "0.1"},
      {"flow_iters", "100"},
      {"flow_cap", "16"},
      // backbone
      {"stage_channels", "16,32,64,128,128"},
      {"inject_stage", "4"},
      {"descriptor_dim", "128"},
      {"use_se", "false"},
      {"se_reduction", "4"},
      // model
      {"mode", "mutual"},
      {"agg", "weighted"},
      {"normalize_weights", "true"},
      {"reference_mode", "max"},
      // training
      {"seq_len", "4"},
      {"batch_p", "8"},
      {"batch_k", "4"},
      {"lr", "0.0003"},
      {"beta1", "0.9"},
      {"beta2", "0.999"},
      {"adam_eps", "1e-8"},
      {"margin", "0.3"},
      {"lambda_id", "1"},
      {"lambda_tri", "1"},
      {"epochs", "30"},
      {"train_seed", "1"},
      {"augment", "true"},
      // evaluation
      {"distance", "euclidean"},
      {"ranks", "1,5,10,20"},
      {"eval_seq_len", "0"},  // 0 means: use seq_len
      // execution
      {"workers", "0"},
  };
  return defaults;
}

RunConfig::RunConfig() : kv_(schema()) {}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  RunConfig cfg;
  cfg.load_file(path);
  return cfg;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) +
                       ": expected 'key = value', got '" + t + "'");
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (schema().find(key) == schema().end())
    throw UsageError("unknown config key '" + key + "'");
  kv_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  return kv_.find(key) != kv_.end();
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

long RunConfig::get_int(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const long v = std::stol(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' is not an integer: '" +
                     get(key) + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' is not a number: '" +
                     get(key) + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    try {
      out.push_back(std::stoi(t));
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "' has a non-integer entry '" +
                       t + "'");
    }
  }
  if (out.empty())
    throw UsageError("config key '" + key + "' must list integers");
  return out;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config: " + path.string());
  os << serialize();
  if (!os) throw IoError("config write failed: " + path.string());
}

}  // namespace frid
