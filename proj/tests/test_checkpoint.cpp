#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "frid/checkpoint.hpp"

using frid::Tensor;
using T64 = frid::Tensor<double>;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("frid_ckpt_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_SUITE_BEGIN("checkpoint");

TEST_CASE("round trip restores float-exact values and is a byte fixed point") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(4);
  std::vector<std::pair<std::string, T64>> params{
      {"app.stage1.conv.w", T64::randn({4, 3, 3, 3}, rng, 0.3)},
      {"app.stage1.conv.b", T64::randn({4}, rng, 0.1)},
      {"classifier.w", T64::randn({5, 8}, rng, 0.2)},
  };
  frid::save_checkpoint(dir / "a.frid", params);

  auto entries = frid::load_checkpoint(dir / "a.frid");
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].name == "app.stage1.conv.w");
  CHECK(entries[2].shape == frid::Shape{5, 8});

  // loaded values are exactly the f32 cast of the originals
  std::vector<std::pair<std::string, T64>> restored;
  for (const auto& [name, t] : params)
    restored.emplace_back(name, T64::zeros(t.shape()));
  frid::assign_checkpoint(entries, restored);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Eigen::Index k = 0; k < params[i].second.size(); ++k)
      CHECK(restored[i].second.values()[k] ==
            static_cast<double>(
                static_cast<float>(params[i].second.values()[k])));

  // a second save/load cycle is byte-identical
  frid::save_checkpoint(dir / "b.frid", restored);
  CHECK(slurp(dir / "a.frid") == slurp(dir / "b.frid"));
  fs::remove_all(dir);
}

TEST_CASE("bad magic and shape mismatches are rejected") {
  const fs::path dir = temp_dir();
  {
    std::ofstream os(dir / "junk.frid", std::ios::binary);
    os << "NOPE" << '\x01';
  }
  CHECK_THROWS_AS(frid::load_checkpoint(dir / "junk.frid"), frid::IoError);
  CHECK_THROWS_AS(frid::load_checkpoint(dir / "missing.frid"),
                  frid::UsageError);

  std::vector<std::pair<std::string, T64>> params{{"w", T64::zeros({2, 2})}};
  frid::save_checkpoint(dir / "ok.frid", params);
  auto entries = frid::load_checkpoint(dir / "ok.frid");
  std::vector<std::pair<std::string, T64>> wrong_shape{
      {"w", T64::zeros({2, 3})}};
  CHECK_THROWS_AS(frid::assign_checkpoint(entries, wrong_shape),
                  frid::IoError);
  std::vector<std::pair<std::string, T64>> wrong_name{
      {"v", T64::zeros({2, 2})}};
  CHECK_THROWS_AS(frid::assign_checkpoint(entries, wrong_name),
                  frid::IoError);
  fs::remove_all(dir);
}

TEST_SUITE_END();
