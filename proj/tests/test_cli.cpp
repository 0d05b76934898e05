#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "frid/dataset.hpp"
#include "frid/fvec.hpp"
#include "frid/runconfig.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("FRID_CLI");
  return p ? p : "";
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path tmp(const std::string& tag) {
  return fs::temp_directory_path() /
         ("frid_cli_" + tag + "_" + std::to_string(::getpid()));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("runconfig parsing, overrides and serialization") {
  frid::RunConfig cfg;
  CHECK(cfg.get_int("ids") == 32);
  CHECK(cfg.get_double("lr") == doctest::Approx(3e-4));
  CHECK(cfg.get_bool("augment"));
  CHECK(cfg.get_int_list("stage_channels") ==
        std::vector<int>{16, 32, 64, 128, 128});
  CHECK_THROWS_AS(cfg.set("not_a_key", "1"), frid::UsageError);
  CHECK_THROWS_AS(cfg.get("not_a_key"), frid::UsageError);

  const fs::path dir = tmp("cfg");
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "c.txt");
    os << "# comment\n\nids = 8\nmode = gated   # trailing comment\n";
  }
  frid::RunConfig from_file = frid::RunConfig::from_file(dir / "c.txt");
  CHECK(from_file.get_int("ids") == 8);
  CHECK(from_file.get("mode") == "gated");

  from_file.set("ids", "12");
  from_file.write(dir / "resolved.txt");
  frid::RunConfig reread = frid::RunConfig::from_file(dir / "resolved.txt");
  CHECK(reread.get_int("ids") == 12);
  CHECK(reread.serialize() == from_file.serialize());

  {
    std::ofstream os(dir / "bad.txt");
    os << "unknown_key = 3\n";
  }
  CHECK_THROWS_AS(frid::RunConfig::from_file(dir / "bad.txt"),
                  frid::UsageError);
  fs::remove_all(dir);
}

TEST_CASE("gen-data subcommand: determinism and validation" *
          doctest::skip(cli_path().empty())) {
  const fs::path d1 = tmp("gen1"), d2 = tmp("gen2");
  fs::remove_all(d1);
  fs::remove_all(d2);
  const std::string args =
      "gen-data --seed 7 --ids 4 --clips 1 --frames 6 ";
  REQUIRE(run(args + "--out " + d1.string()) == 0);
  REQUIRE(run(args + "--out " + d2.string()) == 0);
  CHECK(slurp(d1 / "manifest.txt") == slurp(d2 / "manifest.txt"));
  CHECK(fs::exists(d1 / "run_config.txt"));

  frid::Manifest m = frid::read_manifest(d1 / "manifest.txt");
  CHECK(m.num_identities() == 4);
  frid::ManifestRecord r0 = m.records[0];
  CHECK(slurp(d1 / r0.frame_paths[0]) == slurp(d2 / r0.frame_paths[0]));

  // --ids 0 is a usage error
  CHECK(run("gen-data --seed 1 --ids 0 --out " + tmp("gen0").string()) == 2);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("flow subcommand: rewrites the manifest and is idempotent" *
          doctest::skip(cli_path().empty())) {
  const fs::path dir = tmp("flow");
  fs::remove_all(dir);
  REQUIRE(run("gen-data --seed 3 --ids 2 --clips 1 --frames 5 --out " +
              dir.string()) == 0);
  const std::string manifest = (dir / "manifest.txt").string();
  REQUIRE(run("flow --manifest " + manifest) == 0);
  frid::Manifest m = frid::read_manifest(manifest);
  for (const std::string& fp : m.records[0].flow_paths)
    CHECK(fp.rfind("flow_est/", 0) == 0);
  const std::string once = slurp(dir / m.records[0].flow_paths[1]);
  REQUIRE(run("flow --manifest " + manifest) == 0);
  CHECK(slurp(dir / m.records[0].flow_paths[1]) == once);  // idempotent

  // missing manifest is a usage error
  CHECK(run("flow --manifest " + (dir / "nope.txt").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("train/extract/eval round trip with exit codes" *
          doctest::skip(cli_path().empty())) {
  const fs::path dir = tmp("pipeline");
  fs::remove_all(dir);
  REQUIRE(run("gen-data --seed 5 --ids 4 --clips 2 --frames 6 --out " +
              dir.string()) == 0);
  const std::string manifest = (dir / "manifest.txt").string();
  REQUIRE(run("flow --manifest " + manifest) == 0);

  frid::RunConfig cfg;
  cfg.set("stage_channels", "4,8");
  cfg.set("inject_stage", "1");
  cfg.set("descriptor_dim", "8");
  cfg.set("epochs", "2");
  cfg.set("seq_len", "2");
  cfg.set("batch_p", "2");
  cfg.set("batch_k", "2");
  cfg.write(dir / "micro.txt");

  const fs::path run_dir = dir / "run";
  REQUIRE(run("train --manifest " + manifest + " --config " +
              (dir / "micro.txt").string() + " --mode mutual --agg weighted "
              "--out " + run_dir.string()) == 0);
  CHECK(fs::exists(run_dir / "checkpoint.frid"));
  CHECK(fs::exists(run_dir / "train_log.csv"));
  CHECK(fs::exists(run_dir / "run_config.txt"));
  const std::string log = slurp(run_dir / "train_log.csv");
  CHECK(log.rfind("epoch,id_loss,triplet_loss,lr,seconds", 0) == 0);

  // invalid inject stage fails validation
  CHECK(run("train --manifest " + manifest + " --config " +
            (dir / "micro.txt").string() + " --inject-stage 9 --out " +
            (dir / "bad").string()) == 2);

  const fs::path fvec = dir / "test.fvec";
  const fs::path attdir = dir / "attention";
  REQUIRE(run("extract --checkpoint " + (run_dir / "checkpoint.frid").string() +
              " --manifest " + manifest + " --split test --seq-len 2" +
              " --dump-attention " + attdir.string() +
              " --out " + fvec.string()) == 0);
  int dim = 0;
  auto descriptors = frid::read_fvec(fvec, &dim);
  CHECK(dim == 8);
  CHECK(descriptors.size() == frid::split_records(
                                  frid::read_manifest(manifest), "test")
                                  .size());
  CHECK(fs::exists(fvec.string() + ".run_config.txt"));
  // attention PGMs for at least one clip
  bool any_pgm = false;
  for (const auto& e : fs::directory_iterator(attdir))
    any_pgm = any_pgm || e.path().extension() == ".pgm";
  CHECK(any_pgm);

  // extraction determinism: a second run produces identical bytes
  const fs::path fvec2 = dir / "test2.fvec";
  REQUIRE(run("extract --checkpoint " + (run_dir / "checkpoint.frid").string() +
              " --manifest " + manifest + " --split test --seq-len 2 --out " +
              fvec2.string()) == 0);
  CHECK(slurp(fvec) == slurp(fvec2));

  const fs::path report = dir / "report.csv";
  REQUIRE(run("eval --query " + fvec.string() + " --gallery " + fvec.string() +
              " --ranks 10,1,5 --out " + report.string()) == 0);
  const std::string csv = slurp(report);
  CHECK(csv.find("rank,1,") != std::string::npos);
  CHECK(csv.find("rank,1,") < csv.find("rank,5,"));   // sorted output
  CHECK(csv.find("rank,5,") < csv.find("rank,10,"));
  CHECK(csv.find("mAP,") != std::string::npos);

  // empty query file: exit 2
  frid::write_fvec(dir / "empty.fvec", {}, 8);
  CHECK(run("eval --query " + (dir / "empty.fvec").string() + " --gallery " +
            fvec.string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("ablate emits the expected row counts" *
          doctest::skip(cli_path().empty())) {
  const fs::path dir = tmp("ablate");
  fs::remove_all(dir);
  REQUIRE(run("gen-data --seed 6 --ids 4 --clips 2 --frames 6 --out " +
              dir.string()) == 0);
  const std::string manifest = (dir / "manifest.txt").string();
  REQUIRE(run("flow --manifest " + manifest) == 0);

  frid::RunConfig cfg;
  cfg.set("stage_channels", "4,4,8,8,8");
  cfg.set("descriptor_dim", "8");
  cfg.set("epochs", "1");
  cfg.set("seq_len", "2");
  cfg.set("batch_p", "2");
  cfg.set("batch_k", "2");
  cfg.write(dir / "micro.txt");

  REQUIRE(run("ablate --manifest " + manifest + " --config " +
              (dir / "micro.txt").string() + " --axis module --out " +
              (dir / "ab").string()) == 0);
  std::ifstream is(dir / "ab" / "ablation_module.csv");
  std::string line;
  int rows = 0;
  std::getline(is, line);  // header
  CHECK(line == "axis,setting,mAP,rank1");
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 6);  // {none,gated,mutual} x {avg,weighted}

  CHECK(run("ablate --manifest " + manifest + " --axis nonsense --out " +
            (dir / "ab2").string()) == 2);
  fs::remove_all(dir);
}

TEST_SUITE_END();
