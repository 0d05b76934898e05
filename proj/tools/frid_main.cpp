// frid: flow-guided mutual-attention video person re-identification at desk
// scale. One binary, batch subcommands; exit codes: 0 success, 2 usage or
// validation, 3 numerical failure, 4 I/O.

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "frid/checkpoint.hpp"
#include "frid/fvec.hpp"
#include "frid/pipeline.hpp"

namespace fs = std::filesystem;
using Scalar = double;  // 64-bit mode keeps training runs bit-reproducible

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value from dedicated flags
};

frid::RunConfig resolve_config(const CommonOpts& opts) {
  frid::RunConfig cfg;
  if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    const auto eq = kv.find('=');
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void require_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw frid::IoError("cannot create directory " + dir.string() + ": " +
                        ec.message());
}

int effective_workers(const frid::RunConfig& cfg) {
  const int w = static_cast<int>(cfg.get_int("workers"));
  return w > 0 ? w : std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOpts& opts, const std::string& out_dir) {
  frid::RunConfig cfg = resolve_config(opts);
  frid::GenParams params = frid::gen_params_from(cfg);
  if (params.num_identities < 1)
    throw frid::UsageError("gen-data: --ids must be >= 1");
  require_dir(out_dir);
  frid::Manifest m = frid::generate_dataset(params, out_dir);
  cfg.write(fs::path(out_dir) / "run_config.txt");
  std::cout << "wrote " << m.records.size() << " clips ("
            << params.num_identities << " identities, 2 cameras) under "
            << out_dir << "\n";
  return 0;
}

int cmd_flow(const CommonOpts& opts, const std::string& manifest_path) {
  frid::RunConfig cfg = resolve_config(opts);
  const frid::FlowParams params = frid::flow_params_from(cfg);
  frid::Manifest m = frid::read_manifest(manifest_path);
  frid::estimate_flows_for_manifest(m, params, effective_workers(cfg));
  frid::write_manifest(manifest_path, m);
  cfg.write(m.root / "flow_run_config.txt");
  std::cout << "estimated flow for " << m.records.size()
            << " clips; manifest updated\n";
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& manifest_path,
              const std::string& out_dir) {
  frid::RunConfig cfg = resolve_config(opts);
  frid::Manifest manifest = frid::read_manifest(manifest_path);
  const int num_ids = frid::train_identity_count(manifest);
  if (num_ids < 1) throw frid::UsageError("train: no training identities");

  frid::ModelConfig mc = frid::model_config_from(cfg, num_ids);
  frid::TrainConfig tc = frid::train_config_from(cfg);
  frid::ReidModel<Scalar> model(mc);
  frid::Adam<Scalar> optimizer(tc.adam);

  require_dir(out_dir);
  cfg.write(fs::path(out_dir) / "run_config.txt");
  std::ofstream log(fs::path(out_dir) / "train_log.csv");
  if (!log)
    throw frid::IoError("cannot open training log under " + out_dir);

  frid::train_model(model, optimizer, manifest, tc, &log, &std::cout);
  frid::save_checkpoint(fs::path(out_dir) / "checkpoint.frid",
                        model.named_parameters());
  std::cout << "checkpoint written to " << out_dir << "/checkpoint.frid\n";
  return 0;
}

int cmd_extract(const CommonOpts& opts, const std::string& checkpoint_path,
                const std::string& manifest_path, const std::string& split,
                const std::string& out_path, int seq_len_flag,
                const std::string& dump_attention_dir) {
  frid::RunConfig cfg = resolve_config(opts);
  if (opts.config_path.empty()) {
    // default to the resolved config written next to the checkpoint
    const fs::path sibling =
        fs::path(checkpoint_path).parent_path() / "run_config.txt";
    if (fs::exists(sibling)) cfg.load_file(sibling);
  }
  frid::Manifest manifest = frid::read_manifest(manifest_path);
  const int num_ids = frid::train_identity_count(manifest);
  frid::ModelConfig mc = frid::model_config_from(cfg, num_ids);
  frid::ReidModel<Scalar> model(mc);
  frid::assign_checkpoint(frid::load_checkpoint(checkpoint_path),
                          model.named_parameters());

  int seq_len = seq_len_flag > 0
                    ? seq_len_flag
                    : static_cast<int>(cfg.get_int("eval_seq_len"));
  if (seq_len <= 0) seq_len = static_cast<int>(cfg.get_int("seq_len"));

  frid::AttentionSink sink = nullptr;
  if (!dump_attention_dir.empty()) {
    require_dir(dump_attention_dir);
    sink = [&dump_attention_dir](const std::string& clip_id,
                                 const std::vector<frid::ImageGray>& maps) {
      for (std::size_t t = 0; t < maps.size(); ++t) {
        char suffix[32];
        std::snprintf(suffix, sizeof suffix, "_t%02zu_att.pgm", t);
        frid::write_pgm(fs::path(dump_attention_dir) / (clip_id + suffix),
                        maps[t]);
      }
    };
  }

  const auto records = frid::split_records(manifest, split);
  const auto descriptors = frid::extract_descriptors(
      model, manifest, records, seq_len, cfg.get_double("flow_cap"),
      &std::cerr, sink);
  frid::write_fvec(out_path, descriptors, model.descriptor_dim());
  cfg.write(out_path + ".run_config.txt");
  std::cout << "wrote " << descriptors.size() << " descriptors (D="
            << model.descriptor_dim() << ") to " << out_path << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& query_path,
             const std::string& gallery_path, const std::string& ranks_flag,
             const std::string& out_csv) {
  frid::RunConfig cfg = resolve_config(opts);
  if (!ranks_flag.empty()) cfg.set("ranks", ranks_flag);
  const frid::EvalProtocol protocol = frid::eval_protocol_from(cfg);

  const auto queries = frid::read_fvec(query_path);
  const auto gallery = frid::read_fvec(gallery_path);
  if (queries.empty())
    throw frid::UsageError("eval: query file holds no descriptors");
  if (gallery.empty())
    throw frid::UsageError("eval: gallery file holds no descriptors");

  const frid::EvalReport report = frid::evaluate(queries, gallery, protocol);
  std::cout << frid::report_table(report);
  const std::string csv = frid::report_csv(report);
  std::cout << csv;
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    if (!os) throw frid::IoError("cannot write " + out_csv);
    os << csv;
    cfg.write(out_csv + ".run_config.txt");
  }
  return 0;
}

struct AblationRow {
  std::string axis, setting;
  double map = 0.0, rank1 = 0.0;
};

AblationRow run_ablation_cell(const frid::RunConfig& cfg,
                              const frid::Manifest& manifest,
                              const std::string& axis,
                              const std::string& setting, int eval_seq_len) {
  const int num_ids = frid::train_identity_count(manifest);
  frid::ModelConfig mc = frid::model_config_from(cfg, num_ids);
  frid::TrainConfig tc = frid::train_config_from(cfg);
  frid::ReidModel<Scalar> model(mc);
  frid::Adam<Scalar> optimizer(tc.adam);
  frid::train_model<Scalar>(model, optimizer, manifest, tc);

  const auto records = frid::split_records(manifest, "test");
  const auto descriptors = frid::extract_descriptors(
      model, manifest, records, eval_seq_len, tc.flow_cap, &std::cerr);
  const frid::EvalReport report =
      frid::evaluate(descriptors, descriptors, frid::eval_protocol_from(cfg));
  return {axis, setting, report.map, report.cmc_at(1)};
}

int cmd_ablate(const CommonOpts& opts, const std::string& manifest_path,
               const std::string& axis, const std::string& out_dir) {
  frid::RunConfig base = resolve_config(opts);
  frid::Manifest manifest = frid::read_manifest(manifest_path);
  require_dir(out_dir);
  base.write(fs::path(out_dir) / "run_config.txt");

  std::vector<AblationRow> rows;
  const int default_len = static_cast<int>(base.get_int("seq_len"));
  if (axis == "layer") {
    // attention-injection depth, mutual attention with temporal pooling
    for (int stage : {2, 3, 4, 5}) {
      frid::RunConfig cfg = base;
      cfg.set("mode", "mutual");
      cfg.set("agg", "avg");
      cfg.set("inject_stage", std::to_string(stage));
      rows.push_back(run_ablation_cell(cfg, manifest, "layer",
                                       "stage" + std::to_string(stage),
                                       default_len));
      std::cout << "layer " << stage << ": rank1 " << rows.back().rank1
                << " mAP " << rows.back().map << "\n";
    }
  } else if (axis == "seqlen") {
    // one model per mode, evaluated across sequence lengths
    struct ModeAgg {
      const char* mode;
      const char* agg;
    };
    for (const ModeAgg& ma : {ModeAgg{"none", "avg"},
                              ModeAgg{"gated", "weighted"},
                              ModeAgg{"mutual", "weighted"}}) {
      frid::RunConfig cfg = base;
      cfg.set("mode", ma.mode);
      cfg.set("agg", ma.agg);
      const int num_ids = frid::train_identity_count(manifest);
      frid::ReidModel<Scalar> model(frid::model_config_from(cfg, num_ids));
      frid::TrainConfig tc = frid::train_config_from(cfg);
      frid::Adam<Scalar> optimizer(tc.adam);
      frid::train_model<Scalar>(model, optimizer, manifest, tc);
      const auto records = frid::split_records(manifest, "test");
      for (int len : {2, 4, 6, 8, 16}) {
        const auto descriptors = frid::extract_descriptors(
            model, manifest, records, len, tc.flow_cap, &std::cerr);
        const frid::EvalReport report = frid::evaluate(
            descriptors, descriptors, frid::eval_protocol_from(cfg));
        rows.push_back({std::string(ma.mode) + "+" + ma.agg,
                        "len" + std::to_string(len), report.map,
                        report.cmc_at(1)});
        std::cout << ma.mode << "+" << ma.agg << " len " << len << ": rank1 "
                  << report.cmc_at(1) << " mAP " << report.map << "\n";
      }
    }
  } else if (axis == "module") {
    for (const char* mode : {"none", "gated", "mutual"})
      for (const char* agg : {"avg", "weighted"}) {
        frid::RunConfig cfg = base;
        cfg.set("mode", mode);
        cfg.set("agg", agg);
        rows.push_back(run_ablation_cell(
            cfg, manifest, "module", std::string(mode) + "+" + agg,
            default_len));
        std::cout << mode << "+" << agg << ": rank1 " << rows.back().rank1
                  << " mAP " << rows.back().map << "\n";
      }
  } else {
    throw frid::UsageError("ablate: --axis must be layer|seqlen|module");
  }

  const fs::path csv_path = fs::path(out_dir) / ("ablation_" + axis + ".csv");
  std::ofstream os(csv_path);
  if (!os) throw frid::IoError("cannot write " + csv_path.string());
  os << "axis,setting,mAP,rank1\n";
  os.precision(6);
  os << std::fixed;
  for (const AblationRow& r : rows)
    os << r.axis << "," << r.setting << "," << r.map << "," << r.rank1
       << "\n";
  std::cout << "wrote " << csv_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "frid: two-stream video person re-identification with flow-guided "
      "mutual attention"};
  app.require_subcommand(1);

  CommonOpts common;
  std::map<std::string, std::string> flag_values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path,
                    "key = value config file");
    sub->add_option("--workers", flag_values["workers"],
                    "worker threads (0 = hardware)");
  };
  auto push_override = [&](const std::string& key) {
    if (!flag_values[key].empty())
      common.overrides.push_back(key + "=" + flag_values[key]);
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render the synthetic benchmark");
  std::string gen_out = "dataset";
  add_common(gen);
  gen->add_option("--seed", flag_values["seed"], "dataset seed");
  gen->add_option("--ids", flag_values["ids"], "number of identities");
  gen->add_option("--clips", flag_values["clips_per_id"],
                  "clips per identity per camera");
  gen->add_option("--frames", flag_values["frames_per_clip"],
                  "frames per tracklet");
  gen->add_option("--occlusion", flag_values["occlusion_prob"],
                  "per-frame occlusion probability");
  gen->add_option("--out", gen_out, "output directory")->required();

  // flow
  auto* flow = app.add_subcommand(
      "flow", "estimate dense optical flow for every clip");
  std::string flow_manifest;
  add_common(flow);
  flow->add_option("--manifest", flow_manifest, "dataset manifest")
      ->required();
  flow->add_option("--alpha", flag_values["flow_alpha"],
                   "smoothness weight");
  flow->add_option("--iters", flag_values["flow_iters"], "Jacobi sweeps");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_manifest, train_out = "run";
  add_common(train);
  train->add_option("--manifest", train_manifest, "dataset manifest")
      ->required();
  train->add_option("--out", train_out, "output directory");
  train->add_option("--mode", flag_values["mode"], "mutual|gated|none");
  train->add_option("--agg", flag_values["agg"], "weighted|avg|tattn");
  train->add_option("--inject-stage", flag_values["inject_stage"],
                    "attention injection stage (1-based)");
  train->add_option("--seq-len", flag_values["seq_len"],
                    "training sequence length");
  train->add_option("--epochs", flag_values["epochs"], "training epochs");
  train->add_option("--seed", flag_values["train_seed"], "training seed");
  train->add_option("--lr", flag_values["lr"], "learning rate");

  // extract
  auto* extract =
      app.add_subcommand("extract", "extract clip descriptors to a .fvec");
  std::string ex_checkpoint, ex_manifest, ex_split = "test",
              ex_out = "features.fvec", ex_dump;
  int ex_seq_len = 0;
  add_common(extract);
  extract->add_option("--checkpoint", ex_checkpoint, "model checkpoint")
      ->required();
  extract->add_option("--manifest", ex_manifest, "dataset manifest")
      ->required();
  extract->add_option("--split", ex_split, "train|test|query|gallery");
  extract->add_option("--out", ex_out, "output .fvec path");
  extract->add_option("--seq-len", ex_seq_len,
                      "frames per clip at evaluation (evenly spaced)");
  extract->add_option("--dump-attention", ex_dump,
                      "directory for per-frame attention PGMs");

  // eval
  auto* eval = app.add_subcommand("eval", "CMC/mAP over query and gallery");
  std::string ev_query, ev_gallery, ev_ranks, ev_out = "eval_report.csv";
  add_common(eval);
  eval->add_option("--query", ev_query, "query .fvec")->required();
  eval->add_option("--gallery", ev_gallery, "gallery .fvec")->required();
  eval->add_option("--ranks", ev_ranks, "comma-separated CMC ranks");
  eval->add_option("--out", ev_out, "CSV report path");
  eval->add_option("--distance", flag_values["distance"],
                   "euclidean|cosine");

  // ablate
  auto* ablate = app.add_subcommand(
      "ablate", "run a study axis and emit a combined CSV");
  std::string ab_manifest, ab_axis, ab_out = "ablation";
  add_common(ablate);
  ablate->add_option("--manifest", ab_manifest, "dataset manifest")
      ->required();
  ablate->add_option("--axis", ab_axis, "layer|seqlen|module")->required();
  ablate->add_option("--out", ab_out, "output directory");
  ablate->add_option("--epochs", flag_values["epochs"], "training epochs");
  ablate->add_option("--seed", flag_values["train_seed"], "training seed");

  try {
    app.parse(argc, argv);
    for (auto& [key, value] : flag_values) push_override(key);

    if (gen->parsed()) return cmd_gen_data(common, gen_out);
    if (flow->parsed()) return cmd_flow(common, flow_manifest);
    if (train->parsed()) return cmd_train(common, train_manifest, train_out);
    if (extract->parsed())
      return cmd_extract(common, ex_checkpoint, ex_manifest, ex_split, ex_out,
                         ex_seq_len, ex_dump);
    if (eval->parsed())
      return cmd_eval(common, ev_query, ev_gallery, ev_ranks, ev_out);
    if (ablate->parsed()) return cmd_ablate(common, ab_manifest, ab_axis,
                                            ab_out);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const frid::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const frid::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
