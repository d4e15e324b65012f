// qisbench: synthetic dataset generation, pretraining, target training,
// evaluation and reporting for X-ray to BMD-map estimation.

#include <torch/torch.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qis/bench/data.hpp"
#include "qis/bench/evaluate.hpp"
#include "qis/bench/experiment.hpp"
#include "qis/bench/folds.hpp"
#include "qis/bench/reporting.hpp"
#include "qis/error.hpp"
#include "qis/log.hpp"
#include "qis/nets/checkpoint.hpp"
#include "qis/phantom/dataset.hpp"
#include "qis/pretrain/trainer.hpp"
#include "qis/target/trainer.hpp"

namespace fs = std::filesystem;
using namespace qis;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCellFailures = 3;

struct Common {
  std::string config;
  std::string profile = "desk";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string data = "data";
  std::string out = "out";
  int resolution = 0;
  int fold = 0;
  std::string pretrain = "P0";
  double bmd_threshold = -1;
  int threads = 0;
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read config " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + p.string() + ": " + e.what());
  }
}

/// Profile defaults, then the config file, then command-line flags.
bench::ExperimentConfig experiment_config(const Common& c) {
  nlohmann::json j = nlohmann::json::object();
  if (!c.config.empty()) j = read_json(c.config);
  if (!j.contains("profile")) j["profile"] = c.profile;
  auto cfg = bench::ExperimentConfig::from_json(j);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.bmd_threshold >= 0) cfg.bmd_threshold = c.bmd_threshold;
  return cfg;
}

int resolution_of(const Common& c, const bench::ExperimentConfig& cfg) {
  if (c.resolution > 0) return c.resolution;
  return cfg.profile == "paper" ? 256 : 64;
}

std::vector<std::pair<int, std::string>> matrix_rows(const nlohmann::json& j) {
  std::vector<std::pair<int, std::string>> rows;
  for (const auto& r : j) rows.emplace_back(r.at(0).get<int>(), r.at(1).get<std::string>());
  return rows;
}

void print_aggregates(const metrics::MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
  std::cout << r.key.resolution << " " << r.key.pretraining << " fold " << r.key.fold << ": PCC " << opt(r.aggregates.pcc)
            << " ICC " << opt(r.aggregates.icc) << " mAE " << bench::format_fixed3(r.aggregates.mae) << " mPSNR "
            << bench::format_sig3(r.aggregates.psnr) << " mSSIM_roi " << bench::format_fixed3(r.aggregates.ssim_roi)
            << " (" << r.aggregates.scans << " scans)\n";
}

int cmd_synth(const Common& c, int patients) {
  auto profile = phantom::DatasetProfile::by_name(c.profile);
  const int n = patients > 0 ? patients : profile.default_patients;
  auto m = phantom::build_dataset(n, c.out, c.seed, profile);
  std::cout << "wrote " << m.patients.size() << " patients, " << m.scans.size() << " scans to " << c.out << "\n";
  return kExitOk;
}

int cmd_pretrain(const Common& c) {
  const auto cfg = experiment_config(c);
  const auto reader = bench::DatasetReader::open(c.data);
  const auto plan = bench::make_folds(reader.manifest(), cfg.folds, cfg.seed);
  const int res = resolution_of(c, cfg);
  const auto stages = cfg.stages_for(c.pretrain, res);
  bool bones = false;
  for (const auto& s : stages) bones = bones || s.kind == pretrain::PretrainKind::Pbd;
  const auto data = reader.pretrain_data(plan.train_patients(c.fold), res, bones);
  auto r = pretrain::run_cascade(stages, data, cfg.encoder(), cfg.seed);
  fs::create_directories(c.out);
  nets::save_checkpoint(r.checkpoint, fs::path(c.out) / "checkpoint.ckpt");
  std::ofstream(fs::path(c.out) / "log.json")
      << nlohmann::json{{"epoch_loss", r.epoch_loss}, {"steps", r.steps}, {"skipped_batches", r.skipped_batches}}.dump(2)
      << "\n";
  std::cout << "pretraining " << c.pretrain << " fold " << c.fold << ": " << r.steps << " steps, checkpoint in "
            << c.out << "\n";
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& init) {
  const auto cfg = experiment_config(c);
  const auto reader = bench::DatasetReader::open(c.data);
  const auto plan = bench::make_folds(reader.manifest(), cfg.folds, cfg.seed);
  auto t = cfg.target;
  t.resolution = resolution_of(c, cfg);
  t.generator = nets::GeneratorSpec::for_encoder(cfg.encoder());
  t.seed = cfg.seed;
  t.normalization_scale = reader.manifest().pf_scale;
  std::optional<nets::Checkpoint> pre;
  if (!init.empty()) {
    pre = nets::load_checkpoint(init);
    t.pretrained = init;
  }
  const auto data = reader.target_data(plan.train_patients(c.fold), t.resolution);
  auto r = target::train_target(t, data, pre ? &*pre : nullptr, c.out);
  std::cout << "target training fold " << c.fold << ": final generator loss " << r.epoch_g_total.back() << ", run in "
            << c.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const Common& c, const std::string& run) {
  const auto cfg = experiment_config(c);
  const auto reader = bench::DatasetReader::open(c.data);
  const auto plan = bench::make_folds(reader.manifest(), cfg.folds, cfg.seed);
  bench::EvalOptions opts;
  opts.bmd_threshold = cfg.bmd_threshold;
  const auto ckpt = nets::load_checkpoint(fs::path(run) / "final.ckpt");
  metrics::ReportKey key{ckpt.meta.value("resolution", 0), c.pretrain, c.fold};
  auto report = bench::evaluate_run(run, reader, plan.test_patients(c.fold), key, opts);
  print_aggregates(report);
  return kExitOk;
}

std::vector<metrics::MetricsReport> collect_reports(const fs::path& root) {
  std::vector<metrics::MetricsReport> pooled, folds;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.path().filename() != "report.json") continue;
    if (e.path().string().find("/cache/") != std::string::npos) continue;
    auto r = metrics::read_report(e.path().parent_path());
    (r.key.fold < 0 ? pooled : folds).push_back(std::move(r));
  }
  auto& chosen = pooled.empty() ? folds : pooled;
  std::sort(chosen.begin(), chosen.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return chosen;
}

int cmd_report(const Common& c, const std::string& in, const std::string& rows_json) {
  auto reports = collect_reports(in);
  std::vector<std::pair<int, std::string>> requested;
  if (!rows_json.empty()) requested = matrix_rows(nlohmann::json::parse(rows_json));
  auto table = bench::emit_table(reports, requested);
  bench::write_table(table, c.out);
  bench::emit_scatter(reports, fs::path(c.out) / "scatter");
  std::cout << table.to_text();
  return kExitOk;
}

int cmd_error_maps(const Common& c, const std::string& run, const std::vector<std::string>& scans) {
  const auto cfg = experiment_config(c);
  const auto reader = bench::DatasetReader::open(c.data);
  const auto plan = bench::make_folds(reader.manifest(), cfg.folds, cfg.seed);
  auto written = bench::emit_error_maps(run, reader, plan.test_patients(c.fold), scans, c.out);
  std::cout << "wrote " << written.size() << " error maps to " << c.out << "\n";
  return kExitOk;
}

int cmd_run(const Common& c) {
  const auto cfg = experiment_config(c);
  const auto reader = bench::DatasetReader::open(c.data);
  bench::RunMatrix matrix;
  nlohmann::json j = c.config.empty() ? nlohmann::json::object() : read_json(c.config);
  if (j.contains("matrix"))
    matrix = bench::RunMatrix::from_rows(matrix_rows(j["matrix"]), cfg.folds);
  else if (c.resolution > 0 || c.pretrain != "P0")
    matrix = bench::RunMatrix::from_rows({{resolution_of(c, cfg), c.pretrain}}, cfg.folds);
  else
    matrix = cfg.profile == "paper" ? bench::RunMatrix::paper(cfg.folds) : bench::RunMatrix::desk(cfg.folds);

  auto result = bench::run_experiment(cfg, matrix, reader, c.out);
  auto table = bench::emit_table(result.pooled, matrix.rows());
  bench::write_table(table, c.out);
  bench::emit_scatter(result.pooled, fs::path(c.out) / "scatter");
  std::cout << table.to_text();
  std::cout << "pretraining: " << result.pretrain_trained << " trained, " << result.pretrain_reused
            << " reused; target: " << result.target_trained << " trained, " << result.target_reused << " reused\n";
  for (const auto& f : result.failures)
    std::cerr << "failed: " << f.cell.resolution << " " << f.cell.pretraining << " fold " << f.cell.fold << ": "
              << f.message << "\n";
  return result.failures.empty() ? kExitOk : kExitCellFailures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QIS benchmark: X-ray to BMD map estimation with self-supervised pretraining"};
  app.require_subcommand(1);
  Common c;
  int patients = 0;
  std::string init, run, in, rows_json;
  std::vector<std::string> scans;

  auto add_common = [&](CLI::App* sub, bool data, bool cell) {
    sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--profile", c.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { c.seed = s; c.seed_set = true; },
                                            "experiment seed");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--threads", c.threads, "torch intra-op threads (0: library default)");
    if (data) sub->add_option("--data", c.data, "dataset directory");
    if (cell) {
      sub->add_option("--fold", c.fold, "fold index");
      sub->add_option("--resolution", c.resolution, "model resolution R (inputs are R/2 x R)");
      sub->add_option("--pretrain", c.pretrain, "pretraining kind, or comma list for a cascade");
      sub->add_option("--bmd-threshold", c.bmd_threshold, "BMD region threshold in g/cm2");
    }
  };

  auto* synth = app.add_subcommand("synth-data", "build a synthetic phantom dataset");
  add_common(synth, false, false);
  synth->add_option("--patients", patients, "patient count (default: profile)");

  auto* pre = app.add_subcommand("pretrain", "run pretraining on one fold's training patients");
  add_common(pre, true, true);

  auto* train = app.add_subcommand("train", "train the target generator on one fold");
  add_common(train, true, true);
  train->add_option("--init", init, "pretraining checkpoint to initialise the encoder from");

  auto* eval = app.add_subcommand("evaluate", "evaluate a finished target run on its test fold");
  add_common(eval, true, true);
  eval->add_option("--run", run, "target run directory")->required();

  auto* report = app.add_subcommand("report", "build the summary table and scatter plots from stored reports");
  add_common(report, false, false);
  report->add_option("--in", in, "experiment output directory")->required();
  report->add_option("--rows", rows_json, "requested rows as JSON, e.g. [[64,\"P0\"],[64,\"Pbd\"]]");

  auto* maps = app.add_subcommand("error-maps", "write signed error maps for a target run");
  add_common(maps, true, true);
  maps->add_option("--run", run, "target run directory")->required();
  maps->add_option("--scan", scans, "scan ids (default: all test scans of the fold)");

  auto* matrix = app.add_subcommand("run", "run a full cross-validated experiment matrix");
  add_common(matrix, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (c.threads > 0) torch::set_num_threads(c.threads);

  try {
    if (*synth) return cmd_synth(c, patients);
    if (*pre) return cmd_pretrain(c);
    if (*train) return cmd_train(c, init);
    if (*eval) return cmd_evaluate(c, run);
    if (*report) return cmd_report(c, in, rows_json);
    if (*maps) return cmd_error_maps(c, run, scans);
    if (*matrix) return cmd_run(c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}
