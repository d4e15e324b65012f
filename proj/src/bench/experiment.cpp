#include "qis/bench/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "qis/error.hpp"
#include "qis/hash.hpp"
#include "qis/log.hpp"
#include "qis/nets/checkpoint.hpp"
#include "qis/pretrain/trainer.hpp"
#include "qis/rng.hpp"

namespace qis::bench {

namespace fs = std::filesystem;
using pretrain::PretrainKind;

std::vector<PretrainKind> parse_pretraining(const std::string& label) {
  std::vector<PretrainKind> out;
  std::stringstream ss(label);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part.erase(std::remove_if(part.begin(), part.end(), ::isspace), part.end());
    if (part.empty()) throw ConfigError("empty pretraining kind in '" + label + "'");
    for (auto k : pretrain::expand_kind(pretrain::pretrain_kind_from_string(part))) out.push_back(k);
  }
  if (out.empty()) throw ConfigError("no pretraining kind given");
  if (out.size() > 1 && std::find(out.begin(), out.end(), PretrainKind::P0) != out.end())
    throw ConfigError("P0 cannot be part of a cascade");
  return out;
}

RunMatrix RunMatrix::from_rows(const std::vector<std::pair<int, std::string>>& rows, int folds) {
  if (folds < 1) throw ConfigError("fold count must be positive");
  RunMatrix m;
  for (const auto& [res, label] : rows) {
    parse_pretraining(label);
    for (int f = 0; f < folds; ++f) m.cells.push_back({res, label, f});
  }
  return m;
}

RunMatrix RunMatrix::paper(int folds) {
  std::vector<std::pair<int, std::string>> rows;
  for (const char* k : {"P0", "Psr", "Pmp", "Pps", "Psc", "Ppac", "Ppoc", "Ppc", "Ppi", "Pbd", "PmpBd"})
    rows.emplace_back(256, k);
  for (const char* k : {"P0", "Pbd", "PmpBd"}) rows.emplace_back(512, k);
  for (const char* k : {"P0", "PmpBd"}) rows.emplace_back(1024, k);
  return from_rows(rows, folds);
}

RunMatrix RunMatrix::desk(int folds) { return from_rows({{64, "P0"}, {64, "Pbd"}, {64, "PmpBd"}}, folds); }

std::vector<std::pair<int, std::string>> RunMatrix::rows() const {
  std::vector<std::pair<int, std::string>> out;
  for (const auto& c : cells) {
    std::pair<int, std::string> row{c.resolution, c.pretraining};
    if (std::find(out.begin(), out.end(), row) == out.end()) out.push_back(row);
  }
  return out;
}

ExperimentConfig ExperimentConfig::defaults(const std::string& profile) {
  ExperimentConfig c;
  c.profile = profile;
  c.target = target::TargetConfig::defaults(profile);
  return c;
}

nets::EncoderSpec ExperimentConfig::encoder() const {
  if (!encoder_family.empty()) return nets::EncoderSpec::by_family(encoder_family);
  return nets::EncoderSpec::by_family(profile == "paper" ? "paper" : "desk");
}

std::vector<pretrain::PretrainTask> ExperimentConfig::stages_for(const std::string& pretraining, int resolution) const {
  std::vector<pretrain::PretrainTask> out;
  for (auto k : parse_pretraining(pretraining)) {
    auto t = pretrain::PretrainTask::defaults(k, profile, resolution);
    if (pretrain_epochs > 0 && k != PretrainKind::P0) t.epochs = pretrain_epochs;
    if (pretrain_lr) t.optim.lr = *pretrain_lr;
    out.push_back(t);
  }
  return out;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"profile", profile},
                   {"folds", folds},
                   {"seed", seed},
                   {"encoder_family", encoder().family},
                   {"bmd_threshold", bmd_threshold},
                   {"pretrain_epochs", pretrain_epochs},
                   {"target", target.to_json()}};
  if (pretrain_lr) j["pretrain_lr"] = *pretrain_lr;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  try {
    auto c = defaults(j.value("profile", std::string("desk")));
    c.folds = j.value("folds", c.folds);
    c.seed = j.value("seed", c.seed);
    c.encoder_family = j.value("encoder_family", c.encoder_family);
    c.bmd_threshold = j.value("bmd_threshold", c.bmd_threshold);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    if (j.contains("pretrain_lr")) c.pretrain_lr = j["pretrain_lr"].get<double>();
    if (j.contains("target")) {
      auto merged = c.target.to_json();
      merged.merge_patch(j["target"]);
      c.target = target::TargetConfig::from_json(merged);
    }
    if (c.folds < 2) throw ConfigError("at least two folds are needed");
    if (!(c.bmd_threshold >= 0)) throw ConfigError("BMD threshold must be non-negative");
    c.encoder();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

fs::path cache_root(const fs::path& out_root) {
  if (const char* env = std::getenv("QISBENCH_CACHE"); env != nullptr && *env != '\0') return env;
  return out_root / "cache";
}

namespace {

nlohmann::json dataset_identity(const DatasetReader& reader) {
  const auto& m = reader.manifest();
  return {{"seed", m.seed}, {"profile", m.profile}, {"patients", m.patients.size()}, {"scans", m.scans.size()}};
}

std::uint64_t cell_seed(const ExperimentConfig& cfg, const std::string& what, const Cell& cell) {
  return Rng::derive(cfg.seed, what + ":" + std::to_string(cell.resolution) + ":" + std::to_string(cell.fold)).next();
}

target::TargetConfig target_config_for(const ExperimentConfig& cfg, const DatasetReader& reader, const Cell& cell) {
  auto t = cfg.target;
  t.resolution = cell.resolution;
  if (cfg.profile == "paper") t.batch_size = pretrain::paper_batch_size(cell.resolution);
  t.generator = nets::GeneratorSpec::for_encoder(cfg.encoder());
  t.seed = cell_seed(cfg, "target", cell);
  t.normalization_scale = reader.manifest().pf_scale;
  t.pretrained.clear();
  return t;
}

bool is_p0(const std::string& label) { return parse_pretraining(label) == std::vector<PretrainKind>{PretrainKind::P0}; }

/// Moves a finished temp directory into place; a concurrent winner is kept.
void publish(const fs::path& tmp, const fs::path& final_dir) {
  std::error_code ec;
  fs::rename(tmp, final_dir, ec);
  if (ec) {
    fs::remove_all(tmp);
    if (!fs::exists(final_dir)) throw IoError("cannot publish " + final_dir.string() + ": " + ec.message());
  }
}

fs::path temp_dir(const fs::path& final_dir) {
  return final_dir.string() + ".tmp-" + std::to_string(::getpid());
}

}  // namespace

std::string pretrain_key(const ExperimentConfig& cfg, const DatasetReader& reader, const FoldPlan& plan,
                         const Cell& cell) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& t : cfg.stages_for(cell.pretraining, cell.resolution)) stages.push_back(t.to_json());
  nlohmann::json j{{"artifact", "pretrain"},
                   {"stages", stages},
                   {"encoder", cfg.encoder().to_json()},
                   {"resolution", cell.resolution},
                   {"train_patients", plan.train_patients(cell.fold)},
                   {"dataset", dataset_identity(reader)},
                   {"seed", cell_seed(cfg, "pretrain:" + cell.pretraining, cell)}};
  return sha256_hex(j.dump());
}

std::string target_key(const ExperimentConfig& cfg, const DatasetReader& reader, const FoldPlan& plan,
                       const Cell& cell) {
  nlohmann::json j{{"artifact", "target"},
                   {"target", target_config_for(cfg, reader, cell).to_json()},
                   {"pretrain", is_p0(cell.pretraining) ? std::string() : pretrain_key(cfg, reader, plan, cell)},
                   {"train_patients", plan.train_patients(cell.fold)},
                   {"dataset", dataset_identity(reader)}};
  return sha256_hex(j.dump());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunMatrix& matrix, const DatasetReader& reader,
                                const fs::path& out_root) {
  ExperimentResult result;
  result.plan = make_folds(reader.manifest(), cfg.folds, cfg.seed);
  const fs::path cache = cache_root(out_root);
  fs::create_directories(cache / "pretrain");
  fs::create_directories(cache / "target");
  fs::create_directories(out_root);
  std::ofstream(out_root / "experiment.json")
      << nlohmann::json{{"config", cfg.to_json()}, {"folds", result.plan.to_json()}}.dump(2) << '\n';

  const EvalOptions eval{cfg.bmd_threshold};
  std::map<std::pair<int, std::string>, std::vector<metrics::MetricsReport>> by_row;

  for (const auto& cell : matrix.cells) {
    const std::string where =
        std::to_string(cell.resolution) + "/" + cell.pretraining + "/fold" + std::to_string(cell.fold);
    try {
      if (cell.fold < 0 || cell.fold >= cfg.folds) throw ConfigError("fold out of range");
      const auto train = result.plan.train_patients(cell.fold);

      // Pretraining artifact.
      std::optional<nets::Checkpoint> pre;
      if (!is_p0(cell.pretraining)) {
        const auto key = pretrain_key(cfg, reader, result.plan, cell);
        const fs::path dir = cache / "pretrain" / key;
        if (fs::exists(dir / "checkpoint.ckpt")) {
          ++result.pretrain_reused;
        } else {
          log_info("pretraining " + where);
          const auto stages = cfg.stages_for(cell.pretraining, cell.resolution);
          bool bones = false;
          for (const auto& s : stages) bones = bones || s.kind == PretrainKind::Pbd;
          const auto data = reader.pretrain_data(train, cell.resolution, bones, "pretrain");
          auto r = pretrain::run_cascade(stages, data, cfg.encoder(), cell_seed(cfg, "pretrain:" + cell.pretraining, cell));
          const fs::path tmp = temp_dir(dir);
          fs::create_directories(tmp);
          nets::save_checkpoint(r.checkpoint, tmp / "checkpoint.ckpt");
          nlohmann::json log{{"epoch_loss", r.epoch_loss}, {"steps", r.steps}, {"skipped_batches", r.skipped_batches},
                             {"initial_encoder_checksum", r.initial_encoder_checksum}};
          for (const auto& t : r.transfers) log["transfers"].push_back({{"loaded", t.loaded.size()}, {"checksum", t.checksum}});
          std::ofstream(tmp / "log.json") << log.dump(2) << '\n';
          publish(tmp, dir);
          ++result.pretrain_trained;
        }
        pre = nets::load_checkpoint(dir / "checkpoint.ckpt");
      }

      // Target run.
      const auto key = target_key(cfg, reader, result.plan, cell);
      const fs::path run_dir = cache / "target" / key;
      if (fs::exists(run_dir / "final.ckpt")) {
        ++result.target_reused;
      } else {
        log_info("target training " + where);
        auto tcfg = target_config_for(cfg, reader, cell);
        if (pre) tcfg.pretrained = (cache / "pretrain" / pretrain_key(cfg, reader, result.plan, cell) / "checkpoint.ckpt").string();
        const auto data = reader.target_data(train, cell.resolution, "target");
        const fs::path tmp = temp_dir(run_dir);
        fs::remove_all(tmp);
        target::train_target(tcfg, data, pre ? &*pre : nullptr, tmp);
        publish(tmp, run_dir);
        ++result.target_trained;
      }

      // Evaluation (cheap, always redone so reports follow the eval options).
      metrics::ReportKey rk{cell.resolution, cell.pretraining, cell.fold};
      auto report = evaluate_run(run_dir, reader, result.plan.test_patients(cell.fold), rk, eval);
      report.provenance["target_key"] = key;
      report.provenance["experiment_seed"] = cfg.seed;
      const fs::path cell_dir = out_root / std::to_string(cell.resolution) / cell.pretraining / ("fold" + std::to_string(cell.fold));
      metrics::write_report(report, cell_dir);
      by_row[{cell.resolution, cell.pretraining}].push_back(report);
      result.fold_reports.push_back(std::move(report));
    } catch (const std::exception& e) {
      log_info("cell " + where + " failed: " + e.what());
      result.failures.push_back({cell, e.what()});
    }
  }

  for (const auto& row : matrix.rows()) {
    auto it = by_row.find(row);
    if (it == by_row.end()) continue;
    auto pooled = pool_reports(it->second, eval.icc_variant);
    metrics::write_report(pooled, out_root / std::to_string(row.first) / row.second / "pooled");
    result.pooled.push_back(std::move(pooled));
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : result.failures)
    failures.push_back({{"resolution", f.cell.resolution}, {"pretraining", f.cell.pretraining}, {"fold", f.cell.fold},
                        {"message", f.message}});
  std::ofstream(out_root / "failures.json") << failures.dump(2) << '\n';
  return result;
}

}  // namespace qis::bench
