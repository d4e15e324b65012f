#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qis/bench/data.hpp"
#include "qis/bench/evaluate.hpp"
#include "qis/bench/folds.hpp"
#include "qis/metrics/report.hpp"
#include "qis/pretrain/task.hpp"
#include "qis/target/trainer.hpp"

namespace qis::bench {

/// "P0", "PmpBd" or a comma-separated cascade such as "Pmp,Pbd".
std::vector<pretrain::PretrainKind> parse_pretraining(const std::string& label);

struct Cell {
  int resolution = 64;
  std::string pretraining = "P0";
  int fold = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct RunMatrix {
  std::vector<Cell> cells;

  /// Every (resolution, pretraining) row crossed with folds 0..folds-1.
  static RunMatrix from_rows(const std::vector<std::pair<int, std::string>>& rows, int folds);
  /// The full 16-row matrix: 11 strategies at 256, 3 at 512, 2 at 1024.
  static RunMatrix paper(int folds = 4);
  /// {P0, Pbd, PmpBd} at R = 64.
  static RunMatrix desk(int folds = 4);

  /// Distinct (resolution, pretraining) rows in first-seen order.
  std::vector<std::pair<int, std::string>> rows() const;
};

struct ExperimentConfig {
  std::string profile = "desk";
  int folds = 4;
  std::uint64_t seed = 0;
  std::string encoder_family;      // empty: "desk" or "paper" by profile
  double bmd_threshold = 1e-3;
  int pretrain_epochs = 0;         // 0: per-task defaults
  std::optional<double> pretrain_lr;
  target::TargetConfig target;     // template; resolution, seed and scale are set per cell

  static ExperimentConfig defaults(const std::string& profile);
  nets::EncoderSpec encoder() const;
  /// Pretraining task list for a cell, with overrides applied.
  std::vector<pretrain::PretrainTask> stages_for(const std::string& pretraining, int resolution) const;

  nlohmann::json to_json() const;
  /// Missing keys keep the profile defaults. Throws ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct CellFailure {
  Cell cell;
  std::string message;
};

struct ExperimentResult {
  std::vector<metrics::MetricsReport> fold_reports;
  std::vector<metrics::MetricsReport> pooled;  // one per matrix row
  int pretrain_trained = 0, pretrain_reused = 0;
  int target_trained = 0, target_reused = 0;
  std::vector<CellFailure> failures;
  FoldPlan plan;
};

/// Cache root: $QISBENCH_CACHE when set, else out_root/cache.
std::filesystem::path cache_root(const std::filesystem::path& out_root);

/// Content hashes of a cell's artifacts.
std::string pretrain_key(const ExperimentConfig& cfg, const DatasetReader& reader, const FoldPlan& plan,
                         const Cell& cell);
std::string target_key(const ExperimentConfig& cfg, const DatasetReader& reader, const FoldPlan& plan,
                       const Cell& cell);

/// Runs or reuses pretraining and target training for every cell, evaluates
/// the test folds, and writes per-fold and pooled reports under out_root.
/// A failing cell is recorded and the matrix continues.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunMatrix& matrix, const DatasetReader& reader,
                                const std::filesystem::path& out_root);

}  // namespace qis::bench
