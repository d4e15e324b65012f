#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qis/nets/training.hpp"
#include "qis/pretrain/augment.hpp"

namespace qis::pretrain {

enum class PretrainKind { P0, Psr, Pmp, Pps, Psc, Ppac, Ppoc, Ppc, Ppi, Pbd, PmpBd };

std::string to_string(PretrainKind kind);
/// Accepts the names produced by to_string ("Pmp", "PmpBd", ...).
PretrainKind pretrain_kind_from_string(const std::string& s);
/// Single-task kinds a kind expands to: PmpBd -> {Pmp, Pbd}, others -> {kind}.
std::vector<PretrainKind> expand_kind(PretrainKind kind);

bool is_contrastive(PretrainKind kind);
bool uses_grid(PretrainKind kind);

struct GridConfig {
  int rows = 0;
  int cols = 0;
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct MaskConfig {
  double ratio = 0.75;
  bool masked_only_loss = true;  // false: loss over every pixel
  friend bool operator==(const MaskConfig&, const MaskConfig&) = default;
};

struct ContrastiveConfig {
  double temperature = 0.2;
  int queue_size = 4096;
  int feature_dim = 2048;
  double momentum = 0.999;
  AugmentOptions augment;
  friend bool operator==(const ContrastiveConfig& a, const ContrastiveConfig& b) {
    return a.temperature == b.temperature && a.queue_size == b.queue_size && a.feature_dim == b.feature_dim &&
           a.momentum == b.momentum && a.augment.min_crop_area == b.augment.min_crop_area &&
           a.augment.intensity_jitter == b.augment.intensity_jitter &&
           a.augment.max_rotation_deg == b.augment.max_rotation_deg;
  }
};

/// One pretraining task. Optional blocks are present exactly for the kinds
/// that need them: grid for Pmp/Pps, mask for Pmp, contrastive for Psc/Ppac/Ppoc.
struct PretrainTask {
  PretrainKind kind = PretrainKind::P0;
  std::optional<GridConfig> grid;
  std::optional<MaskConfig> mask;
  std::optional<ContrastiveConfig> contrastive;
  int epochs = 1;
  int batch_size = 8;
  nets::OptimConfig optim;
  /// Defaults for a single-task kind. profile "paper" uses the full-length
  /// schedules and the batch size for `resolution`; "desk" is a short CPU run.
  /// epochs and the batch size for `resolution`; "desk" is a short CPU run.
  static PretrainTask defaults(PretrainKind kind, const std::string& profile = "paper", int resolution = 256);

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static PretrainTask from_json(const nlohmann::json& j);

  friend bool operator==(const PretrainTask&, const PretrainTask&) = default;
};

/// Paper target/pretraining batch size for a resolution: 8, 4, 2 for 256, 512, 1024.
int paper_batch_size(int resolution);

}  // namespace qis::pretrain
