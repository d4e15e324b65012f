#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "qis/imaging/patches.hpp"
#include "qis/nets/checkpoint.hpp"
#include "qis/nets/specs.hpp"
#include "qis/pretrain/task.hpp"

namespace qis::pretrain {

/// In-memory pretraining pool (both body sides). All tensors share the first dim N.
struct PretrainData {
  torch::Tensor xrays;     // (N, 1, H, W) float32, intensities in [0, 1]
  torch::Tensor bones;     // (N, 1, H, W) float32 normalized bone maps; undefined when absent
  torch::Tensor poses;     // (N) int64 pose class 0..4
  torch::Tensor patients;  // (N) int64 patient index
  torch::Tensor info;      // (N, 4) float64: age, height cm, weight kg, sex (1 = male)

  int64_t size() const { return xrays.defined() ? xrays.size(0) : 0; }
  /// Throws ConfigError when `kind` needs data that is missing.
  void check_for(PretrainKind kind) const;
};

/// Z-score statistics for the patient-info regression targets.
struct InfoStats {
  double mean[3] = {0, 0, 0};
  double std[3] = {1, 1, 1};

  static InfoStats from(const torch::Tensor& info);
  /// (N, 4) raw -> normalized age/height/weight, sex unchanged.
  torch::Tensor normalize(const torch::Tensor& info) const;
  nlohmann::json to_json() const;
};

nets::HeadSpec head_for(const PretrainTask& task, const nets::EncoderSpec& encoder, int input_h, int input_w);

/// Rearranges the patches of each image: output cell j of sample b holds
/// input patch perms[b][j].
torch::Tensor shuffle_patch_tensor(const torch::Tensor& x, const imaging::PatchGrid& grid,
                                   const std::vector<std::vector<int>>& perms);

struct PretrainResult {
  nets::Checkpoint checkpoint;              // encoder + head, meta carries task and seed
  std::vector<double> epoch_loss;           // mean training loss per epoch
  std::vector<nets::TransferReport> transfers;
  std::string initial_encoder_checksum;     // encoder state before the first step
  int64_t steps = 0;
  int64_t skipped_batches = 0;              // contrastive batches without positives
};

/// Trains encoder + task head. When `init` is given its encoder is
/// transferred first. P0 returns the seed-deterministic fresh encoder.
PretrainResult run_pretraining(const PretrainTask& task, const PretrainData& data, const nets::EncoderSpec& encoder,
                               std::uint64_t seed, const nets::Checkpoint* init = nullptr);

/// Stage i+1 starts from stage i's encoder; heads are rebuilt per stage.
/// Stage 0 uses `seed` itself, so a one-stage cascade equals run_pretraining.
/// The result's transfers hold one report per transfer, in order.
PretrainResult run_cascade(const std::vector<PretrainTask>& stages, const PretrainData& data,
                           const nets::EncoderSpec& encoder, std::uint64_t seed);

/// Rebuilds the encoder + head network stored by run_pretraining.
nets::PretrainNet restore_pretrain_net(const nets::Checkpoint& ckpt);

/// Fraction of cells whose arg-max patch index is correct.
double patch_index_accuracy(const torch::Tensor& logits, const torch::Tensor& labels);

}  // namespace qis::pretrain
