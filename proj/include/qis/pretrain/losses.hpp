#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "qis/imaging/patches.hpp"

namespace qis::pretrain {

/// Mean over batch and pixels of (recon - input)^2. ShapeError on mismatch.
torch::Tensor loss_self_reconstruction(const torch::Tensor& recon, const torch::Tensor& input);

/// (B, 1, H, W) 0/1 mask, 1 inside the listed patches of each sample.
torch::Tensor patch_mask(const imaging::PatchGrid& grid, const std::vector<std::vector<int>>& masked_indices,
                         torch::ScalarType dtype = torch::kFloat32);

/// Squared error averaged over the pixels of the masked patches only.
/// ConfigError when no patch is masked.
torch::Tensor loss_masked_patch(const torch::Tensor& pred, const torch::Tensor& target,
                                const std::vector<std::vector<int>>& masked_indices,
                                const imaging::PatchGrid& grid);
torch::Tensor loss_masked_patch(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask);

/// logits (B, K, K): row j scores which original patch sits in cell j.
/// labels (B, K) int64, each row a permutation of 0..K-1 (else LabelError).
/// Cross-entropy summed over the K cells, averaged over the batch.
torch::Tensor loss_patch_shuffle(const torch::Tensor& logits, const torch::Tensor& labels);

/// q, k_pos (B, d) unit rows (NormError beyond 1e-3); queue (N, d), N may be 0.
torch::Tensor loss_info_nce(const torch::Tensor& q, const torch::Tensor& k_pos, const torch::Tensor& queue, double tau);

/// Supervised contrastive loss against labelled queue keys. Queries with no
/// positive in the queue are skipped; BatchSkipError when none remain.
torch::Tensor loss_supcon(const torch::Tensor& q, const torch::Tensor& queue, const torch::Tensor& queue_labels,
                          const torch::Tensor& query_labels, double tau);

/// Number of queries in `query_labels` with at least one positive in `queue_labels`.
int64_t supcon_contributing(const torch::Tensor& queue_labels, const torch::Tensor& query_labels);

inline constexpr int kPoseClasses = 5;

/// logits (B, 5), labels (B) int64 in 0..4 (else LabelError); mean cross-entropy.
torch::Tensor loss_pose_classification(const torch::Tensor& logits, const torch::Tensor& labels);

/// pred, target (B, 4): normalized age, height, weight, then sex.
/// pred's sex column is a probability in (0, 1) (else DomainError); target's is 0/1 (1 = male).
/// BCE on sex plus squared errors on the other three, summed per sample, batch mean.
torch::Tensor loss_patient_info(const torch::Tensor& pred, const torch::Tensor& target);

/// Pixelwise MSE against the normalized bone map.
torch::Tensor loss_bone_decomposition(const torch::Tensor& pred, const torch::Tensor& gt);

}  // namespace qis::pretrain
