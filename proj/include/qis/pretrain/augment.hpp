#pragma once

#include <torch/torch.h>

#include "qis/rng.hpp"

namespace qis::pretrain {

struct AugmentOptions {
  double min_crop_area = 0.6;   // random resized crop, fraction of the image area
  double intensity_jitter = 0.1;
  double max_rotation_deg = 5.0;
};

/// Independently augmented copy of every image in a (B, C, H, W) batch:
/// crop-and-resize, small rotation, multiplicative intensity jitter.
/// No horizontal flips.
torch::Tensor augment_batch(const torch::Tensor& images, Rng& rng, const AugmentOptions& opts = {});

}  // namespace qis::pretrain
