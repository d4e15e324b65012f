#pragma once

#include <memory>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "qis/imaging/quant_image.hpp"

namespace qis::nets {

struct OptimConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int t0 = 10;      // first restart period, epochs
  int t_mult = 2;
  double eta_min = 0.0;

  nlohmann::json to_json() const;
  static OptimConfig from_json(const nlohmann::json& j);
  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

/// Cosine annealing with warm restarts at fractional epoch `epoch`.
double sgdr_lr(const OptimConfig& cfg, double epoch);

std::unique_ptr<torch::optim::AdamW> make_adamw(const std::vector<torch::Tensor>& params, const OptimConfig& cfg);
void set_lr(torch::optim::Optimizer& opt, double lr);

/// Stack same-sized images into a (B, 1, H, W) float32 tensor.
torch::Tensor to_batch(const std::vector<const imaging::QuantImage*>& images);
torch::Tensor to_tensor(const imaging::QuantImage& image);
/// (1, 1, H, W) or (1, H, W) or (H, W) tensor to an image with the given unit/spacing.
imaging::QuantImage from_tensor(const torch::Tensor& t, imaging::Unit unit, double spacing_mm);

bool all_finite(const torch::Tensor& t);

}  // namespace qis::nets
