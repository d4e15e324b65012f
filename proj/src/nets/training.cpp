#include "qis/nets/training.hpp"

#include <cmath>
#include <numbers>

#include "qis/error.hpp"

namespace qis::nets {

nlohmann::json OptimConfig::to_json() const {
  return {{"lr", lr}, {"weight_decay", weight_decay}, {"t0", t0}, {"t_mult", t_mult}, {"eta_min", eta_min}};
}

OptimConfig OptimConfig::from_json(const nlohmann::json& j) {
  OptimConfig c;
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.t0 = j.value("t0", c.t0);
  c.t_mult = j.value("t_mult", c.t_mult);
  c.eta_min = j.value("eta_min", c.eta_min);
  if (c.lr <= 0 || c.weight_decay < 0 || c.t0 < 1 || c.t_mult < 1) throw ConfigError("bad optimizer config");
  return c;
}

double sgdr_lr(const OptimConfig& cfg, double epoch) {
  double period = cfg.t0;
  double t = std::max(0.0, epoch);
  if (cfg.t_mult == 1) {
    t = std::fmod(t, period);
  } else {
    while (t >= period) {
      t -= period;
      period *= cfg.t_mult;
    }
  }
  return cfg.eta_min + 0.5 * (cfg.lr - cfg.eta_min) * (1.0 + std::cos(std::numbers::pi * t / period));
}

std::unique_ptr<torch::optim::AdamW> make_adamw(const std::vector<torch::Tensor>& params, const OptimConfig& cfg) {
  return std::make_unique<torch::optim::AdamW>(params,
                                               torch::optim::AdamWOptions(cfg.lr).weight_decay(cfg.weight_decay));
}

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) group.options().set_lr(lr);
}

torch::Tensor to_tensor(const imaging::QuantImage& image) {
  return torch::from_blob(const_cast<float*>(image.pixels.data()), {1, 1, image.height, image.width}, torch::kFloat32)
      .clone();
}

torch::Tensor to_batch(const std::vector<const imaging::QuantImage*>& images) {
  if (images.empty()) throw ShapeError("empty batch");
  const int w = images.front()->width, h = images.front()->height;
  auto out = torch::empty({static_cast<int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (const auto* img : images) {
    if (img->width != w || img->height != h) throw ShapeError("batch images differ in size");
    std::copy(img->pixels.begin(), img->pixels.end(), dst);
    dst += img->pixels.size();
  }
  return out;
}

imaging::QuantImage from_tensor(const torch::Tensor& t, imaging::Unit unit, double spacing_mm) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  while (c.dim() > 2) {
    if (c.size(0) != 1) throw ShapeError("from_tensor: expected a single image");
    c = c.squeeze(0);
  }
  if (c.dim() != 2) throw ShapeError("from_tensor: expected a 2-D image");
  auto img = imaging::QuantImage::zeros(static_cast<int>(c.size(1)), static_cast<int>(c.size(0)), unit, spacing_mm);
  std::copy_n(c.data_ptr<float>(), img.pixels.size(), img.pixels.begin());
  return img;
}

bool all_finite(const torch::Tensor& t) { return torch::isfinite(t).all().item<bool>(); }

}  // namespace qis::nets
