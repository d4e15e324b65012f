#include "qis/pretrain/augment.hpp"

#include <cmath>
#include <numbers>

namespace qis::pretrain {

namespace F = torch::nn::functional;

torch::Tensor augment_batch(const torch::Tensor& images, Rng& rng, const AugmentOptions& opts) {
  const int64_t b = images.size(0);
  const double h = static_cast<double>(images.size(2)), w = static_cast<double>(images.size(3));
  auto theta = torch::zeros({b, 2, 3}, torch::kFloat64);
  auto gain = torch::ones({b, 1, 1, 1}, torch::kFloat64);
  auto t = theta.accessor<double, 3>();
  auto g = gain.accessor<double, 4>();
  for (int64_t i = 0; i < b; ++i) {
    const double side = std::sqrt(rng.uniform(opts.min_crop_area, 1.0));
    const double cx = rng.uniform(-(1.0 - side), 1.0 - side);
    const double cy = rng.uniform(-(1.0 - side), 1.0 - side);
    const double a = rng.uniform(-opts.max_rotation_deg, opts.max_rotation_deg) * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    // Rotation in pixel space expressed in normalized coordinates.
    t[i][0][0] = side * c;
    t[i][0][1] = -side * s * h / w;
    t[i][1][0] = side * s * w / h;
    t[i][1][1] = side * c;
    t[i][0][2] = cx;
    t[i][1][2] = cy;
    g[i][0][0][0] = 1.0 + rng.uniform(-opts.intensity_jitter, opts.intensity_jitter);
  }
  theta = theta.to(images.scalar_type());
  auto grid = F::affine_grid(theta, images.sizes().vec(), /*align_corners=*/false);
  auto out = F::grid_sample(images, grid,
                            F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(false));
  return out * gain.to(images.scalar_type());
}

}  // namespace qis::pretrain
