#pragma once

#include <limits>
#include <optional>

#include "qis/imaging/quant_image.hpp"

namespace qis::metrics {

/// PSNR of identical images.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

/// 10 log10(L^2 / MSE) with L the GT range over the evaluated region (all
/// pixels, or the ROI pixels when given).
double psnr(const imaging::QuantImage& gt, const imaging::QuantImage& pred,
            const imaging::RoiMask* roi = nullptr);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  /// Overrides the GT-derived dynamic range when set.
  std::optional<double> dynamic_range;
};

/// Gaussian-window SSIM over window positions that fit inside the image.
/// With an ROI both images are cropped to the GT ROI's bounding box and the
/// map is averaged over window centres inside the mask.
double ssim(const imaging::QuantImage& gt, const imaging::QuantImage& pred,
            const imaging::RoiMask* roi = nullptr, const SsimOptions& options = {});

}  // namespace qis::metrics
