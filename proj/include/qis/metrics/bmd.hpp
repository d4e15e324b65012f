#pragma once

#include <cstddef>

#include "qis/imaging/quant_image.hpp"

namespace qis::metrics {

inline constexpr double kDefaultBmdThreshold = 1e-3;  // g/cm^2

struct BmdResult {
  double bmd = 0.0;  // g/cm^2
  std::size_t region_pixel_count = 0;
  double threshold = 0.0;
};

/// Mean of the pixels strictly above `threshold`. Throws UnitError for a
/// non-density map and EmptyRegionError when no pixel qualifies.
BmdResult extract_bmd(const imaging::QuantImage& map, double threshold = kDefaultBmdThreshold);

}  // namespace qis::metrics
