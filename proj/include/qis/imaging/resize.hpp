#pragma once

#include "qis/imaging/quant_image.hpp"

namespace qis::imaging {

/// Bilinear resampling with half-pixel centres (align_corners = false).
/// When an axis shrinks by more than 2x, that axis is Gaussian-prefiltered
/// first. Spacing becomes spacing_mm * old_w / new_w; per-axis spacing is not
/// tracked.
QuantImage resize(const QuantImage& img, int new_w, int new_h);

}  // namespace qis::imaging
