#pragma once

#include <vector>

#include "qis/imaging/quant_image.hpp"

namespace qis::imaging {

/// 3x3 Sobel responses with replicate padding. `sobel_x` differentiates
/// along columns (horizontal gradient).
std::vector<double> sobel_x(const QuantImage& img);
std::vector<double> sobel_y(const QuantImage& img);

/// Zero-mean normalised cross-correlation; 0 when either side has zero
/// variance.
double normalized_cross_correlation(const std::vector<double>& a, const std::vector<double>& b);

/// GC(a, b) = (NCC(Sx a, Sx b) + NCC(Sy a, Sy b)) / 2, in [-1, 1].
double gradient_correlation(const QuantImage& a, const QuantImage& b);

}  // namespace qis::imaging
