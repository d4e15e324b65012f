#include "qis/imaging/gradient_correlation.hpp"

#include <algorithm>
#include <cmath>

#include "qis/error.hpp"

namespace qis::imaging {

namespace {

std::vector<double> sobel(const QuantImage& img, bool horizontal) {
  const int w = img.width, h = img.height;
  auto px = [&](int x, int y) -> double {
    return img.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  };
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double g;
      if (horizontal) {
        g = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)) -
            (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
      } else {
        g = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)) -
            (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
      }
      out[static_cast<std::size_t>(y) * w + x] = g;
    }
  }
  return out;
}

}  // namespace

std::vector<double> sobel_x(const QuantImage& img) { return sobel(img, true); }
std::vector<double> sobel_y(const QuantImage& img) { return sobel(img, false); }

double normalized_cross_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("NCC: size mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 1e-24 || sbb <= 1e-24) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double gradient_correlation(const QuantImage& a, const QuantImage& b) {
  if (!a.same_shape(b)) throw ShapeError("gradient_correlation: dimension mismatch");
  return 0.5 * (normalized_cross_correlation(sobel_x(a), sobel_x(b)) +
                normalized_cross_correlation(sobel_y(a), sobel_y(b)));
}

}  // namespace qis::imaging
