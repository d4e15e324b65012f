#include "qis/metrics/image_quality.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "qis/error.hpp"

namespace qis::metrics {

using imaging::QuantImage;
using imaging::RoiMask;

double psnr(const QuantImage& gt, const QuantImage& pred, const RoiMask* roi) {
  if (!gt.same_shape(pred)) throw ShapeError("psnr: dimension mismatch");
  if (roi && !roi->matches(gt)) throw ShapeError("psnr: ROI dimension mismatch");

  double lo = INFINITY, hi = -INFINITY, se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    if (roi && !roi->bits[i]) continue;
    const double g = gt.pixels[i], d = g - pred.pixels[i];
    lo = std::min(lo, g);
    hi = std::max(hi, g);
    se += d * d;
    ++n;
  }
  if (n == 0) throw EmptyRegionError("psnr: empty ROI");
  const double range = hi - lo;
  if (!(range > 0.0)) throw DegenerateError("psnr: GT has zero range over the region");
  if (se == 0.0) return kPsnrInfinite;
  const double mse = se / static_cast<double>(n);
  return 10.0 * std::log10(range * range / mse);
}

namespace {

struct Region {
  int x0, y0, w, h;
};

}  // namespace

double ssim(const QuantImage& gt, const QuantImage& pred, const RoiMask* roi, const SsimOptions& opt) {
  if (!gt.same_shape(pred)) throw ShapeError("ssim: dimension mismatch");
  if (roi && !roi->matches(gt)) throw ShapeError("ssim: ROI dimension mismatch");

  Region r{0, 0, gt.width, gt.height};
  if (roi) {
    int x0 = gt.width, y0 = gt.height, x1 = -1, y1 = -1;
    for (int y = 0; y < gt.height; ++y)
      for (int x = 0; x < gt.width; ++x)
        if (roi->at(x, y)) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 < 0) throw EmptyRegionError("ssim: empty ROI");
    r = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  }
  const int win = opt.window, half = win / 2;
  if (r.w < win || r.h < win) throw RegionTooSmallError("ssim: region smaller than the window");

  double range;
  if (opt.dynamic_range) {
    range = *opt.dynamic_range;
  } else {
    double lo = INFINITY, hi = -INFINITY;
    for (int y = r.y0; y < r.y0 + r.h; ++y)
      for (int x = r.x0; x < r.x0 + r.w; ++x) {
        if (roi && !roi->at(x, y)) continue;
        lo = std::min<double>(lo, gt.at(x, y));
        hi = std::max<double>(hi, gt.at(x, y));
      }
    range = hi - lo;
  }
  if (!(range > 0.0)) throw DegenerateError("ssim: zero dynamic range");
  const double c1 = (opt.k1 * range) * (opt.k1 * range);
  const double c2 = (opt.k2 * range) * (opt.k2 * range);

  std::vector<double> g1(win);
  double gs = 0.0;
  for (int i = 0; i < win; ++i) {
    g1[i] = std::exp(-0.5 * (i - half) * (i - half) / (opt.sigma * opt.sigma));
    gs += g1[i];
  }
  for (double& v : g1) v /= gs;

  double acc = 0.0;
  std::size_t count = 0;
  for (int cy = r.y0 + half; cy < r.y0 + r.h - half; ++cy) {
    for (int cx = r.x0 + half; cx < r.x0 + r.w - half; ++cx) {
      if (roi && !roi->at(cx, cy)) continue;
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int j = 0; j < win; ++j) {
        for (int i = 0; i < win; ++i) {
          const double wgt = g1[i] * g1[j];
          const double a = gt.at(cx - half + i, cy - half + j);
          const double b = pred.at(cx - half + i, cy - half + j);
          mx += wgt * a;
          my += wgt * b;
          sxx += wgt * a * a;
          syy += wgt * b * b;
          sxy += wgt * a * b;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  if (count == 0) throw RegionTooSmallError("ssim: no full window centred inside the ROI");
  return acc / static_cast<double>(count);
}

}  // namespace qis::metrics
