#include "qis/imaging/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "qis/error.hpp"

namespace qis::imaging {

namespace {

// Separable Gaussian along one axis, replicate border.
void blur_axis(std::vector<double>& data, int w, int h, bool along_x, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  std::vector<double> out(data.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int sx = along_x ? std::clamp(x + i, 0, w - 1) : x;
        const int sy = along_x ? y : std::clamp(y + i, 0, h - 1);
        acc += kernel[i + radius] * data[static_cast<std::size_t>(sy) * w + sx];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  data.swap(out);
}

struct Tap {
  int i0, i1;
  double t;
};

std::vector<Tap> taps(int in, int out) {
  std::vector<Tap> r(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    r[d] = {i0, i1, s - i0};
  }
  return r;
}

}  // namespace

QuantImage resize(const QuantImage& img, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0) throw ShapeError("resize: target dims must be positive");
  if (new_w == img.width && new_h == img.height) return img;

  std::vector<double> src(img.pixels.begin(), img.pixels.end());
  const double fx = static_cast<double>(img.width) / new_w;
  const double fy = static_cast<double>(img.height) / new_h;
  if (fx > 2.0) blur_axis(src, img.width, img.height, true, (fx - 1.0) / 2.0);
  if (fy > 2.0) blur_axis(src, img.width, img.height, false, (fy - 1.0) / 2.0);

  QuantImage out = QuantImage::zeros(new_w, new_h, img.unit, img.spacing_mm * img.width / new_w);
  const auto tx = taps(img.width, new_w);
  const auto ty = taps(img.height, new_h);
  for (int y = 0; y < new_h; ++y) {
    const Tap& a = ty[y];
    const double* r0 = &src[static_cast<std::size_t>(a.i0) * img.width];
    const double* r1 = &src[static_cast<std::size_t>(a.i1) * img.width];
    for (int x = 0; x < new_w; ++x) {
      const Tap& b = tx[x];
      const double top = r0[b.i0] + (r0[b.i1] - r0[b.i0]) * b.t;
      const double bot = r1[b.i0] + (r1[b.i1] - r1[b.i0]) * b.t;
      out.at(x, y) = static_cast<float>(top + (bot - top) * a.t);
    }
  }
  return out;
}

}  // namespace qis::imaging
