#include "qis/imaging/quant_image.hpp"

#include <algorithm>
#include <cmath>

#include "qis/error.hpp"

namespace qis::imaging {

QuantImage QuantImage::zeros(int width, int height, Unit unit, double spacing_mm) {
  return filled(width, height, 0.0f, unit, spacing_mm);
}

QuantImage QuantImage::filled(int width, int height, float value, Unit unit, double spacing_mm) {
  if (width <= 0 || height <= 0) throw ShapeError("image dims must be positive");
  QuantImage img;
  img.width = width;
  img.height = height;
  img.unit = unit;
  img.spacing_mm = spacing_mm;
  img.pixels.assign(static_cast<std::size_t>(width) * height, value);
  return img;
}

bool QuantImage::finite() const {
  return std::all_of(pixels.begin(), pixels.end(), [](float v) { return std::isfinite(v); });
}

RoiMask RoiMask::empty(int width, int height) {
  if (width <= 0 || height <= 0) throw ShapeError("mask dims must be positive");
  return RoiMask{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
}

RoiMask RoiMask::from_threshold(const QuantImage& img, float threshold) {
  RoiMask m = empty(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] > threshold ? 1 : 0;
  return m;
}

RoiMask RoiMask::from_image(const QuantImage& img) {
  RoiMask m = empty(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = img.pixels[i];
    if (v != 0.0f && v != 1.0f) throw FormatError("ROI image pixels must be 0 or 1");
    m.bits[i] = v == 1.0f ? 1 : 0;
  }
  return m;
}

std::size_t RoiMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

QuantImage RoiMask::to_image() const {
  QuantImage img = QuantImage::zeros(width, height, Unit::intensity, 1.0);
  for (std::size_t i = 0; i < bits.size(); ++i) img.pixels[i] = bits[i] ? 1.0f : 0.0f;
  return img;
}

}  // namespace qis::imaging
