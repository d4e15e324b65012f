#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace qis::imaging {

enum class Unit : std::uint8_t {
  intensity = 0,
  areal_density = 1,  // g/cm^2
};

/// Row-major 2-D image whose pixels carry a physical unit.
struct QuantImage {
  int width = 0;
  int height = 0;
  Unit unit = Unit::intensity;
  double spacing_mm = 1.0;
  std::vector<float> pixels;

  static QuantImage zeros(int width, int height, Unit unit = Unit::intensity,
                          double spacing_mm = 1.0);
  static QuantImage filled(int width, int height, float value,
                           Unit unit = Unit::intensity, double spacing_mm = 1.0);

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float* ptr(int x, int y) { return pixels.data() + static_cast<std::size_t>(y) * width + x; }
  const float* ptr(int x, int y) const { return pixels.data() + static_cast<std::size_t>(y) * width + x; }

  std::size_t size() const { return pixels.size(); }
  bool same_shape(const QuantImage& o) const { return width == o.width && height == o.height; }

  /// True when every pixel is finite.
  bool finite() const;

  friend bool operator==(const QuantImage&, const QuantImage&) = default;
};

/// Binary region of interest paired with a QuantImage.
struct RoiMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  static RoiMask empty(int width, int height);
  /// Pixels strictly above `threshold`.
  static RoiMask from_threshold(const QuantImage& img, float threshold);
  /// Inverse of to_image(): pixels must be exactly 0 or 1.
  static RoiMask from_image(const QuantImage& img);

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
  bool matches(const QuantImage& img) const { return width == img.width && height == img.height; }

  /// Serialisable form: unit=intensity, pixels in {0, 1}.
  QuantImage to_image() const;

  friend bool operator==(const RoiMask&, const RoiMask&) = default;
};

}  // namespace qis::imaging
