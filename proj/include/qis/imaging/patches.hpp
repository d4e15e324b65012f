#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qis/imaging/quant_image.hpp"
#include "qis/rng.hpp"

namespace qis::imaging {

/// Regular rows x cols partition of an image. Cells are indexed row-major.
struct PatchGrid {
  int rows = 1;
  int cols = 1;
  int patch_h = 1;
  int patch_w = 1;

  /// Throws GridError unless the image dims are divisible by the grid.
  static PatchGrid fit(int rows, int cols, int image_w, int image_h);

  int count() const { return rows * cols; }
  int image_width() const { return cols * patch_w; }
  int image_height() const { return rows * patch_h; }
  bool fits(const QuantImage& img) const {
    return img.width == image_width() && img.height == image_height();
  }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

std::vector<QuantImage> patchify(const QuantImage& img, const PatchGrid& grid);
QuantImage unpatchify(std::span<const QuantImage> patches, const PatchGrid& grid);

/// `count` distinct indices from [0, k), uniform without replacement, sorted.
std::vector<int> sample_patch_indices(int k, int count, Rng& rng);

/// Number of patches masked for a ratio: round(ratio * k).
int masked_patch_count(double ratio, int k);

struct MaskedImage {
  QuantImage image;
  std::vector<int> indices;  // sorted
};

/// Zeroes round(ratio * K) patches chosen uniformly without replacement.
MaskedImage mask_patches(const QuantImage& img, const PatchGrid& grid, double ratio, Rng& rng);

/// Output cell j receives input patch perm[j].
QuantImage shuffle_patches(const QuantImage& img, const PatchGrid& grid, std::span<const int> perm);

bool is_permutation_of_range(std::span<const int> perm, int k);
std::vector<int> inverse_permutation(std::span<const int> perm);

}  // namespace qis::imaging
