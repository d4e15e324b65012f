#include "qis/imaging/patches.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qis/error.hpp"

namespace qis::imaging {

PatchGrid PatchGrid::fit(int rows, int cols, int image_w, int image_h) {
  if (rows <= 0 || cols <= 0) throw GridError("grid rows/cols must be positive");
  if (image_w % cols != 0 || image_h % rows != 0)
    throw GridError("image " + std::to_string(image_w) + "x" + std::to_string(image_h) +
                    " is not divisible by grid " + std::to_string(cols) + "x" + std::to_string(rows));
  return PatchGrid{rows, cols, image_h / rows, image_w / cols};
}

namespace {

void require_fit(const QuantImage& img, const PatchGrid& grid) {
  if (!grid.fits(img)) throw GridError("grid does not partition the image exactly");
}

void copy_cell(const QuantImage& src, int src_cell, QuantImage& dst, int dst_cell, const PatchGrid& g) {
  const int sx = (src_cell % g.cols) * g.patch_w, sy = (src_cell / g.cols) * g.patch_h;
  const int dx = (dst_cell % g.cols) * g.patch_w, dy = (dst_cell / g.cols) * g.patch_h;
  for (int y = 0; y < g.patch_h; ++y)
    std::copy_n(src.ptr(sx, sy + y), g.patch_w, dst.ptr(dx, dy + y));
}

}  // namespace

std::vector<QuantImage> patchify(const QuantImage& img, const PatchGrid& grid) {
  require_fit(img, grid);
  std::vector<QuantImage> out;
  out.reserve(grid.count());
  for (int cell = 0; cell < grid.count(); ++cell) {
    QuantImage p = QuantImage::zeros(grid.patch_w, grid.patch_h, img.unit, img.spacing_mm);
    const int ox = (cell % grid.cols) * grid.patch_w, oy = (cell / grid.cols) * grid.patch_h;
    for (int y = 0; y < grid.patch_h; ++y) std::copy_n(img.ptr(ox, oy + y), grid.patch_w, p.ptr(0, y));
    out.push_back(std::move(p));
  }
  return out;
}

QuantImage unpatchify(std::span<const QuantImage> patches, const PatchGrid& grid) {
  if (static_cast<int>(patches.size()) != grid.count()) throw GridError("patch count does not match grid");
  QuantImage out = QuantImage::zeros(grid.image_width(), grid.image_height(), patches[0].unit,
                                     patches[0].spacing_mm);
  for (int cell = 0; cell < grid.count(); ++cell) {
    const QuantImage& p = patches[cell];
    if (p.width != grid.patch_w || p.height != grid.patch_h) throw GridError("patch dims do not match grid");
    const int ox = (cell % grid.cols) * grid.patch_w, oy = (cell / grid.cols) * grid.patch_h;
    for (int y = 0; y < grid.patch_h; ++y) std::copy_n(p.ptr(0, y), grid.patch_w, out.ptr(ox, oy + y));
  }
  return out;
}

int masked_patch_count(double ratio, int k) { return static_cast<int>(std::lround(ratio * k)); }

std::vector<int> sample_patch_indices(int k, int count, Rng& rng) {
  if (count < 0 || count > k) throw ConfigError("cannot sample that many patches");
  std::vector<int> pool(k);
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: the first `count` slots become a uniform sample.
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

MaskedImage mask_patches(const QuantImage& img, const PatchGrid& grid, double ratio, Rng& rng) {
  require_fit(img, grid);
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("mask ratio must be in (0, 1]");
  const int n = masked_patch_count(ratio, grid.count());
  if (n < 1) throw ConfigError("mask ratio selects no patch");

  MaskedImage out{img, sample_patch_indices(grid.count(), n, rng)};
  for (int cell : out.indices) {
    const int ox = (cell % grid.cols) * grid.patch_w, oy = (cell / grid.cols) * grid.patch_h;
    for (int y = 0; y < grid.patch_h; ++y) std::fill_n(out.image.ptr(ox, oy + y), grid.patch_w, 0.0f);
  }
  return out;
}

bool is_permutation_of_range(std::span<const int> perm, int k) {
  if (static_cast<int>(perm.size()) != k) return false;
  std::vector<char> seen(k, 0);
  for (int v : perm) {
    if (v < 0 || v >= k || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

std::vector<int> inverse_permutation(std::span<const int> perm) {
  if (!is_permutation_of_range(perm, static_cast<int>(perm.size()))) throw GridError("not a permutation");
  std::vector<int> inv(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = static_cast<int>(j);
  return inv;
}

QuantImage shuffle_patches(const QuantImage& img, const PatchGrid& grid, std::span<const int> perm) {
  require_fit(img, grid);
  if (!is_permutation_of_range(perm, grid.count())) throw GridError("invalid patch permutation");
  QuantImage out = img;
  for (int j = 0; j < grid.count(); ++j) copy_cell(img, perm[j], out, j, grid);
  return out;
}

}  // namespace qis::imaging
