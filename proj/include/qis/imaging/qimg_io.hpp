#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "qis/imaging/quant_image.hpp"

namespace qis::imaging {

// .qimg layout, all little-endian:
//   "QIMG" | u16 version=1 | u32 width | u32 height | u8 unit | f64 spacing_mm
//   | width*height f32 pixels, row-major
inline constexpr std::uint16_t kQimgVersion = 1;
inline constexpr std::size_t kQimgHeaderBytes = 4 + 2 + 4 + 4 + 1 + 8;

std::vector<std::byte> encode_qimg(const QuantImage& img);
QuantImage decode_qimg(std::span<const std::byte> bytes);

void save_qimg(const QuantImage& img, const std::filesystem::path& path);
QuantImage load_qimg(const std::filesystem::path& path);

void save_roi(const RoiMask& roi, const std::filesystem::path& path);
RoiMask load_roi(const std::filesystem::path& path);

}  // namespace qis::imaging
