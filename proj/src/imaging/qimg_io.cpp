#include "qis/imaging/qimg_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qis/error.hpp"

namespace qis::imaging {

namespace {

static_assert(std::endian::native == std::endian::little, "qimg I/O assumes a little-endian host");

template <class T>
void put(std::vector<std::byte>& out, T v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(std::span<const std::byte> in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw FormatError("qimg: truncated header");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::byte> encode_qimg(const QuantImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw ShapeError("qimg: pixel count does not match dims");
  std::vector<std::byte> out;
  out.reserve(kQimgHeaderBytes + img.pixels.size() * 4);
  for (char c : {'Q', 'I', 'M', 'G'}) out.push_back(static_cast<std::byte>(c));
  put<std::uint16_t>(out, kQimgVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(img.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(img.height));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(img.unit));
  put<double>(out, img.spacing_mm);
  const auto* p = reinterpret_cast<const std::byte*>(img.pixels.data());
  out.insert(out.end(), p, p + img.pixels.size() * sizeof(float));
  return out;
}

QuantImage decode_qimg(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "QIMG", 4) != 0) throw FormatError("qimg: bad magic");
  std::size_t off = 4;
  if (get<std::uint16_t>(bytes, off) != kQimgVersion) throw FormatError("qimg: unsupported version");
  const auto w = get<std::uint32_t>(bytes, off);
  const auto h = get<std::uint32_t>(bytes, off);
  const auto unit = get<std::uint8_t>(bytes, off);
  const auto spacing = get<double>(bytes, off);
  if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20)) throw FormatError("qimg: bad dims");
  if (unit > 1) throw FormatError("qimg: unknown unit code");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - off != n * sizeof(float)) throw FormatError("qimg: payload size mismatch");

  QuantImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.unit = static_cast<Unit>(unit);
  img.spacing_mm = spacing;
  img.pixels.resize(n);
  std::memcpy(img.pixels.data(), bytes.data() + off, n * sizeof(float));
  return img;
}

void save_qimg(const QuantImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_qimg(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

QuantImage load_qimg(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_qimg(std::as_bytes(std::span(raw)));
}

void save_roi(const RoiMask& roi, const std::filesystem::path& path) { save_qimg(roi.to_image(), path); }

RoiMask load_roi(const std::filesystem::path& path) { return RoiMask::from_image(load_qimg(path)); }

}  // namespace qis::imaging
