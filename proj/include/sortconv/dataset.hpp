#pragma once

// MNIST-style data handling: IDX ingestion (big-endian headers per the
// format), centre rotation with bilinear resampling (exact index permutation
// at multiples of 90 degrees), the 36-angle rotated test-set construction,
// seeded train/validation splitting, and a little-endian binary cache for
// rotated sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sortconv {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LabeledImage {
  int h = 28, w = 28;
  std::vector<float> pixels;  // row-major, values in [0,1]
  int label = 0;
  int rotation_deg = 0;  // 0 for originals
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError("IDX parse error: truncated while reading " + field);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline std::vector<LabeledImage> load_idx(const std::string& images_path,
                                          const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw DataError("cannot open image file: " + images_path);
  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw DataError("cannot open label file: " + labels_path);

  const auto magic_i = detail::read_u32_be(fi, "images magic");
  if (magic_i != kIdxImagesMagic)
    throw DataError("IDX parse error: images magic expected 0x00000803, got " +
                    std::to_string(magic_i));
  const auto count_i = detail::read_u32_be(fi, "image count");
  const auto rows = detail::read_u32_be(fi, "image rows");
  const auto cols = detail::read_u32_be(fi, "image cols");

  const auto magic_l = detail::read_u32_be(fl, "labels magic");
  if (magic_l != kIdxLabelsMagic)
    throw DataError("IDX parse error: labels magic expected 0x00000801, got " +
                    std::to_string(magic_l));
  const auto count_l = detail::read_u32_be(fl, "label count");
  if (count_i != count_l)
    throw DataError("IDX parse error: image count " + std::to_string(count_i) +
                    " != label count " + std::to_string(count_l));

  std::vector<LabeledImage> out(count_i);
  std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < count_i; ++i) {
    if (!fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw DataError("IDX parse error: image payload truncated at image " + std::to_string(i));
    auto& img = out[i];
    img.h = static_cast<int>(rows);
    img.w = static_cast<int>(cols);
    img.pixels.resize(buf.size());
    for (size_t p = 0; p < buf.size(); ++p) img.pixels[p] = static_cast<float>(buf[p]) / 255.0f;
    char lbl;
    if (!fl.read(&lbl, 1))
      throw DataError("IDX parse error: label payload truncated at label " + std::to_string(i));
    img.label = static_cast<unsigned char>(lbl);
    if (img.label > 9)
      throw DataError("IDX parse error: label value " + std::to_string(img.label) +
                      " out of range at index " + std::to_string(i));
  }
  return out;
}

// Writes images/labels in IDX form (pixels quantised to bytes by rounding).
inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      std::span<const LabeledImage> images) {
  if (images.empty()) throw DataError("write_idx: empty image list");
  std::ofstream fi(images_path, std::ios::binary);
  if (!fi) throw DataError("cannot create image file: " + images_path);
  std::ofstream fl(labels_path, std::ios::binary);
  if (!fl) throw DataError("cannot create label file: " + labels_path);
  const int h = images[0].h, w = images[0].w;
  detail::write_u32_be(fi, kIdxImagesMagic);
  detail::write_u32_be(fi, static_cast<std::uint32_t>(images.size()));
  detail::write_u32_be(fi, static_cast<std::uint32_t>(h));
  detail::write_u32_be(fi, static_cast<std::uint32_t>(w));
  detail::write_u32_be(fl, kIdxLabelsMagic);
  detail::write_u32_be(fl, static_cast<std::uint32_t>(images.size()));
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  for (const auto& img : images) {
    for (size_t p = 0; p < buf.size(); ++p) {
      const float v = std::clamp(img.pixels[p], 0.0f, 1.0f);
      buf[p] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    fi.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    const char lbl = static_cast<char>(img.label);
    fl.write(&lbl, 1);
  }
}

// ---------------------------------------------------------------------------
// Rotation about the pixel-grid centre ((h-1)/2, (w-1)/2), bilinear
// resampling, zero fill outside the frame. Positive angles follow the same
// counterclockwise-from-east convention as the polar sampler.
// ---------------------------------------------------------------------------

// Exact index-permutation rotation by k*90 degrees, matching the continuous
// rotator's direction. Requires h == w for odd multiples of 90.
inline std::vector<float> rotate_exact90(const float* src, int h, int w, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  if (k % 2 == 1 && h != w)
    throw std::invalid_argument("rotate_exact90: odd quarter turns require a square image");
  std::vector<float> out(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sy = y, sx = x;
      switch (k) {
        case 0: break;
        case 1: sy = h - 1 - x, sx = y; break;            // 90
        case 2: sy = h - 1 - y, sx = w - 1 - x; break;    // 180
        default: sy = x, sx = w - 1 - y; break;           // 270
      }
      out[static_cast<size_t>(y) * w + x] = src[static_cast<size_t>(sy) * w + sx];
    }
  return out;
}

inline std::vector<float> rotate_bilinear(const float* src, int h, int w, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  std::vector<float> out(static_cast<size_t>(h) * w, 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // inverse mapping: rotate the destination point back by -degrees
      const double dy = y - cy, dx = x - cx;
      const double syf = cy + (c * dy - s * dx);
      const double sxf = cx + (s * dy + c * dx);
      const double fy0 = std::floor(syf), fx0 = std::floor(sxf);
      const int y0 = static_cast<int>(fy0), x0 = static_cast<int>(fx0);
      const double fy = syf - fy0, fx = sxf - fx0;
      double acc = 0.0;
      const double wgt[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
      const int yy[4] = {y0, y0, y0 + 1, y0 + 1};
      const int xx[4] = {x0, x0 + 1, x0, x0 + 1};
      for (int t = 0; t < 4; ++t)
        if (yy[t] >= 0 && yy[t] < h && xx[t] >= 0 && xx[t] < w)
          acc += wgt[t] * src[static_cast<size_t>(yy[t]) * w + xx[t]];
      out[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
    }
  return out;
}

// Integer-degree rotation; multiples of 90 dispatch to the exact index
// permutation so those angles are bitwise lossless.
inline LabeledImage rotate_image(const LabeledImage& img, int degrees) {
  LabeledImage out = img;
  const int d = ((degrees % 360) + 360) % 360;
  out.rotation_deg = d;
  const bool exact = d % 180 == 0 || (d % 90 == 0 && img.h == img.w);
  if (exact)
    out.pixels = rotate_exact90(img.pixels.data(), img.h, img.w, d / 90);
  else
    out.pixels = rotate_bilinear(img.pixels.data(), img.h, img.w, static_cast<double>(d));
  return out;
}

inline std::vector<int> default_rot_angles() {
  std::vector<int> a;
  for (int d = 0; d < 360; d += 10) a.push_back(d);
  return a;
}

// The rotated evaluation set: every input image at every angle (angle-major
// order). 10K originals with the default 36 angles gives the 360K-image set.
inline std::vector<LabeledImage> make_mnist_rot(std::span<const LabeledImage> test_set,
                                                std::span<const int> angles = {}) {
  static const std::vector<int> defaults = default_rot_angles();
  std::span<const int> use = angles.empty() ? std::span<const int>(defaults) : angles;
  std::vector<LabeledImage> out;
  out.reserve(test_set.size() * use.size());
  for (int a : use)
    for (const auto& img : test_set) out.push_back(rotate_image(img, a));
  return out;
}

inline std::pair<std::vector<LabeledImage>, std::vector<LabeledImage>> split_train_valid(
    std::vector<LabeledImage> train_set, std::int64_t valid_count, std::uint64_t seed) {
  if (valid_count < 0 || valid_count > static_cast<std::int64_t>(train_set.size()))
    throw std::invalid_argument("split_train_valid: valid_count " + std::to_string(valid_count) +
                                " out of range for " + std::to_string(train_set.size()) +
                                " images");
  std::vector<std::int64_t> idx(train_set.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<LabeledImage> valid, rest;
  valid.reserve(static_cast<size_t>(valid_count));
  rest.reserve(train_set.size() - static_cast<size_t>(valid_count));
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(idx.size()); ++i) {
    auto& img = train_set[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    if (i < valid_count)
      valid.push_back(std::move(img));
    else
      rest.push_back(std::move(img));
  }
  return {std::move(rest), std::move(valid)};
}

// ---------------------------------------------------------------------------
// Rotated-set cache: "MROT" container, little-endian integers, f32 pixels.
// Layout: magic(4) version(u32) conv_len(u32) conv(bytes) base_count(u32)
//         h(u32) w(u32) n_angles(u32) angles(i32 each), then angle-major
//         records: label(u8) + h*w f32 pixels.
// The convention string keys the interpolation scheme used to build it.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kRotCacheVersion = 1;
inline constexpr const char* kRotInterpConvention = "bilinear-centre-(h-1)/2";

namespace detail {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& in, const std::string& field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError("rotation cache: truncated while reading " + field);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

}  // namespace detail

inline void save_rot_cache(const std::string& path, std::span<const LabeledImage> rotated,
                           std::uint32_t base_count, std::span<const int> angles) {
  if (rotated.size() != static_cast<size_t>(base_count) * angles.size())
    throw DataError("save_rot_cache: image count != base_count * angles");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create rotation cache: " + path);
  out.write("MROT", 4);
  detail::write_u32_le(out, kRotCacheVersion);
  const std::string conv = kRotInterpConvention;
  detail::write_u32_le(out, static_cast<std::uint32_t>(conv.size()));
  out.write(conv.data(), static_cast<std::streamsize>(conv.size()));
  detail::write_u32_le(out, base_count);
  detail::write_u32_le(out, static_cast<std::uint32_t>(rotated[0].h));
  detail::write_u32_le(out, static_cast<std::uint32_t>(rotated[0].w));
  detail::write_u32_le(out, static_cast<std::uint32_t>(angles.size()));
  for (int a : angles) detail::write_u32_le(out, static_cast<std::uint32_t>(a));
  for (const auto& img : rotated) {
    const unsigned char lbl = static_cast<unsigned char>(img.label);
    out.write(reinterpret_cast<const char*>(&lbl), 1);
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
  }
}

struct RotCache {
  std::vector<int> angles;
  std::uint32_t base_count = 0;
  std::vector<LabeledImage> images;  // angle-major, matching make_mnist_rot
};

inline RotCache load_rot_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open rotation cache: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MROT", 4) != 0)
    throw DataError("rotation cache: bad magic");
  const auto version = detail::read_u32_le(in, "version");
  if (version != kRotCacheVersion)
    throw DataError("rotation cache: unsupported version " + std::to_string(version));
  const auto conv_len = detail::read_u32_le(in, "convention length");
  std::string conv(conv_len, '\0');
  if (!in.read(conv.data(), conv_len)) throw DataError("rotation cache: truncated convention");
  if (conv != kRotInterpConvention)
    throw DataError("rotation cache: interpolation convention mismatch: " + conv);
  RotCache cache;
  cache.base_count = detail::read_u32_le(in, "base count");
  const auto h = detail::read_u32_le(in, "height");
  const auto w = detail::read_u32_le(in, "width");
  const auto na = detail::read_u32_le(in, "angle count");
  for (std::uint32_t i = 0; i < na; ++i)
    cache.angles.push_back(static_cast<int>(detail::read_u32_le(in, "angle")));
  const size_t total = static_cast<size_t>(cache.base_count) * na;
  cache.images.resize(total);
  for (size_t i = 0; i < total; ++i) {
    auto& img = cache.images[i];
    img.h = static_cast<int>(h);
    img.w = static_cast<int>(w);
    unsigned char lbl;
    if (!in.read(reinterpret_cast<char*>(&lbl), 1))
      throw DataError("rotation cache: truncated at record " + std::to_string(i));
    img.label = lbl;
    img.rotation_deg = cache.angles[i / cache.base_count];
    img.pixels.resize(static_cast<size_t>(h) * w);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()),
                 static_cast<std::streamsize>(img.pixels.size() * sizeof(float))))
      throw DataError("rotation cache: truncated pixels at record " + std::to_string(i));
  }
  return cache;
}

}  // namespace sortconv
