#pragma once

// Model checkpoint container. Byte layout (all integers little-endian):
//   magic           8 bytes  "SCNNCKPT"
//   format version  u32      (currently 1)
//   variant length  u32, variant name bytes (model metadata)
//   parameter count u32
//   per parameter:
//     name length   u32, name bytes (UTF-8)
//     rank          u32
//     extents       u64 x rank
//     data          f64 x prod(extents), IEEE-754 little-endian
// Parameter payloads are always stored as f64; loading into a float build
// narrows (and float-trained values round-trip losslessly through f64).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sortconv/dataset.hpp"  // DataError
#include "sortconv/models.hpp"

namespace sortconv {

inline constexpr char kCkptMagic[9] = "SCNNCKPT";
inline constexpr std::uint32_t kCkptVersion = 1;

namespace detail {

inline void put_u32(std::ostream& o, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& o, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& o, double v) { put_u64(o, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& i, const std::string& field) {
  unsigned char b[4];
  if (!i.read(reinterpret_cast<char*>(b), 4))
    throw DataError("checkpoint: truncated while reading " + field);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& i, const std::string& field) {
  unsigned char b[8];
  if (!i.read(reinterpret_cast<char*>(b), 8))
    throw DataError("checkpoint: truncated while reading " + field);
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= std::uint64_t(b[k]) << (8 * k);
  return v;
}

inline double get_f64(std::istream& i, const std::string& field) {
  return std::bit_cast<double>(get_u64(i, field));
}

}  // namespace detail

struct CheckpointParam {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct CheckpointData {
  std::string variant;
  std::vector<CheckpointParam> params;
};

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create checkpoint: " + path);
  out.write(kCkptMagic, 8);
  detail::put_u32(out, kCkptVersion);
  const std::string variant = model.spec.name();
  detail::put_u32(out, static_cast<std::uint32_t>(variant.size()));
  out.write(variant.data(), static_cast<std::streamsize>(variant.size()));
  const auto params = model.parameters();
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) detail::put_u64(out, static_cast<std::uint64_t>(d));
    for (S v : p->value.data()) detail::put_f64(out, static_cast<double>(v));
  }
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw DataError("checkpoint: bad magic (not an SCNNCKPT file): " + path);
  const auto version = detail::get_u32(in, "version");
  if (version != kCkptVersion)
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  CheckpointData ckpt;
  const auto vlen = detail::get_u32(in, "variant length");
  ckpt.variant.resize(vlen);
  if (!in.read(ckpt.variant.data(), vlen)) throw DataError("checkpoint: truncated variant");
  const auto count = detail::get_u32(in, "parameter count");
  ckpt.params.resize(count);
  for (auto& p : ckpt.params) {
    const auto nlen = detail::get_u32(in, "name length");
    p.name.resize(nlen);
    if (!in.read(p.name.data(), nlen)) throw DataError("checkpoint: truncated name");
    const auto rank = detail::get_u32(in, "rank of " + p.name);
    std::int64_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      p.shape.push_back(static_cast<std::int64_t>(detail::get_u64(in, "extent of " + p.name)));
      numel *= p.shape.back();
    }
    p.data.resize(static_cast<size_t>(numel));
    for (auto& v : p.data) v = detail::get_f64(in, "data of " + p.name);
  }
  return ckpt;
}

// Loads checkpoint values into an already-built model; name or shape
// mismatches are reported with the conflicting parameter.
template <typename S>
void load_into_model(const CheckpointData& ckpt, Model<S>& model) {
  auto params = model.parameters();
  if (params.size() != ckpt.params.size())
    throw DataError("checkpoint/model mismatch: model has " + std::to_string(params.size()) +
                    " parameters, checkpoint has " + std::to_string(ckpt.params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter<S>& dst = *params[i].param;
    const CheckpointParam& src = ckpt.params[i];
    if (dst.name != src.name)
      throw DataError("checkpoint/model mismatch: parameter '" + src.name +
                      "' where model expects '" + dst.name + "'");
    if (dst.value.shape() != src.shape)
      throw DataError("checkpoint/model mismatch: '" + src.name + "' has shape " +
                      shape_str(src.shape) + ", model expects " + shape_str(dst.value.shape()));
    auto buf = dst.value.mutable_data();
    for (size_t j = 0; j < buf.size(); ++j) buf[j] = static_cast<S>(src.data[j]);
  }
}

// Builds the checkpoint's variant with fresh (seed-0) parameters and then
// overwrites them with the stored values.
template <typename S>
Model<S> load_model_checkpoint(const std::string& path) {
  CheckpointData ckpt = read_checkpoint(path);
  ModelSpec spec = ModelSpec::parse(ckpt.variant);
  Model<S> model = build_model<S>(spec, 0);
  load_into_model(ckpt, model);
  return model;
}

}  // namespace sortconv
