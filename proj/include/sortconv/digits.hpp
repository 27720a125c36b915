#pragma once

// Deterministic synthetic handwritten-digit-style corpus: stroke skeletons
// per digit class, randomly jittered (affine + stroke width + intensity +
// noise) and rendered as soft strokes on a 28x28 canvas, white on black.
// Serves as a stand-in for MNIST when the real IDX files are not available;
// it is written/consumed through the same IDX pipeline.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sortconv/dataset.hpp"

namespace sortconv {

namespace detail {

struct P2 {
  double x, y;
};

using Stroke = std::vector<P2>;  // polyline in glyph coordinates [0,1]^2

inline Stroke arc(double cx, double cy, double rx, double ry, double a0, double a1, int steps) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double t = a0 + (a1 - a0) * i / steps;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

inline const std::vector<std::vector<Stroke>>& digit_skeletons() {
  static const std::vector<std::vector<Stroke>> glyphs = [] {
    constexpr double pi = 3.14159265358979323846;
    std::vector<std::vector<Stroke>> g(10);
    g[0] = {arc(0.50, 0.50, 0.30, 0.40, 0, 2 * pi, 16)};
    g[1] = {{{0.36, 0.26}, {0.54, 0.10}}, {{0.54, 0.10}, {0.54, 0.90}}};
    g[2] = {arc(0.50, 0.30, 0.27, 0.22, -pi, 0.25 * pi, 10),
            {{0.69, 0.46}, {0.24, 0.88}},
            {{0.24, 0.88}, {0.78, 0.88}}};
    g[3] = {arc(0.47, 0.28, 0.25, 0.20, -0.85 * pi, 0.5 * pi, 10),
            arc(0.47, 0.70, 0.28, 0.22, -0.5 * pi, 0.85 * pi, 10)};
    g[4] = {{{0.62, 0.10}, {0.22, 0.62}}, {{0.22, 0.62}, {0.82, 0.62}},
            {{0.66, 0.34}, {0.66, 0.92}}};
    g[5] = {{{0.74, 0.10}, {0.30, 0.10}},
            {{0.30, 0.10}, {0.27, 0.45}},
            arc(0.50, 0.66, 0.26, 0.24, -0.6 * pi, 0.75 * pi, 12)};
    g[6] = {arc(0.62, 0.16, 0.42, 0.52, 0.55 * pi, 0.95 * pi, 8),
            arc(0.47, 0.68, 0.24, 0.22, 0, 2 * pi, 14)};
    g[7] = {{{0.22, 0.12}, {0.78, 0.12}}, {{0.78, 0.12}, {0.40, 0.90}}};
    g[8] = {arc(0.50, 0.30, 0.21, 0.19, 0, 2 * pi, 14),
            arc(0.50, 0.71, 0.25, 0.22, 0, 2 * pi, 14)};
    g[9] = {arc(0.52, 0.32, 0.22, 0.21, 0, 2 * pi, 14),
            {{0.74, 0.36}, {0.62, 0.90}}};
    return g;
  }();
  return glyphs;
}

inline double dist2_to_segment(double px, double py, const P2& a, const P2& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = px - a.x, wy = py - a.y;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return dx * dx + dy * dy;
}

}  // namespace detail

// Renders `count` labelled digits (uniform over classes) on hxw canvases.
inline std::vector<LabeledImage> make_digit_corpus(std::int64_t count, std::uint64_t seed,
                                                   int h = 28, int w = 28) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& glyphs = detail::digit_skeletons();

  std::vector<LabeledImage> out;
  out.reserve(static_cast<size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    LabeledImage img;
    img.h = h;
    img.w = w;
    img.label = static_cast<int>(i % 10);
    img.pixels.assign(static_cast<size_t>(h) * w, 0.0f);

    // per-sample jitter
    const double rot = (uni(rng) * 2 - 1) * 0.17;          // about +-10 degrees
    const double scale = 17.0 + uni(rng) * 4.5;            // glyph box in pixels
    const double aspect = 0.9 + uni(rng) * 0.2;
    const double shear = (uni(rng) * 2 - 1) * 0.12;
    const double tx = (w - 1) / 2.0 + (uni(rng) * 2 - 1) * 1.8;
    const double ty = (h - 1) / 2.0 + (uni(rng) * 2 - 1) * 1.8;
    const double sigma = 0.75 + uni(rng) * 0.55;           // stroke half-width
    const double amp = 0.78 + uni(rng) * 0.22;
    const double cr = std::cos(rot), sr = std::sin(rot);

    std::vector<detail::Stroke> strokes = glyphs[static_cast<size_t>(img.label)];
    for (auto& s : strokes)
      for (auto& p : s) {
        const double gx = (p.x - 0.5) * scale * aspect;
        const double gy = (p.y - 0.5) * scale / aspect;
        const double hx = gx + shear * gy;
        p = {tx + cr * hx - sr * gy, ty + sr * hx + cr * gy};
      }

    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double d2 = 1e30;
        for (const auto& s : strokes)
          for (size_t k = 0; k + 1 < s.size(); ++k)
            d2 = std::min(d2, detail::dist2_to_segment(x, y, s[k], s[k + 1]));
        double v = amp * std::exp(-d2 * inv2s2);
        v += gauss(rng) * 0.02;
        img.pixels[static_cast<size_t>(y) * w + x] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    out.push_back(std::move(img));
  }
  // shuffle so class order is not periodic
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace sortconv
