#pragma once

// Neighborhood sampling geometry for a kernel half-width n: either the
// (2n+1)^2 integer grid ("square") or concentric circles carrying 8r
// bilinearly interpolated points per radius r ("polar"), plus the centre
// pixel. Plans are input-independent and built once per layer.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sortconv {

enum class Sampling { Square, Polar };

inline std::string to_string(Sampling s) { return s == Sampling::Square ? "square" : "polar"; }

struct BilinearTap {
  int dy = 0, dx = 0;  // integer offset from the neighborhood centre
  double w = 0.0;
};

struct SamplePoint {
  double offset_y = 0.0, offset_x = 0.0;
  int ring = 0;        // 0..n; square rings are Chebyshev shells
  int ring_order = 0;  // polar: ascending angle; square: row-major scan within the shell
  std::array<BilinearTap, 4> taps{};  // weights are non-negative and sum to 1
};

struct SamplePlan {
  int n = 0;
  Sampling mode = Sampling::Square;
  double phase = 0.0;
  std::vector<SamplePoint> points;  // square: row-major; polar: centre, then rings

  int side() const { return 2 * n + 1; }
  int count() const { return side() * side(); }
};

namespace detail {

inline std::array<BilinearTap, 4> bilinear_taps(double oy, double ox) {
  const double fy0 = std::floor(oy), fx0 = std::floor(ox);
  const int y0 = static_cast<int>(fy0), x0 = static_cast<int>(fx0);
  const double fy = oy - fy0, fx = ox - fx0;
  return {BilinearTap{y0, x0, (1.0 - fy) * (1.0 - fx)},
          BilinearTap{y0, x0 + 1, (1.0 - fy) * fx},
          BilinearTap{y0 + 1, x0, fy * (1.0 - fx)},
          BilinearTap{y0 + 1, x0 + 1, fy * fx}};
}

}  // namespace detail

// phase: angular offset (radians) of the first point on every polar ring,
// counterclockwise from east; offsets are (r*sin(theta), r*cos(theta)).
inline SamplePlan build_sample_plan(int n, Sampling mode, double phase = 0.0) {
  if (n < 1)
    throw std::invalid_argument("build_sample_plan: n must be >= 1 (n=0 degenerates to 1x1)");
  SamplePlan plan;
  plan.n = n;
  plan.mode = mode;
  plan.phase = phase;
  plan.points.reserve(static_cast<size_t>(plan.count()));
  if (mode == Sampling::Square) {
    std::vector<int> ring_fill(static_cast<size_t>(n) + 1, 0);
    for (int dy = -n; dy <= n; ++dy)
      for (int dx = -n; dx <= n; ++dx) {
        SamplePoint p;
        p.offset_y = dy;
        p.offset_x = dx;
        p.ring = std::max(std::abs(dy), std::abs(dx));
        p.ring_order = ring_fill[static_cast<size_t>(p.ring)]++;
        p.taps = {BilinearTap{dy, dx, 1.0}, BilinearTap{dy, dx + 1, 0.0},
                  BilinearTap{dy + 1, dx, 0.0}, BilinearTap{dy + 1, dx + 1, 0.0}};
        plan.points.push_back(p);
      }
  } else {
    SamplePoint centre;
    centre.taps = {BilinearTap{0, 0, 1.0}, BilinearTap{0, 1, 0.0}, BilinearTap{1, 0, 0.0},
                   BilinearTap{1, 1, 0.0}};
    plan.points.push_back(centre);
    for (int r = 1; r <= n; ++r) {
      const int m = 8 * r;
      for (int k = 0; k < m; ++k) {
        const double theta = phase + 2.0 * std::numbers::pi * k / m;
        SamplePoint p;
        p.offset_y = r * std::sin(theta);
        p.offset_x = r * std::cos(theta);
        p.ring = r;
        p.ring_order = k;
        p.taps = detail::bilinear_taps(p.offset_y, p.offset_x);
        plan.points.push_back(p);
      }
    }
  }
  if (static_cast<int>(plan.points.size()) != plan.count())
    throw std::logic_error("build_sample_plan: point count != (2n+1)^2");
  return plan;
}

// Reads the plan's (2n+1)^2 sample values around (center_y, center_x) of a
// padded channel. The caller must provide a zero margin of at least n+1 so
// every bilinear corner is in bounds; out-of-bounds taps are a contract
// violation and throw.
template <typename S>
std::vector<S> sample_neighborhood(std::span<const S> padded, std::int64_t height,
                                   std::int64_t width, std::int64_t center_y,
                                   std::int64_t center_x, const SamplePlan& plan) {
  if (static_cast<std::int64_t>(padded.size()) != height * width)
    throw std::invalid_argument("sample_neighborhood: buffer size != height*width");
  std::vector<S> out;
  out.reserve(plan.points.size());
  for (const auto& p : plan.points) {
    double acc = 0.0;
    for (const auto& t : p.taps) {
      const std::int64_t y = center_y + t.dy, x = center_x + t.dx;
      if (y < 0 || y >= height || x < 0 || x >= width)
        throw std::out_of_range(
            "sample_neighborhood: bilinear corner outside padded region (padding margin "
            "must be >= n+1)");
      acc += t.w * static_cast<double>(padded[y * width + x]);
    }
    out.push_back(static_cast<S>(acc));
  }
  return out;
}

}  // namespace sortconv
