#pragma once

// Shared test fixtures: independent oracles (naive convolution, scalar
// bilinear interpolation, finite differences) and small tensor helpers. The
// oracles are deliberately written against the spec of the math, not against
// the library code paths they check.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sortconv/tensor.hpp"

namespace testsupport {

using sortconv::Shape;
using sortconv::Tensor;

// Six-nested-loop cross-correlation with zero padding and per-channel bias:
// the reference semantics for conv2d.
inline std::vector<double> conv2d_naive(const std::vector<double>& input, std::int64_t N,
                                        std::int64_t C, std::int64_t H, std::int64_t W,
                                        const std::vector<double>& kernel, std::int64_t O,
                                        std::int64_t k, const std::vector<double>& bias,
                                        std::int64_t stride, std::int64_t pad) {
  const std::int64_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::int64_t Wo = (W + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<size_t>(N * O * Ho * Wo), 0.0);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(o)];
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ky = 0; ky < k; ++ky)
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t iy = oy * stride - pad + ky;
                const std::int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += input[static_cast<size_t>(((n * C + c) * H + iy) * W + ix)] *
                       kernel[static_cast<size_t>(((o * C + c) * k + ky) * k + kx)];
              }
          out[static_cast<size_t>(((n * O + o) * Ho + oy) * Wo + ox)] = acc;
        }
  return out;
}

// Scalar bilinear interpolation of a 2-d array at a continuous point,
// zero outside the array.
inline double bilinear_at(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                          double y, double x) {
  const double fy0 = std::floor(y), fx0 = std::floor(x);
  const std::int64_t y0 = static_cast<std::int64_t>(fy0), x0 = static_cast<std::int64_t>(fx0);
  const double fy = y - fy0, fx = x - fx0;
  auto at = [&](std::int64_t yy, std::int64_t xx) {
    return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? img[static_cast<size_t>(yy * w + xx)] : 0.0;
  };
  return (1 - fy) * (1 - fx) * at(y0, x0) + (1 - fy) * fx * at(y0, x0 + 1) +
         fy * (1 - fx) * at(y0 + 1, x0) + fy * fx * at(y0 + 1, x0 + 1);
}

// Central finite differences against the analytic gradients of a scalar loss.
// f rebuilds the graph from the given leaf tensors on every call; the
// relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1).
inline double finite_diff_max_rel_err(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
    const std::vector<Shape>& shapes, std::vector<std::vector<double>> values,
    double step = 1e-5) {
  std::vector<Tensor<double>> leaves;
  for (size_t i = 0; i < shapes.size(); ++i) {
    leaves.push_back(Tensor<double>::from(shapes[i], values[i]));
    leaves.back().set_requires_grad(true);
  }
  Tensor<double> loss = f(leaves);
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : leaves)
    analytic.emplace_back(t.grad().begin(), t.grad().end());

  double worst = 0.0;
  for (size_t i = 0; i < shapes.size(); ++i) {
    for (size_t j = 0; j < values[i].size(); ++j) {
      const double orig = values[i][j];
      auto eval = [&](double v) {
        values[i][j] = v;
        std::vector<Tensor<double>> fresh;
        for (size_t t = 0; t < shapes.size(); ++t)
          fresh.push_back(Tensor<double>::from(shapes[t], values[t]));
        sortconv::NoGradGuard ng;
        return f(fresh).item();
      };
      const double plus = eval(orig + step), minus = eval(orig - step);
      values[i][j] = orig;
      const double numeric = (plus - minus) / (2 * step);
      const double a = analytic[i][j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Weighted-sum scalarization with fixed weights: exposes gradient structure
// that a plain sum would cancel.
inline Tensor<double> weighted_sum(const Tensor<double>& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.25, 1.75);
  std::vector<double> w(static_cast<size_t>(t.numel()));
  for (auto& v : w) v = uni(rng);
  auto row = sortconv::reshape(t, {1, t.numel()});
  auto col = Tensor<double>::from({t.numel(), 1}, std::move(w));
  return sortconv::matmul(row, col);
}

inline std::vector<double> random_values(std::int64_t count, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(lo, hi);
  std::vector<double> out(static_cast<size_t>(count));
  for (auto& v : out) v = uni(rng);
  return out;
}

// 90-degree counterclockwise-convention rotation of the spatial dims of an
// NCHW tensor (square spatial extent), matching dataset::rotate_exact90.
template <typename S>
Tensor<S> rot90_nchw(const Tensor<S>& t, int quarter_turns = 1) {
  const auto N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  if (H != W) throw std::invalid_argument("rot90_nchw: needs square spatial extent");
  int k = ((quarter_turns % 4) + 4) % 4;
  std::vector<S> out(static_cast<size_t>(t.numel()));
  for (std::int64_t nc = 0; nc < N * C; ++nc)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        std::int64_t sy = y, sx = x;
        switch (k) {
          case 0: break;
          case 1: sy = H - 1 - x, sx = y; break;
          case 2: sy = H - 1 - y, sx = W - 1 - x; break;
          default: sy = x, sx = W - 1 - y; break;
        }
        out[static_cast<size_t>((nc * H + y) * W + x)] =
            t.data()[(nc * H + sy) * W + sx];
      }
  return Tensor<S>::from(t.shape(), std::move(out));
}

}  // namespace testsupport
