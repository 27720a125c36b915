#pragma once

// The fixed differentiable op set: elementwise add / scalar scale / relu,
// matmul, strided conv2d (im2col + GEMM), 2x2-style max pooling, global
// average/max pooling to 1x1, reshape, and fused softmax cross-entropy.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sortconv/tensor.hpp"

namespace sortconv {

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const MatRM<S>>;

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / structural ops
// ---------------------------------------------------------------------------

// add(a, b): identical shapes, or b is a rank-1 bias added over the last
// dimension of a 2-d tensor (the linear-layer bias pattern).
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const bool bias_bcast = a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
  detail::check(bias_bcast || a.shape() == b.shape(),
                "add: incompatible shapes " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  std::vector<S> out(a.data().begin(), a.data().end());
  if (bias_bcast) {
    const auto n = a.dim(0), k = a.dim(1);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < k; ++j) out[static_cast<size_t>(i * k + j)] += b.data()[j];
  } else {
    for (std::int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] += b.data()[i];
  }
  return Tensor<S>::make_op(a.shape(), std::move(out), {a, b},
                            [a, b, bias_bcast](detail::Node<S>& self) {
                              std::span<const S> g = self.grad;
                              if (a.requires_grad()) {
                                auto ga = a.node()->grad_buf();
                                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                              }
                              if (b.requires_grad()) {
                                auto gb = b.node()->grad_buf();
                                if (bias_bcast) {
                                  const auto n = a.dim(0), k = a.dim(1);
                                  for (std::int64_t i = 0; i < n; ++i)
                                    for (std::int64_t j = 0; j < k; ++j)
                                      gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i * k + j)];
                                } else {
                                  for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
                                }
                              }
                            });
}

template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& a, S c) {
  std::vector<S> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= c;
  return Tensor<S>::make_op(a.shape(), std::move(out), {a}, [a, c](detail::Node<S>& self) {
    if (!a.requires_grad()) return;
    auto ga = a.node()->grad_buf();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += c * self.grad[i];
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  std::vector<S> out(static_cast<size_t>(a.numel()));
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    S v = a.data()[i];
    out[static_cast<size_t>(i)] = v > S(0) ? v : S(0);
  }
  return Tensor<S>::make_op(a.shape(), std::move(out), {a}, [a](detail::Node<S>& self) {
    if (!a.requires_grad()) return;
    auto ga = a.node()->grad_buf();
    for (size_t i = 0; i < ga.size(); ++i)
      if (a.data()[static_cast<std::int64_t>(i)] > S(0)) ga[i] += self.grad[i];
  });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  detail::check(shape_numel(shape) == a.numel(),
                "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                    " changes element count");
  Tensor<S> out = Tensor<S>::alias(a, std::move(shape), false);
  if (!grad_enabled() || !a.requires_grad()) return out;
  // Rebuild as a graph op sharing the same buffer.
  Tensor<S> wrapped = out;
  wrapped.node()->requires_grad = true;
  wrapped.node()->parents = {a};
  wrapped.node()->backward_fn = [a](detail::Node<S>& self) {
    auto ga = a.node()->grad_buf();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  };
  return wrapped;
}

// ---------------------------------------------------------------------------
// matmul (2-d), Eigen-backed
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.rank() == 2 && b.rank() == 2,
                "matmul: expects 2-d operands, got " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
  detail::check(a.dim(1) == b.dim(0), "matmul: inner dimensions differ, " +
                                          shape_str(a.shape()) + " * " + shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<S> out(static_cast<size_t>(m * n));
  {
    detail::CMapRM<S> A(a.data().data(), m, k), B(b.data().data(), k, n);
    detail::MapRM<S> C(out.data(), m, n);
    C.noalias() = A * B;
  }
  return Tensor<S>::make_op(
      {m, n}, std::move(out), {a, b}, [a, b, m, k, n](detail::Node<S>& self) {
        detail::CMapRM<S> G(self.grad.data(), m, n);
        detail::CMapRM<S> A(a.data().data(), m, k), B(b.data().data(), k, n);
        if (a.requires_grad()) {
          detail::MapRM<S> GA(a.node()->grad_buf().data(), m, k);
          GA.noalias() += G * B.transpose();
        }
        if (b.requires_grad()) {
          detail::MapRM<S> GB(b.node()->grad_buf().data(), k, n);
          GB.noalias() += A.transpose() * G;
        }
      });
}

// ---------------------------------------------------------------------------
// conv2d: NCHW cross-correlation with odd kernel, stride, zero padding and
// per-output-channel bias. Forward/backward run through im2col + GEMM.
// ---------------------------------------------------------------------------

namespace detail {

// Fills a (C*k*k) x (Hout*Wout) row-major patch matrix for one image.
template <typename S>
void im2col(const S* img, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t k,
            std::int64_t stride, std::int64_t pad, std::int64_t Hout, std::int64_t Wout,
            S* col) {
  for (std::int64_t c = 0; c < C; ++c) {
    const S* plane = img + c * H * W;
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        S* row = col + ((c * k + ky) * k + kx) * Hout * Wout;
        for (std::int64_t oy = 0; oy < Hout; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(row, row + Wout, S(0));
            row += Wout;
            continue;
          }
          const S* src = plane + iy * W;
          for (std::int64_t ox = 0; ox < Wout; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            *row++ = (ix >= 0 && ix < W) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a patch-matrix gradient back onto the input image.
template <typename S>
void col2im_add(const S* col, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t k,
                std::int64_t stride, std::int64_t pad, std::int64_t Hout, std::int64_t Wout,
                S* img) {
  for (std::int64_t c = 0; c < C; ++c) {
    S* plane = img + c * H * W;
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        const S* row = col + ((c * k + ky) * k + kx) * Hout * Wout;
        for (std::int64_t oy = 0; oy < Hout; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            row += Wout;
            continue;
          }
          S* dst = plane + iy * W;
          for (std::int64_t ox = 0; ox < Wout; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += row[ox];
          }
          row += Wout;
        }
      }
    }
  }
}

template <typename S>
std::vector<S>& conv_scratch() {
  thread_local std::vector<S> buf;
  return buf;
}

}  // namespace detail

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 std::int64_t stride, std::int64_t padding) {
  detail::check(input.rank() == 4, "conv2d: input must be NCHW, got " + shape_str(input.shape()));
  detail::check(weight.rank() == 4,
                "conv2d: kernel must be OxCxkxk, got " + shape_str(weight.shape()));
  const auto N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const auto O = weight.dim(0), k = weight.dim(2);
  detail::check(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square");
  detail::check(k % 2 == 1, "conv2d: kernel size must be odd, got " + std::to_string(k));
  detail::check(weight.dim(1) == C, "conv2d: kernel expects " + std::to_string(weight.dim(1)) +
                                        " input channels, input has " + std::to_string(C));
  detail::check(bias.rank() == 1 && bias.dim(0) == O,
                "conv2d: bias must have one entry per output channel");
  detail::check(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");
  detail::check(H + 2 * padding >= k && W + 2 * padding >= k,
                "conv2d: spatial extent smaller than kernel after padding");
  const std::int64_t Hout = (H + 2 * padding - k) / stride + 1;
  const std::int64_t Wout = (W + 2 * padding - k) / stride + 1;
  const std::int64_t CKK = C * k * k, P = Hout * Wout;

  std::vector<S> out(static_cast<size_t>(N * O * P));
  auto& col = detail::conv_scratch<S>();
  col.resize(static_cast<size_t>(CKK * P));
  detail::CMapRM<S> Wm(weight.data().data(), O, CKK);
  for (std::int64_t n = 0; n < N; ++n) {
    detail::im2col(input.data().data() + n * C * H * W, C, H, W, k, stride, padding, Hout, Wout,
                   col.data());
    detail::CMapRM<S> Cm(col.data(), CKK, P);
    detail::MapRM<S> Om(out.data() + n * O * P, O, P);
    Om.noalias() = Wm * Cm;
    for (std::int64_t o = 0; o < O; ++o) {
      S* row = out.data() + (n * O + o) * P;
      const S bv = bias.data()[o];
      for (std::int64_t p = 0; p < P; ++p) row[p] += bv;
    }
  }

  auto backward = [input, weight, bias, stride, padding, N, C, H, W, O, k, CKK, P, Hout,
                   Wout](detail::Node<S>& self) {
    auto& col = detail::conv_scratch<S>();
    col.resize(static_cast<size_t>(CKK * P));
    std::vector<S> colg;
    const bool need_input = input.requires_grad();
    const bool need_weight = weight.requires_grad();
    if (need_input) colg.resize(static_cast<size_t>(CKK * P));
    detail::CMapRM<S> Wm(weight.data().data(), O, CKK);
    for (std::int64_t n = 0; n < N; ++n) {
      detail::CMapRM<S> G(self.grad.data() + n * O * P, O, P);
      if (need_weight) {
        detail::im2col(input.data().data() + n * C * H * W, C, H, W, k, stride, padding, Hout,
                       Wout, col.data());
        detail::CMapRM<S> Cm(col.data(), CKK, P);
        detail::MapRM<S> GW(weight.node()->grad_buf().data(), O, CKK);
        GW.noalias() += G * Cm.transpose();
      }
      if (need_input) {
        detail::MapRM<S> GC(colg.data(), CKK, P);
        GC.noalias() = Wm.transpose() * G;
        detail::col2im_add(colg.data(), C, H, W, k, stride, padding, Hout, Wout,
                           input.node()->grad_buf().data() + n * C * H * W);
      }
      if (bias.requires_grad()) {
        auto gb = bias.node()->grad_buf();
        for (std::int64_t o = 0; o < O; ++o) {
          const S* row = self.grad.data() + (n * O + o) * P;
          S s = S(0);
          for (std::int64_t p = 0; p < P; ++p) s += row[p];
          gb[static_cast<size_t>(o)] += s;
        }
      }
    }
  };
  return Tensor<S>::make_op({N, O, Hout, Wout}, std::move(out), {input, weight, bias},
                            std::move(backward));
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

// Non-overlapping window max pooling; spatial extents must divide evenly.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& input, std::int64_t window) {
  detail::check(input.rank() == 4, "maxpool2d: input must be NCHW");
  detail::check(window >= 1, "maxpool2d: window must be positive");
  const auto N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  detail::check(H % window == 0 && W % window == 0,
                "maxpool2d: spatial extents " + std::to_string(H) + "x" + std::to_string(W) +
                    " not divisible by window " + std::to_string(window));
  const std::int64_t Ho = H / window, Wo = W / window;
  std::vector<S> out(static_cast<size_t>(N * C * Ho * Wo));
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
  const S* in = input.data().data();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* plane = in + nc * H * W;
    for (std::int64_t oy = 0; oy < Ho; ++oy)
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        std::int64_t best = (oy * window) * W + ox * window;
        S bv = plane[best];
        for (std::int64_t dy = 0; dy < window; ++dy)
          for (std::int64_t dx = 0; dx < window; ++dx) {
            const std::int64_t idx = (oy * window + dy) * W + ox * window + dx;
            if (plane[idx] > bv) {  // ties keep the first (scan order)
              bv = plane[idx];
              best = idx;
            }
          }
        const std::int64_t o = nc * Ho * Wo + oy * Wo + ox;
        out[static_cast<size_t>(o)] = bv;
        (*argmax)[static_cast<size_t>(o)] = static_cast<std::int32_t>(best);
      }
  }
  return Tensor<S>::make_op({N, C, Ho, Wo}, std::move(out), {input},
                            [input, argmax, H, W, Ho, Wo](detail::Node<S>& self) {
                              if (!input.requires_grad()) return;
                              auto gi = input.node()->grad_buf();
                              const auto NC = input.dim(0) * input.dim(1);
                              for (std::int64_t nc = 0; nc < NC; ++nc) {
                                S* gplane = gi.data() + nc * H * W;
                                const std::int64_t base = nc * Ho * Wo;
                                for (std::int64_t p = 0; p < Ho * Wo; ++p)
                                  gplane[(*argmax)[static_cast<size_t>(base + p)]] +=
                                      self.grad[static_cast<size_t>(base + p)];
                              }
                            });
}

// Global average pooling to 1x1. Each channel's values are summed in
// ascending value order, so the result depends only on the value multiset:
// spatial permutations of the input (e.g. 90-degree rotations of an
// equivariant feature map) produce bitwise-identical pooled features.
template <typename S>
Tensor<S> global_avgpool(const Tensor<S>& input) {
  detail::check(input.rank() == 4, "global_avgpool: input must be NCHW");
  const auto N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t HW = H * W;
  std::vector<S> out(static_cast<size_t>(N * C));
  std::vector<S> scratch(static_cast<size_t>(HW));
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* plane = input.data().data() + nc * HW;
    std::copy(plane, plane + HW, scratch.begin());
    std::sort(scratch.begin(), scratch.end());
    S s = S(0);
    for (S v : scratch) s += v;
    out[static_cast<size_t>(nc)] = s / static_cast<S>(HW);
  }
  return Tensor<S>::make_op({N, C, 1, 1}, std::move(out), {input},
                            [input, HW](detail::Node<S>& self) {
                              if (!input.requires_grad()) return;
                              auto gi = input.node()->grad_buf();
                              const S inv = S(1) / static_cast<S>(HW);
                              for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(self.grad.size());
                                   ++nc) {
                                const S g = self.grad[static_cast<size_t>(nc)] * inv;
                                S* gp = gi.data() + nc * HW;
                                for (std::int64_t i = 0; i < HW; ++i) gp[i] += g;
                              }
                            });
}

// Companion max variant of the global pooling.
template <typename S>
Tensor<S> global_maxpool(const Tensor<S>& input) {
  detail::check(input.rank() == 4, "global_maxpool: input must be NCHW");
  const auto N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t HW = H * W;
  std::vector<S> out(static_cast<size_t>(N * C));
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* plane = input.data().data() + nc * HW;
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < HW; ++i)
      if (plane[i] > plane[best]) best = i;
    out[static_cast<size_t>(nc)] = plane[best];
    (*argmax)[static_cast<size_t>(nc)] = static_cast<std::int32_t>(best);
  }
  return Tensor<S>::make_op({N, C, 1, 1}, std::move(out), {input},
                            [input, argmax, HW](detail::Node<S>& self) {
                              if (!input.requires_grad()) return;
                              auto gi = input.node()->grad_buf();
                              for (size_t nc = 0; nc < self.grad.size(); ++nc)
                                gi[nc * static_cast<size_t>(HW) +
                                   static_cast<size_t>((*argmax)[nc])] += self.grad[nc];
                            });
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy (fused), mean or sum reduction over the batch
// ---------------------------------------------------------------------------

enum class Reduction { Mean, Sum };

template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, std::span<const int> labels,
                                Reduction reduction = Reduction::Mean) {
  detail::check(logits.rank() == 2, "softmax_cross_entropy: logits must be NxK");
  const auto N = logits.dim(0), K = logits.dim(1);
  detail::check(static_cast<std::int64_t>(labels.size()) == N,
                "softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                    " != batch size " + std::to_string(N));
  for (int lbl : labels)
    detail::check(lbl >= 0 && lbl < K, "softmax_cross_entropy: label out of range");

  auto probs = std::make_shared<std::vector<S>>(static_cast<size_t>(N * K));
  double total = 0.0;
  for (std::int64_t i = 0; i < N; ++i) {
    const S* row = logits.data().data() + i * K;
    S m = row[0];
    for (std::int64_t j = 1; j < K; ++j) m = std::max(m, row[j]);
    double lse = 0.0;
    for (std::int64_t j = 0; j < K; ++j) lse += std::exp(static_cast<double>(row[j] - m));
    lse = std::log(lse);
    for (std::int64_t j = 0; j < K; ++j)
      (*probs)[static_cast<size_t>(i * K + j)] =
          static_cast<S>(std::exp(static_cast<double>(row[j] - m) - lse));
    total += lse + static_cast<double>(m) - static_cast<double>(row[labels[i]]);
  }
  if (reduction == Reduction::Mean) total /= static_cast<double>(N);
  std::vector<int> lbl(labels.begin(), labels.end());
  return Tensor<S>::make_op(
      {1}, {static_cast<S>(total)}, {logits},
      [logits, probs, lbl = std::move(lbl), reduction, N, K](detail::Node<S>& self) {
        if (!logits.requires_grad()) return;
        S scale = self.grad[0];
        if (reduction == Reduction::Mean) scale /= static_cast<S>(N);
        auto gl = logits.node()->grad_buf();
        for (std::int64_t i = 0; i < N; ++i)
          for (std::int64_t j = 0; j < K; ++j) {
            S p = (*probs)[static_cast<size_t>(i * K + j)];
            if (j == lbl[static_cast<size_t>(i)]) p -= S(1);
            gl[static_cast<size_t>(i * K + j)] += scale * p;
          }
      });
}

}  // namespace sortconv
