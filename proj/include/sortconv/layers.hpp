#pragma once

// Network building blocks: standard conv, sorted conv (sort_expand followed by
// a stride-(2n+1) convolution, which brings the output back to h x w), and the
// fully connected head. Weights are uniform in +-1/sqrt(fan_in) for both conv
// kinds so baseline/SCNN comparisons start from identical draws; biases start
// at zero.

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "sortconv/ops.hpp"
#include "sortconv/sampler.hpp"
#include "sortconv/sorter.hpp"
#include "sortconv/tensor.hpp"

namespace sortconv {

template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  std::vector<S> m1, m2;  // optimizer moments, zero-initialised, optimizer-owned
  std::int64_t steps = 0;

  std::int64_t numel() const { return value.numel(); }
};

template <typename S, typename Rng>
Parameter<S> make_conv_param(std::string name, std::int64_t out_ch, std::int64_t in_ch,
                             std::int64_t k, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k));
  Parameter<S> p;
  p.name = std::move(name);
  p.value = Tensor<S>::uniform({out_ch, in_ch, k, k}, rng, static_cast<S>(-bound),
                               static_cast<S>(bound));
  p.value.set_requires_grad(true);
  return p;
}

template <typename S>
Parameter<S> make_zero_param(std::string name, Shape shape) {
  Parameter<S> p;
  p.name = std::move(name);
  p.value = Tensor<S>::zeros(std::move(shape));
  p.value.set_requires_grad(true);
  return p;
}

// Standard convolution layer; padding defaults to (k-1)/2 so stride-1 keeps
// the spatial extent ("same" padding).
template <typename S>
struct Conv2dLayer {
  Parameter<S> weight, bias;
  std::int64_t stride = 1;
  std::int64_t padding = 0;

  Tensor<S> forward(const Tensor<S>& x) const {
    return conv2d(x, weight.value, bias.value, stride, padding);
  }
};

template <typename S, typename Rng>
Conv2dLayer<S> make_conv_layer(const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
                               std::int64_t k, Rng& rng) {
  Conv2dLayer<S> l;
  l.weight = make_conv_param<S>(name + ".weight", out_ch, in_ch, k, rng);
  l.bias = make_zero_param<S>(name + ".bias", {out_ch});
  l.stride = 1;
  l.padding = (k - 1) / 2;
  return l;
}

// Full sorted-conv configuration: half-width n, sampling and sorting modes,
// channel counts and the (2n+1) kernel parameters. The expansion introduces no
// trainable parameters, so the layer's count matches a standard conv.
template <typename S>
struct SortedConvLayer {
  int n = 1;
  Sampling sampling = Sampling::Square;
  Sorting sorting = Sorting::Global;
  std::int64_t in_channels = 0, out_channels = 0;
  SamplePlan sample_plan;
  SortPlan sort_plan;
  Parameter<S> weight, bias;

  Tensor<S> forward(const Tensor<S>& x) const {
    if (x.dim(1) != in_channels)
      throw ShapeError("sorted conv expects " + std::to_string(in_channels) +
                       " channels, input has " + std::to_string(x.dim(1)));
    if (n == 0)  // sorting a singleton is the identity; use the plain 1x1 path
      return conv2d(x, weight.value, bias.value, 1, 0);
    const std::int64_t side = 2 * n + 1;
    Tensor<S> expanded = sort_expand(x, sample_plan, sort_plan);
    if (expanded.dim(2) % side != 0 || expanded.dim(3) % side != 0)
      throw std::logic_error("sorted conv: expanded extent not divisible by stride");
    return conv2d(expanded, weight.value, bias.value, side, 0);
  }
};

template <typename S, typename Rng>
SortedConvLayer<S> make_sorted_conv_layer(const std::string& name, std::int64_t in_ch,
                                          std::int64_t out_ch, int n, Sampling sampling,
                                          Sorting sorting, Rng& rng, double phase = 0.0) {
  SortedConvLayer<S> l;
  l.n = n;
  l.sampling = sampling;
  l.sorting = sorting;
  l.in_channels = in_ch;
  l.out_channels = out_ch;
  if (n >= 1) {
    l.sample_plan = build_sample_plan(n, sampling, phase);
    l.sort_plan = build_sort_plan(l.sample_plan, sorting);
  }
  const std::int64_t k = 2 * n + 1;
  l.weight = make_conv_param<S>(name + ".weight", out_ch, in_ch, k, rng);
  l.bias = make_zero_param<S>(name + ".bias", {out_ch});
  return l;
}

template <typename S>
struct LinearLayer {
  Parameter<S> weight;  // in x out
  Parameter<S> bias;    // out

  Tensor<S> forward(const Tensor<S>& x) const {
    return add(matmul(x, weight.value), bias.value);
  }
};

template <typename S, typename Rng>
LinearLayer<S> make_linear_layer(const std::string& name, std::int64_t in, std::int64_t out,
                                 Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  LinearLayer<S> l;
  l.weight = Parameter<S>{name + ".weight",
                          Tensor<S>::uniform({in, out}, rng, static_cast<S>(-bound),
                                             static_cast<S>(bound)),
                          {},
                          {},
                          0};
  l.weight.value.set_requires_grad(true);
  l.bias = make_zero_param<S>(name + ".bias", {out});
  return l;
}

// Spec-facing helpers --------------------------------------------------------

// Standard same-padding convolution (stride 1, padding (k-1)/2).
template <typename S>
Tensor<S> std_forward(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias) {
  return conv2d(input, kernel, bias, 1, (kernel.dim(2) - 1) / 2);
}

// Sorted convolution on explicit plans (the layer's forward without the
// layer object).
template <typename S>
Tensor<S> sc_forward(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>& bias,
                     const SamplePlan& sample_plan, const SortPlan& sort_plan) {
  const std::int64_t side = 2 * sample_plan.n + 1;
  if (kernel.dim(2) != side)
    throw ShapeError("sc_forward: kernel extent " + std::to_string(kernel.dim(2)) +
                     " does not match plan side " + std::to_string(side));
  return conv2d(sort_expand(input, sample_plan, sort_plan), kernel, bias, side, 0);
}

// Per-channel mean over the spatial extent (see global_avgpool for the
// value-ordered summation); alias named for the model head.
template <typename S>
Tensor<S> global_avgpool_to_1x1(const Tensor<S>& input) {
  return global_avgpool(input);
}

template <typename S>
Tensor<S> global_maxpool_to_1x1(const Tensor<S>& input) {
  return global_maxpool(input);
}

}  // namespace sortconv
