#pragma once

// The six-conv model family: a baseline CNN and its sorted-conv twin built
// from the same configuration. Channels run 32, 32, 64, 64, 128, 128 with 2x2
// max pooling after layers 2 and 4, global average pooling after layer 6, and
// a 10-unit fully connected head. The first four layers use kernel size
// K in {3,5,7}; the last two are always 3x3. Variants are named
// "{S|P}-{GS|RS}-{K}" (sampling, sorting, K) or "baseline-{K}".

#include <cstdint>
#include <random>
#include <regex>
#include <string>
#include <variant>
#include <vector>

#include "sortconv/layers.hpp"

namespace sortconv {

enum class ModelKind { Baseline, Scnn };

struct ModelSpec {
  ModelKind kind = ModelKind::Baseline;
  int K = 3;
  Sampling sampling = Sampling::Square;
  Sorting sorting = Sorting::Global;
  int num_classes = 10;
  int input_channels = 1;
  double phase = 0.0;  // polar sampling phase, audit knob

  std::string name() const {
    if (kind == ModelKind::Baseline) return "baseline-" + std::to_string(K);
    std::string s = sampling == Sampling::Square ? "S" : "P";
    std::string o = sorting == Sorting::Global ? "GS" : "RS";
    return s + "-" + o + "-" + std::to_string(K);
  }

  // Accepts "S-GS-3" style names and "baseline-K"; anything else is rejected.
  static ModelSpec parse(const std::string& name) {
    static const std::regex scnn_re("^(S|P)-(GS|RS)-(3|5|7)$");
    static const std::regex base_re("^baseline-(3|5|7)$");
    std::smatch m;
    ModelSpec spec;
    if (std::regex_match(name, m, scnn_re)) {
      spec.kind = ModelKind::Scnn;
      spec.sampling = m[1] == "S" ? Sampling::Square : Sampling::Polar;
      spec.sorting = m[2] == "GS" ? Sorting::Global : Sorting::Ring;
      spec.K = std::stoi(m[3]);
      return spec;
    }
    if (std::regex_match(name, m, base_re)) {
      spec.kind = ModelKind::Baseline;
      spec.K = std::stoi(m[1]);
      return spec;
    }
    throw std::invalid_argument("invalid model variant '" + name +
                                "' (expected {S|P}-{GS|RS}-{3|5|7} or baseline-{3|5|7})");
  }
};

template <typename S>
using AnyConv = std::variant<Conv2dLayer<S>, SortedConvLayer<S>>;

template <typename S>
struct ParamRef {
  Parameter<S>* param;
};

template <typename S>
struct Model {
  ModelSpec spec;
  std::vector<AnyConv<S>> convs;  // six entries
  LinearLayer<S> fc;

  Tensor<S> conv_forward(size_t i, const Tensor<S>& x) const {
    return std::visit([&](const auto& layer) { return layer.forward(x); }, convs[i]);
  }

  // Post-pooling feature, NxCx1x1; the spatially pooled output of the last
  // conv layer.
  Tensor<S> feature_map(const Tensor<S>& x) const {
    Tensor<S> t = relu(conv_forward(0, x));
    t = relu(conv_forward(1, t));
    t = maxpool2d(t, 2);
    t = relu(conv_forward(2, t));
    t = relu(conv_forward(3, t));
    t = maxpool2d(t, 2);
    t = relu(conv_forward(4, t));
    t = relu(conv_forward(5, t));
    return global_avgpool(t);
  }

  Tensor<S> logits(const Tensor<S>& x) const {
    Tensor<S> f = feature_map(x);
    return fc.forward(reshape(f, {f.dim(0), f.dim(1)}));
  }

  // The 128-dim rotation-invariant descriptor of a single image (SCNN only;
  // the baseline's pooled feature carries no invariance guarantee).
  std::vector<S> invariant_feature(const Tensor<S>& image) const {
    if (spec.kind != ModelKind::Scnn)
      throw std::logic_error("invariant_feature: only defined for SCNN variants");
    NoGradGuard ng;
    Tensor<S> f = feature_map(image);
    return std::vector<S>(f.data().begin(), f.data().end());
  }

  std::vector<ParamRef<S>> parameters() {
    std::vector<ParamRef<S>> out;
    for (auto& c : convs)
      std::visit(
          [&](auto& layer) {
            out.push_back({&layer.weight});
            out.push_back({&layer.bias});
          },
          c);
    out.push_back({&fc.weight});
    out.push_back({&fc.bias});
    return out;
  }

  std::vector<const Parameter<S>*> parameters() const {
    std::vector<const Parameter<S>*> out;
    for (const auto& c : convs)
      std::visit(
          [&](const auto& layer) {
            out.push_back(&layer.weight);
            out.push_back(&layer.bias);
          },
          c);
    out.push_back(&fc.weight);
    out.push_back(&fc.bias);
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto* p : parameters()) n += p->numel();
    return n;
  }

  // A structural copy whose parameter tensors alias this model's data but own
  // fresh gradient buffers: the per-shard leaf pattern for data-parallel
  // training over independent graphs.
  Model grad_clone() const {
    Model m = *this;
    for (auto& c : m.convs)
      std::visit(
          [&](auto& layer) {
            layer.weight.value =
                Tensor<S>::alias(layer.weight.value, layer.weight.value.shape(), true);
            layer.bias.value = Tensor<S>::alias(layer.bias.value, layer.bias.value.shape(), true);
            layer.weight.m1.clear();
            layer.weight.m2.clear();
            layer.bias.m1.clear();
            layer.bias.m2.clear();
          },
          c);
    m.fc.weight.value = Tensor<S>::alias(fc.weight.value, fc.weight.value.shape(), true);
    m.fc.bias.value = Tensor<S>::alias(fc.bias.value, fc.bias.value.shape(), true);
    m.fc.weight.m1.clear();
    m.fc.weight.m2.clear();
    m.fc.bias.m1.clear();
    m.fc.bias.m2.clear();
    return m;
  }

  // Deep copy (own data buffers); used for best-checkpoint snapshots.
  Model snapshot() const {
    Model m = *this;
    auto copy_param = [](Parameter<S>& p) {
      std::vector<S> d(p.value.data().begin(), p.value.data().end());
      p.value = Tensor<S>::from(p.value.shape(), std::move(d));
      p.value.set_requires_grad(true);
    };
    for (auto& c : m.convs)
      std::visit(
          [&](auto& layer) {
            copy_param(layer.weight);
            copy_param(layer.bias);
          },
          c);
    copy_param(m.fc.weight);
    copy_param(m.fc.bias);
    return m;
  }
};

template <typename S>
Model<S> build_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.K != 3 && spec.K != 5 && spec.K != 7)
    throw std::invalid_argument("build_model: K must be 3, 5 or 7, got " +
                                std::to_string(spec.K));
  if (spec.num_classes < 1 || spec.input_channels < 1)
    throw std::invalid_argument("build_model: invalid class/channel configuration");
  std::mt19937_64 rng(seed);
  Model<S> m;
  m.spec = spec;
  const int ch[7] = {spec.input_channels, 32, 32, 64, 64, 128, 128};
  for (int i = 0; i < 6; ++i) {
    const int k = i < 4 ? spec.K : 3;
    const std::string name = "conv" + std::to_string(i + 1);
    if (spec.kind == ModelKind::Baseline) {
      m.convs.emplace_back(make_conv_layer<S>(name, ch[i], ch[i + 1], k, rng));
    } else {
      m.convs.emplace_back(make_sorted_conv_layer<S>(name, ch[i], ch[i + 1], (k - 1) / 2,
                                                     spec.sampling, spec.sorting, rng,
                                                     spec.phase));
    }
  }
  m.fc = make_linear_layer<S>("fc", 128, spec.num_classes, rng);
  return m;
}

}  // namespace sortconv
