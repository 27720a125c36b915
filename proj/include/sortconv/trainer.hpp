#pragma once

// Training loop: shuffled mini-batches, softmax cross-entropy, Adam with bias
// correction, step-decayed learning rate (lr0 * decay^floor(epoch/every)),
// per-epoch validation tracking with a best-model snapshot, and an abort on
// non-finite loss. Batches are split into per-worker shards, each running
// forward/backward on its own graph against aliased weights; shard gradients
// are reduced in fixed order, so a single worker (deterministic mode) is
// bitwise reproducible.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sortconv/dataset.hpp"
#include "sortconv/models.hpp"
#include "sortconv/ops.hpp"
#include "sortconv/runtime.hpp"

namespace sortconv {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 100;
  double lr0 = 1e-4;
  double lr_decay = 0.8;
  int decay_every = 10;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  double lr_at(int epoch) const {
    return lr0 * std::pow(lr_decay, static_cast<double>(epoch / decay_every));
  }
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double valid_accuracy = 0.0;  // NaN when no validation set
};

template <typename S>
struct TrainResult {
  std::vector<EpochStats> history;
  Model<S> best;  // best-validation snapshot (final model when no validation)
  int best_epoch = -1;
  double best_valid_accuracy = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::int64_t correct = 0;
  std::int64_t total = 0;
  std::vector<std::int64_t> per_class_correct;
  std::vector<std::int64_t> per_class_total;
};

namespace detail {

template <typename S>
Tensor<S> batch_tensor(std::span<const LabeledImage> images, std::span<const std::int64_t> idx) {
  const int h = images[static_cast<size_t>(idx[0])].h, w = images[static_cast<size_t>(idx[0])].w;
  std::vector<S> data;
  data.reserve(idx.size() * static_cast<size_t>(h) * w);
  for (auto i : idx) {
    const auto& img = images[static_cast<size_t>(i)];
    for (float v : img.pixels) data.push_back(static_cast<S>(v));
  }
  return Tensor<S>::from({static_cast<std::int64_t>(idx.size()), 1, h, w}, std::move(data));
}

}  // namespace detail

// Argmax-of-logits accuracy; prediction ties resolve to the lowest class
// index. Evaluation shards run in parallel with read-only weights.
template <typename S>
EvalResult evaluate(const Model<S>& model, std::span<const LabeledImage> data,
                    int batch_size = 200) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty data");
  const int classes = model.spec.num_classes;
  const int workers = runtime::threads();
  std::vector<EvalResult> partial(static_cast<size_t>(std::max(workers, 1)));
  runtime::parallel_chunks(
      static_cast<std::int64_t>(data.size()),
      [&](std::int64_t begin, std::int64_t end, int worker) {
        NoGradGuard ng;
        EvalResult& r = partial[static_cast<size_t>(worker)];
        r.per_class_correct.assign(static_cast<size_t>(classes), 0);
        r.per_class_total.assign(static_cast<size_t>(classes), 0);
        std::vector<std::int64_t> idx;
        for (std::int64_t b = begin; b < end; b += batch_size) {
          const std::int64_t e = std::min(end, b + batch_size);
          idx.resize(static_cast<size_t>(e - b));
          for (std::int64_t i = b; i < e; ++i) idx[static_cast<size_t>(i - b)] = i;
          Tensor<S> x = detail::batch_tensor<S>(data, idx);
          Tensor<S> out = model.logits(x);
          for (std::int64_t i = 0; i < e - b; ++i) {
            const S* row = out.data().data() + i * classes;
            int pred = 0;
            for (int c = 1; c < classes; ++c)
              if (row[c] > row[pred]) pred = c;  // ties keep the lowest index
            const int truth = data[static_cast<size_t>(b + i)].label;
            r.per_class_total[static_cast<size_t>(truth)]++;
            if (pred == truth) r.per_class_correct[static_cast<size_t>(truth)]++;
          }
        }
      },
      workers);
  EvalResult total;
  total.per_class_correct.assign(static_cast<size_t>(classes), 0);
  total.per_class_total.assign(static_cast<size_t>(classes), 0);
  for (const auto& r : partial) {
    if (r.per_class_total.empty()) continue;
    for (int c = 0; c < classes; ++c) {
      total.per_class_correct[static_cast<size_t>(c)] += r.per_class_correct[static_cast<size_t>(c)];
      total.per_class_total[static_cast<size_t>(c)] += r.per_class_total[static_cast<size_t>(c)];
    }
  }
  for (int c = 0; c < classes; ++c) {
    total.correct += total.per_class_correct[static_cast<size_t>(c)];
    total.total += total.per_class_total[static_cast<size_t>(c)];
  }
  total.accuracy = static_cast<double>(total.correct) / static_cast<double>(total.total);
  return total;
}

namespace detail {

// One Adam step on a master parameter given the already-reduced gradient.
template <typename S>
void adam_step(Parameter<S>& p, std::span<const S> grad, const TrainConfig& cfg, double lr) {
  const size_t n = static_cast<size_t>(p.numel());
  if (p.m1.size() != n) p.m1.assign(n, S(0));
  if (p.m2.size() != n) p.m2.assign(n, S(0));
  p.steps += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(p.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(p.steps));
  auto w = p.value.mutable_data();
  for (size_t i = 0; i < n; ++i) {
    const double g = static_cast<double>(grad[i]);
    const double m = b1 * static_cast<double>(p.m1[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(p.m2[i]) + (1.0 - b2) * g * g;
    p.m1[i] = static_cast<S>(m);
    p.m2[i] = static_cast<S>(v);
    const double mhat = m / c1, vhat = v / c2;
    w[i] = static_cast<S>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
  }
}

}  // namespace detail

template <typename S>
TrainResult<S> train(Model<S>& model, std::span<const LabeledImage> train_data,
                     std::span<const LabeledImage> valid_data, const TrainConfig& cfg,
                     bool verbose = false) {
  if (train_data.empty()) throw std::invalid_argument("train: empty training data");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.decay_every < 1)
    throw std::invalid_argument("train: invalid epochs/batch_size/decay_every");

  TrainResult<S> result;
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::int64_t> order(train_data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);

  auto master_params = model.parameters();
  const size_t n_params = master_params.size();
  std::vector<std::vector<S>> reduced(n_params);
  for (size_t p = 0; p < n_params; ++p)
    reduced[p].assign(static_cast<size_t>(master_params[p].param->numel()), S(0));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::int64_t seen = 0;

    for (size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<size_t>(cfg.batch_size)) {
      const size_t batch_end =
          std::min(order.size(), batch_start + static_cast<size_t>(cfg.batch_size));
      const std::int64_t bn = static_cast<std::int64_t>(batch_end - batch_start);
      std::span<const std::int64_t> batch_idx(order.data() + batch_start,
                                              static_cast<size_t>(bn));

      const int workers = std::max(1, std::min<int>(runtime::threads(),
                                                    static_cast<int>(bn)));
      std::vector<Model<S>> shards;
      std::vector<double> shard_loss(static_cast<size_t>(workers), 0.0);
      shards.reserve(static_cast<size_t>(workers));
      for (int s = 0; s < workers; ++s) shards.push_back(model.grad_clone());

      runtime::parallel_chunks(
          bn,
          [&](std::int64_t b, std::int64_t e, int worker) {
            Model<S>& shard = shards[static_cast<size_t>(worker)];
            std::vector<std::int64_t> idx(batch_idx.begin() + b, batch_idx.begin() + e);
            Tensor<S> x = detail::batch_tensor<S>(train_data, idx);
            std::vector<int> labels(idx.size());
            for (size_t i = 0; i < idx.size(); ++i)
              labels[i] = train_data[static_cast<size_t>(idx[i])].label;
            Tensor<S> loss =
                softmax_cross_entropy(shard.logits(x), labels, Reduction::Sum);
            shard_loss[static_cast<size_t>(worker)] = static_cast<double>(loss.item());
            loss.backward();
          },
          workers);

      double batch_loss = 0.0;
      for (double l : shard_loss) batch_loss += l;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_start / cfg.batch_size));
      epoch_loss += batch_loss;
      seen += bn;

      // Reduce shard gradients in shard order, take the batch mean, step.
      const S inv_bn = S(1) / static_cast<S>(bn);
      for (size_t p = 0; p < n_params; ++p) {
        auto& acc = reduced[p];
        std::fill(acc.begin(), acc.end(), S(0));
        for (int s = 0; s < workers; ++s) {
          auto shard_params = shards[static_cast<size_t>(s)].parameters();
          const auto& g = shard_params[p].param->value.node()->grad;
          if (g.empty()) continue;
          for (size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
        }
        for (auto& v : acc) v *= inv_bn;
        detail::adam_step(*master_params[p].param, acc, cfg, lr);
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = epoch_loss / static_cast<double>(seen);
    st.valid_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (!valid_data.empty()) {
      st.valid_accuracy = evaluate(model, valid_data).accuracy;
      if (result.best_epoch < 0 || st.valid_accuracy > result.best_valid_accuracy) {
        result.best = model.snapshot();
        result.best_epoch = epoch;
        result.best_valid_accuracy = st.valid_accuracy;
      }
    }
    if (verbose)
      std::fprintf(stderr, "epoch %3d  lr %.3e  loss %.5f  valid %.4f\n", epoch, lr,
                   st.train_loss, st.valid_accuracy);
    result.history.push_back(st);
  }
  if (result.best_epoch < 0) {
    result.best = model.snapshot();
    result.best_epoch = cfg.epochs - 1;
  }
  return result;
}

// History CSV: epoch, lr, train_loss, valid_accuracy.
inline void write_history_csv(const std::string& path, std::span<const EpochStats> history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot create history file: " + path);
  out << "epoch,lr,train_loss,valid_accuracy\n";
  for (const auto& st : history) {
    out << st.epoch << ',' << st.lr << ',' << st.train_loss << ',';
    if (std::isnan(st.valid_accuracy))
      out << "";
    else
      out << st.valid_accuracy;
    out << '\n';
  }
}

}  // namespace sortconv
