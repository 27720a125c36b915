#pragma once

// Sorting of sampled neighborhood values and the expansion trick: every pixel's
// (2n+1)^2 samples are sorted (one global ascending sort, or one per ring),
// placed on a (2n+1)x(2n+1) block, and the blocks are tiled into a
// ((2n+1)h)x((2n+1)w) tensor ready for a stride-(2n+1) convolution.
//
// Channels are sorted independently. The multiset of a pixel's samples per
// channel is preserved exactly, which is what makes the downstream convolution
// insensitive to rotations that permute the sample set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sortconv/sampler.hpp"
#include "sortconv/tensor.hpp"

namespace sortconv {

enum class Sorting { Global, Ring };

inline std::string to_string(Sorting s) { return s == Sorting::Global ? "global" : "ring"; }

struct SortPlan {
  Sorting mode = Sorting::Global;
  int n = 0;
  // groups[g] lists sample-slot indices in stable (tie-break) order;
  // placement[g] lists the destination cells on the row-major (2n+1)^2 block.
  // Groups partition the slots and placements form a bijection onto the cells.
  std::vector<std::vector<int>> groups;
  std::vector<std::vector<int>> placement;

  int side() const { return 2 * n + 1; }
  int count() const { return side() * side(); }
};

namespace detail {

// Destination cells of Chebyshev shell r, as flat row-major block indices.
// Square sampling places by row-major scan; polar placement follows ascending
// angle of the cell directions, mirroring the ring's angular sample order.
inline std::vector<int> shell_cells(int n, int r, Sampling sampling) {
  const int side = 2 * n + 1;
  std::vector<int> cells;
  for (int dy = -n; dy <= n; ++dy)
    for (int dx = -n; dx <= n; ++dx)
      if (std::max(std::abs(dy), std::abs(dx)) == r)
        cells.push_back((dy + n) * side + (dx + n));
  if (sampling == Sampling::Polar && r > 0) {
    auto angle = [n, side](int cell) {
      const int dy = cell / side - n, dx = cell % side - n;
      double a = std::atan2(static_cast<double>(dy), static_cast<double>(dx));
      if (a < 0) a += 2.0 * std::numbers::pi;
      return a;
    };
    std::sort(cells.begin(), cells.end(),
              [&](int a, int b) { return angle(a) < angle(b); });
  }
  return cells;
}

}  // namespace detail

inline SortPlan build_sort_plan(const SamplePlan& sample_plan, Sorting mode) {
  SortPlan plan;
  plan.mode = mode;
  plan.n = sample_plan.n;
  const int total = sample_plan.count();
  if (mode == Sorting::Global) {
    std::vector<int> all(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) all[static_cast<size_t>(i)] = i;
    plan.groups.push_back(all);
    plan.placement.push_back(all);  // row-major over the whole block
    return plan;
  }
  // Ring mode: one group per ring, slots by within-ring order.
  plan.groups.assign(static_cast<size_t>(plan.n) + 1, {});
  for (int slot = 0; slot < total; ++slot) {
    const auto& p = sample_plan.points[static_cast<size_t>(slot)];
    auto& g = plan.groups[static_cast<size_t>(p.ring)];
    g.push_back(slot);
  }
  for (int r = 0; r <= plan.n; ++r) {
    auto& g = plan.groups[static_cast<size_t>(r)];
    std::sort(g.begin(), g.end(), [&](int a, int b) {
      return sample_plan.points[static_cast<size_t>(a)].ring_order <
             sample_plan.points[static_cast<size_t>(b)].ring_order;
    });
    const size_t expect = r == 0 ? 1 : static_cast<size_t>(8 * r);
    if (g.size() != expect)
      throw std::logic_error("build_sort_plan: ring " + std::to_string(r) + " has " +
                             std::to_string(g.size()) + " slots, expected " +
                             std::to_string(expect));
    plan.placement.push_back(detail::shell_cells(plan.n, r, sample_plan.mode));
  }
  return plan;
}

namespace detail {

// Stable ascending sort of the (value, slot) pairs of one group. Values land
// in `out` at the group's placement cells; `perm[cell] = source slot`.
template <typename S>
void sort_group(std::span<const S> values, std::span<const int> group,
                std::span<const int> cells, S* out, int* perm) {
  const size_t m = group.size();
  // Small groups dominate (8..16 slots); insertion sort keeps it allocation
  // free and stable. Larger groups fall back to std::sort with a slot
  // tie-break, which is equivalent to a stable sort since slots are unique.
  struct Item {
    S v;
    int slot;
  };
  static thread_local std::vector<Item> items;
  items.resize(m);
  for (size_t i = 0; i < m; ++i) items[i] = {values[static_cast<size_t>(group[i])], group[i]};
  if (m <= 16) {
    for (size_t i = 1; i < m; ++i) {
      Item key = items[i];
      size_t j = i;
      while (j > 0 && items[j - 1].v > key.v) {
        items[j] = items[j - 1];
        --j;
      }
      items[j] = key;
    }
  } else {
    std::sort(items.begin(), items.end(), [&](const Item& a, const Item& b) {
      if (a.v != b.v) return a.v < b.v;
      // equal values: preserve group order (group lists slots in stable order)
      return a.slot < b.slot;
    });
  }
  for (size_t i = 0; i < m; ++i) {
    out[cells[i]] = items[i].v;
    if (perm) perm[cells[i]] = items[i].slot;
  }
}

}  // namespace detail

// Sorts one neighborhood's sample values according to the plan. Returns the
// block values (row-major cells) and the applied permutation
// (perm[cell] = source sample slot). The sort is stable: ties keep the
// group's slot order.
template <typename S>
std::pair<std::vector<S>, std::vector<int>> sort_neighborhood(std::span<const S> values,
                                                              const SortPlan& plan) {
  if (static_cast<int>(values.size()) != plan.count())
    throw std::invalid_argument("sort_neighborhood: got " + std::to_string(values.size()) +
                                " values for a plan of " + std::to_string(plan.count()));
  std::vector<S> out(values.size());
  std::vector<int> perm(values.size());
  for (size_t g = 0; g < plan.groups.size(); ++g)
    detail::sort_group<S>(values, plan.groups[g], plan.placement[g], out.data(), perm.data());
  return {std::move(out), std::move(perm)};
}

namespace detail {

// Per-slot taps flattened against the padded-row stride, for the hot loop.
struct FlatTap {
  std::int64_t off;
  double w;
};

template <typename S>
std::vector<S>& pad_scratch() {
  thread_local std::vector<S> buf;
  return buf;
}

}  // namespace detail

// Expands NxCxhxw into NxCx((2n+1)h)x((2n+1)w): per pixel and channel the
// neighborhood is sampled (zero padding, margin n+1), sorted per the sort
// plan, and written as a (2n+1)x(2n+1) block at the pixel's block position.
// The recorded permutation routes gradients back through the sort and the
// bilinear taps; padding contributions are discarded.
template <typename S>
Tensor<S> sort_expand(const Tensor<S>& input, const SamplePlan& sample_plan,
                      const SortPlan& sort_plan) {
  if (input.rank() != 4)
    throw ShapeError("sort_expand: input must be NCHW, got " + shape_str(input.shape()));
  if (sample_plan.n != sort_plan.n)
    throw std::invalid_argument("sort_expand: sample plan n=" + std::to_string(sample_plan.n) +
                                " but sort plan n=" + std::to_string(sort_plan.n));
  const auto N = input.dim(0), C = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 1 || w < 1) throw ShapeError("sort_expand: empty spatial extent");
  const int side = sample_plan.side();
  const int slots = sample_plan.count();
  const std::int64_t ho = side * h, wo = side * w;
  const std::int64_t margin = sample_plan.n + 1;
  const std::int64_t ph = h + 2 * margin, pw = w + 2 * margin;

  std::vector<detail::FlatTap> taps(static_cast<size_t>(slots) * 4);
  for (int s = 0; s < slots; ++s)
    for (int t = 0; t < 4; ++t) {
      const auto& tap = sample_plan.points[static_cast<size_t>(s)].taps[static_cast<size_t>(t)];
      taps[static_cast<size_t>(s) * 4 + static_cast<size_t>(t)] = {tap.dy * pw + tap.dx, tap.w};
    }
  const bool unit_taps = sample_plan.mode == Sampling::Square;

  const bool track = grad_enabled() && input.requires_grad();
  std::vector<S> out(static_cast<size_t>(N * C * ho * wo));
  auto record = std::make_shared<std::vector<std::uint8_t>>();
  if (track) record->resize(out.size());

  auto& pad = detail::pad_scratch<S>();
  pad.assign(static_cast<size_t>(ph * pw), S(0));
  std::vector<S> vals(static_cast<size_t>(slots));
  std::vector<S> block(static_cast<size_t>(slots));
  std::vector<int> perm(static_cast<size_t>(slots));

  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* plane = input.data().data() + nc * h * w;
    for (std::int64_t y = 0; y < h; ++y)
      std::copy(plane + y * w, plane + (y + 1) * w, pad.begin() + ((y + margin) * pw + margin));
    S* oplane = out.data() + nc * ho * wo;
    std::uint8_t* rplane = track ? record->data() + nc * ho * wo : nullptr;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const S* centre = pad.data() + (y + margin) * pw + (x + margin);
        if (unit_taps) {
          for (int s = 0; s < slots; ++s)
            vals[static_cast<size_t>(s)] = centre[taps[static_cast<size_t>(s) * 4].off];
        } else {
          for (int s = 0; s < slots; ++s) {
            const auto* t = &taps[static_cast<size_t>(s) * 4];
            vals[static_cast<size_t>(s)] =
                static_cast<S>(t[0].w * centre[t[0].off] + t[1].w * centre[t[1].off] +
                               t[2].w * centre[t[2].off] + t[3].w * centre[t[3].off]);
          }
        }
        for (size_t g = 0; g < sort_plan.groups.size(); ++g)
          detail::sort_group<S>(vals, sort_plan.groups[g], sort_plan.placement[g], block.data(),
                                perm.data());
        S* base = oplane + (y * side) * wo + x * side;
        for (int cy = 0; cy < side; ++cy)
          for (int cx = 0; cx < side; ++cx)
            base[cy * wo + cx] = block[static_cast<size_t>(cy * side + cx)];
        if (track) {
          std::uint8_t* rbase = rplane + (y * side) * wo + x * side;
          for (int cy = 0; cy < side; ++cy)
            for (int cx = 0; cx < side; ++cx)
              rbase[cy * wo + cx] = static_cast<std::uint8_t>(perm[static_cast<size_t>(cy * side + cx)]);
        }
      }
    }
  }

  SamplePlan splan = sample_plan;  // captured by value; plans are small
  auto backward = [input, record, splan, N, C, h, w, ho, wo, side](detail::Node<S>& self) {
    if (!input.requires_grad()) return;
    auto gi = input.node()->grad_buf();
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
      S* gplane = gi.data() + nc * h * w;
      const S* gout = self.grad.data() + nc * ho * wo;
      const std::uint8_t* rplane = record->data() + nc * ho * wo;
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          for (int cy = 0; cy < side; ++cy)
            for (int cx = 0; cx < side; ++cx) {
              const std::int64_t o = (y * side + cy) * wo + x * side + cx;
              const S g = gout[o];
              if (g == S(0)) continue;
              const auto& pt = splan.points[rplane[o]];
              for (const auto& t : pt.taps) {
                if (t.w == 0.0) continue;
                const std::int64_t yy = y + t.dy, xx = x + t.dx;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w)
                  gplane[yy * w + xx] += static_cast<S>(t.w) * g;
              }
            }
    }
  };
  return Tensor<S>::make_op({N, C, ho, wo}, std::move(out), {input}, std::move(backward));
}

}  // namespace sortconv
