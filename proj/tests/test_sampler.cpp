#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sortconv/sampler.hpp"
#include "support.hpp"

using namespace sortconv;
using testsupport::bilinear_at;
using testsupport::random_values;

TEST_CASE("polar plan: ring populations and total count") {
  auto plan = build_sample_plan(2, Sampling::Polar);
  int per_ring[3] = {0, 0, 0};
  for (const auto& p : plan.points) per_ring[p.ring]++;
  CHECK(per_ring[0] == 1);
  CHECK(per_ring[1] == 8);
  CHECK(per_ring[2] == 16);
  CHECK(plan.points.size() == 25);
}

TEST_CASE("square plan: nine exact integer offsets for n=1") {
  auto plan = build_sample_plan(1, Sampling::Square);
  REQUIRE(plan.points.size() == 9);
  int i = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const auto& p = plan.points[static_cast<size_t>(i++)];
      CHECK(p.offset_y == dy);
      CHECK(p.offset_x == dx);
      // exactly one unit weight
      int units = 0, zeros = 0;
      for (const auto& t : p.taps) {
        units += t.w == 1.0;
        zeros += t.w == 0.0;
      }
      CHECK(units == 1);
      CHECK(zeros == 3);
    }
}

TEST_CASE("polar ring-1 point k=1 matches the analytic bilinear weights") {
  // oracle first: w = (1-|dy|)(1-|dx|) evaluated at (sin45, cos45)
  const double s = std::sin(std::numbers::pi / 4);
  const double w00 = (1 - s) * (1 - s), w01 = (1 - s) * s, w10 = s * (1 - s), w11 = s * s;
  CHECK(w00 == doctest::Approx(0.08578643762690495));
  CHECK(w11 == doctest::Approx(0.5));

  auto plan = build_sample_plan(1, Sampling::Polar, 0.0);
  const auto& p = plan.points[2];  // centre, then ring 1 ascending angle; k=1 is index 2
  CHECK(p.ring == 1);
  CHECK(p.ring_order == 1);
  CHECK(p.offset_y == doctest::Approx(0.7071067811865476));
  CHECK(p.offset_x == doctest::Approx(0.7071067811865476));
  double found[2][2] = {{-1, -1}, {-1, -1}};
  double total = 0;
  for (const auto& t : p.taps) {
    REQUIRE(t.dy >= 0);
    REQUIRE(t.dy <= 1);
    REQUIRE(t.dx >= 0);
    REQUIRE(t.dx <= 1);
    found[t.dy][t.dx] = t.w;
    total += t.w;
  }
  CHECK(found[0][0] == doctest::Approx(w00));
  CHECK(found[0][1] == doctest::Approx(w01));
  CHECK(found[1][0] == doctest::Approx(w10));
  CHECK(found[1][1] == doctest::Approx(w11));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weights form a partition of unity; radii are exact") {
  for (int n : {1, 2, 3})
    for (auto mode : {Sampling::Square, Sampling::Polar}) {
      auto plan = build_sample_plan(n, mode, 0.3);
      for (const auto& p : plan.points) {
        double sum = 0;
        for (const auto& t : p.taps) {
          CHECK(t.w >= 0.0);
          sum += t.w;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
        if (mode == Sampling::Polar) {
          const double r = std::sqrt(p.offset_y * p.offset_y + p.offset_x * p.offset_x);
          CHECK(std::abs(r - p.ring) < 1e-12);
        }
      }
    }
}

TEST_CASE("rotational closure of the offset sets") {
  // square: rotating the offset grid by 90 degrees reproduces it exactly
  auto square = build_sample_plan(2, Sampling::Square);
  std::vector<std::pair<double, double>> offs, rot;
  for (const auto& p : square.points) {
    offs.emplace_back(p.offset_y, p.offset_x);
    rot.emplace_back(p.offset_x, -p.offset_y);  // 90-degree rotation
  }
  std::sort(offs.begin(), offs.end());
  std::sort(rot.begin(), rot.end());
  CHECK(offs == rot);

  // polar ring r maps onto itself under rotation by 2*pi/(8r)
  auto polar = build_sample_plan(3, Sampling::Polar);
  for (int r = 1; r <= 3; ++r) {
    const double a = 2 * std::numbers::pi / (8 * r);
    const double c = std::cos(a), s = std::sin(a);
    std::vector<std::pair<double, double>> ring, turned;
    for (const auto& p : polar.points)
      if (p.ring == r) {
        ring.emplace_back(p.offset_y, p.offset_x);
        turned.emplace_back(c * p.offset_y + s * p.offset_x, -s * p.offset_y + c * p.offset_x);
      }
    auto key = [](const std::pair<double, double>& a, const std::pair<double, double>& b) {
      return a.first != b.first ? a.first < b.first : a.second < b.second;
    };
    std::sort(ring.begin(), ring.end(), key);
    std::sort(turned.begin(), turned.end(), key);
    for (size_t i = 0; i < ring.size(); ++i) {
      CHECK(std::abs(ring[i].first - turned[i].first) < 1e-9);
      CHECK(std::abs(ring[i].second - turned[i].second) < 1e-9);
    }
  }
}

TEST_CASE("bilinear sample at the centre of a 2x2 patch is the corner mean") {
  // scalar oracle
  CHECK(bilinear_at({0, 1, 2, 3}, 2, 2, 0.5, 0.5) == doctest::Approx(1.5));
  // and through the tap construction used by the sampler
  auto taps = detail::bilinear_taps(0.5, 0.5);
  const double patch[2][2] = {{0, 1}, {2, 3}};
  double v = 0;
  for (const auto& t : taps) v += t.w * patch[t.dy][t.dx];
  CHECK(v == doctest::Approx(1.5));
}

TEST_CASE("constant image: every sample equals the constant") {
  const double c = 0.37;
  for (auto mode : {Sampling::Square, Sampling::Polar}) {
    auto plan = build_sample_plan(2, mode);
    const std::int64_t side = 9 + 2 * 3;  // margin n+1 = 3
    std::vector<double> padded(static_cast<size_t>(side * side), 0.0);
    for (std::int64_t y = 3; y < side - 3; ++y)
      for (std::int64_t x = 3; x < side - 3; ++x) padded[static_cast<size_t>(y * side + x)] = c;
    auto vals = sample_neighborhood<double>(padded, side, side, side / 2, side / 2, plan);
    for (double v : vals) CHECK(v == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("polar sampling matches the independent scalar bilinear oracle") {
  const std::int64_t h = 7, w = 7, m = 2;  // margin n+1 for n=1
  auto img = random_values(h * w, 99, 0.0, 1.0);
  std::vector<double> padded(static_cast<size_t>((h + 2 * m) * (w + 2 * m)), 0.0);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      padded[static_cast<size_t>((y + m) * (w + 2 * m) + x + m)] =
          img[static_cast<size_t>(y * w + x)];
  auto plan = build_sample_plan(1, Sampling::Polar);
  for (std::int64_t cy = 0; cy < h; ++cy)
    for (std::int64_t cx = 0; cx < w; ++cx) {
      auto vals =
          sample_neighborhood<double>(padded, h + 2 * m, w + 2 * m, cy + m, cx + m, plan);
      for (size_t i = 0; i < plan.points.size(); ++i) {
        const auto& p = plan.points[i];
        const double expect = bilinear_at(img, h, w, cy + p.offset_y, cx + p.offset_x);
        CHECK(std::abs(vals[i] - expect) < 1e-12);
      }
    }
}

TEST_CASE("square sampling reproduces raw pixel reads") {
  const std::int64_t h = 6, w = 5, m = 3;
  auto img = random_values(h * w, 123);
  std::vector<double> padded(static_cast<size_t>((h + 2 * m) * (w + 2 * m)), 0.0);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      padded[static_cast<size_t>((y + m) * (w + 2 * m) + x + m)] =
          img[static_cast<size_t>(y * w + x)];
  auto plan = build_sample_plan(2, Sampling::Square);
  for (std::int64_t cy = 0; cy < h; ++cy)
    for (std::int64_t cx = 0; cx < w; ++cx) {
      auto vals =
          sample_neighborhood<double>(padded, h + 2 * m, w + 2 * m, cy + m, cx + m, plan);
      size_t i = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const std::int64_t yy = cy + dy, xx = cx + dx;
          const double expect = (yy >= 0 && yy < h && xx >= 0 && xx < w)
                                    ? img[static_cast<size_t>(yy * w + xx)]
                                    : 0.0;
          CHECK(vals[i++] == expect);
        }
    }
}

TEST_CASE("contract violations") {
  CHECK_THROWS_AS(build_sample_plan(0, Sampling::Square), std::invalid_argument);
  // insufficient padding margin trips the bounds check
  auto plan = build_sample_plan(1, Sampling::Polar);
  std::vector<double> tiny(9, 0.0);
  CHECK_THROWS_AS(
      sample_neighborhood<double>(std::span<const double>(tiny), 3, 3, 0, 0, plan),
      std::out_of_range);
}

TEST_CASE("square ring partition: shell r has 8r cells in row-major scan order") {
  auto plan = build_sample_plan(3, Sampling::Square);
  std::vector<int> counts(4, 0);
  std::vector<int> last_order(4, -1);
  for (const auto& p : plan.points) {
    CHECK(p.ring == std::max(std::abs(static_cast<int>(p.offset_y)),
                             std::abs(static_cast<int>(p.offset_x))));
    CHECK(p.ring_order == last_order[static_cast<size_t>(p.ring)] + 1);
    last_order[static_cast<size_t>(p.ring)] = p.ring_order;
    counts[static_cast<size_t>(p.ring)]++;
  }
  CHECK(counts[0] == 1);
  CHECK(counts[1] == 8);
  CHECK(counts[2] == 16);
  CHECK(counts[3] == 24);
}
