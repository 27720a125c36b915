#pragma once

// Architectural invariance audit on random-weight models (invariance here is
// structural, not learned). Exact checks are asserted by callers; approximate
// checks carry a calibrated tolerance and are reported:
//  - square sampling: pooled feature is exactly invariant to 90-degree input
//    rotations (bitwise in deterministic mode);
//  - polar sampling: a ring's sorted sample vector is invariant to rotation
//    by multiples of its closure angle 2*pi/(8r) on piecewise-bilinear
//    (affine) analytic images, to 1e-9;
//  - on band-limited smooth analytic images the sorted ring vectors are
//    invariant to arbitrary angles within an interpolation tolerance
//    (default 1e-2 relative);
//  - full-network pooled-feature residuals under arbitrary-angle analytic
//    rotation and digit-image cosine similarity are measured and reported.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "sortconv/dataset.hpp"
#include "sortconv/digits.hpp"
#include "sortconv/models.hpp"
#include "sortconv/sorter.hpp"

namespace sortconv {

struct AuditCheck {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool exact = false;  // exact checks gate the audit's exit status
  bool pass = false;
};

struct AuditReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<AuditCheck> checks;

  bool exact_ok() const {
    for (const auto& c : checks)
      if (c.exact && !c.pass) return false;
    return true;
  }
  const AuditCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace audit_detail {

using Field = std::function<double(double, double)>;  // f(y, x)

// Samples f on an h x w grid.
inline std::vector<double> rasterize(const Field& f, int h, int w) {
  std::vector<double> img(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img[static_cast<size_t>(y) * w + x] = f(y, x);
  return img;
}

// f rotated by theta about (cy, cx): g(p) = f(R_{-theta}(p - c) + c).
inline Field rotate_field(const Field& f, double theta, double cy, double cx) {
  const double c = std::cos(theta), s = std::sin(theta);
  return [f, c, s, cy, cx](double y, double x) {
    const double dy = y - cy, dx = x - cx;
    return f(cy + c * dy - s * dx, cx + s * dy + c * dx);
  };
}

// Sorted sample vector of ring r at a grid centre, read through the plan's
// bilinear taps on a zero-padded copy.
inline std::vector<double> sorted_ring_samples(const std::vector<double>& img, int h, int w,
                                               int cy, int cx, const SamplePlan& plan, int r) {
  const int m = plan.n + 1;
  const int ph = h + 2 * m, pw = w + 2 * m;
  std::vector<double> pad(static_cast<size_t>(ph) * pw, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      pad[static_cast<size_t>(y + m) * pw + (x + m)] = img[static_cast<size_t>(y) * w + x];
  auto samples = sample_neighborhood<double>(pad, ph, pw, cy + m, cx + m, plan);
  std::vector<double> ring;
  for (size_t i = 0; i < plan.points.size(); ++i)
    if (plan.points[i].ring == r) ring.push_back(samples[i]);
  std::sort(ring.begin(), ring.end());
  return ring;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace audit_detail

// Ring-closure residual: affine fields are reproduced exactly by bilinear
// interpolation and stay affine under rotation, so sorted ring-r vectors must
// match at rotation angles k*2*pi/(8r) up to rounding.
inline double ring_closure_residual(int n, double phase, std::uint64_t seed) {
  using namespace audit_detail;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const int h = 4 * n + 9, w = 4 * n + 9;
  const int cy = h / 2, cx = w / 2;
  SamplePlan plan = build_sample_plan(n, Sampling::Polar, phase);
  double worst = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    const double a = uni(rng), b = 0.25 * uni(rng), c = 0.25 * uni(rng);
    Field f = [=](double y, double x) { return a + b * (y - cy) + c * (x - cx); };
    auto img = rasterize(f, h, w);
    for (int r = 1; r <= n; ++r) {
      std::uniform_int_distribution<int> pick(1, 8 * r - 1);
      for (int k : {1, pick(rng), 8 * r - 1}) {
        const double theta = 2.0 * std::numbers::pi * k / (8 * r);
        auto rot = rasterize(rotate_field(f, theta, cy, cx), h, w);
        auto u = sorted_ring_samples(img, h, w, cy, cx, plan, r);
        auto v = sorted_ring_samples(rot, h, w, cy, cx, plan, r);
        worst = std::max(worst, max_abs_diff(u, v));
      }
    }
  }
  return worst;
}

// Arbitrary-angle residual on band-limited smooth fields, relative to the
// ring's value scale. The 8r uniformly spaced samples approximate the value
// distribution of f on the circle, whose quantiles are rotation invariant.
inline double ring_bandlimited_residual(int n, double phase, std::uint64_t seed) {
  using namespace audit_detail;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int h = 4 * n + 13, w = 4 * n + 13;
  const int cy = h / 2, cx = w / 2;
  SamplePlan plan = build_sample_plan(n, Sampling::Polar, phase);
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    const double wy = 0.05 + 0.10 * uni(rng), wx = 0.05 + 0.10 * uni(rng);
    const double p1 = 2 * std::numbers::pi * uni(rng), p2 = 2 * std::numbers::pi * uni(rng);
    const double by = cy + 3.0 * (uni(rng) - 0.5), bx = cx + 3.0 * (uni(rng) - 0.5);
    Field f = [=](double y, double x) {
      const double ridge = std::sin(wy * (y - cy) + p1) * std::cos(wx * (x - cx) + p2);
      const double d2 = (y - by) * (y - by) + (x - bx) * (x - bx);
      return ridge + std::exp(-d2 / 18.0);
    };
    auto img = rasterize(f, h, w);
    for (double theta_deg : {37.0, 101.0, 222.5, 360.0 * uni(rng)}) {
      const double theta = theta_deg * std::numbers::pi / 180.0;
      auto rot = rasterize(rotate_field(f, theta, cy, cx), h, w);
      for (int r = 1; r <= n; ++r) {
        auto u = sorted_ring_samples(img, h, w, cy, cx, plan, r);
        auto v = sorted_ring_samples(rot, h, w, cy, cx, plan, r);
        const double scale = std::max({max_abs(u), max_abs(v), 1e-9});
        worst = std::max(worst, max_abs_diff(u, v) / scale);
      }
    }
  }
  return worst;
}

// Max |feature(rot90^k(I)) - feature(I)| over random inputs, k = 1..3.
template <typename S>
double feature_rot90_residual(const Model<S>& model, int inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < inputs; ++i) {
    std::vector<float> img(28 * 28);
    for (auto& v : img) v = static_cast<float>(uni(rng));
    std::vector<S> base(img.begin(), img.end());
    auto f0 = model.invariant_feature(Tensor<S>::from({1, 1, 28, 28}, base));
    for (int k = 1; k <= 3; ++k) {
      auto rot = rotate_exact90(img.data(), 28, 28, k);
      std::vector<S> rv(rot.begin(), rot.end());
      auto fk = model.invariant_feature(Tensor<S>::from({1, 1, 28, 28}, rv));
      for (size_t j = 0; j < f0.size(); ++j)
        worst = std::max(worst, std::abs(static_cast<double>(fk[j]) - static_cast<double>(f0[j])));
    }
  }
  return worst;
}

// Relative pooled-feature residual of the full network on an analytic image
// rotated by an arbitrary angle (both images sampled analytically).
template <typename S>
double feature_analytic_rotation_residual(const Model<S>& model, double theta_deg,
                                          std::uint64_t seed) {
  using namespace audit_detail;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double cy = 13.5, cx = 13.5;
  const double wy = 0.06 + 0.08 * uni(rng), wx = 0.06 + 0.08 * uni(rng);
  const double p1 = 2 * std::numbers::pi * uni(rng), p2 = 2 * std::numbers::pi * uni(rng);
  Field f = [=](double y, double x) {
    const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
    const double window = std::exp(-d2 / 60.0);  // keep support away from the frame edge
    return window * (0.5 + 0.5 * std::sin(wy * (y - cy) + p1) * std::cos(wx * (x - cx) + p2));
  };
  const double theta = theta_deg * std::numbers::pi / 180.0;
  auto a = rasterize(f, 28, 28);
  auto b = rasterize(rotate_field(f, theta, cy, cx), 28, 28);
  std::vector<S> av(a.begin(), a.end()), bv(b.begin(), b.end());
  auto fa = model.invariant_feature(Tensor<S>::from({1, 1, 28, 28}, std::move(av)));
  auto fb = model.invariant_feature(Tensor<S>::from({1, 1, 28, 28}, std::move(bv)));
  double diff = 0.0, scale = 1e-12;
  for (size_t i = 0; i < fa.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(fa[i]) - static_cast<double>(fb[i])));
    scale = std::max({scale, std::abs(static_cast<double>(fa[i])),
                      std::abs(static_cast<double>(fb[i]))});
  }
  return diff / scale;
}

// Mean cosine similarity between features of digit images and their
// 30-degree rotations.
template <typename S>
double feature_digit_cosine(const Model<S>& model, int images, std::uint64_t seed) {
  auto digits = make_digit_corpus(images, seed);
  double total = 0.0;
  for (const auto& d : digits) {
    std::vector<S> a(d.pixels.begin(), d.pixels.end());
    auto rot = rotate_image(d, 30);
    std::vector<S> b(rot.pixels.begin(), rot.pixels.end());
    auto fa = model.invariant_feature(Tensor<S>::from({1, 1, d.h, d.w}, std::move(a)));
    auto fb = model.invariant_feature(Tensor<S>::from({1, 1, d.h, d.w}, std::move(b)));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < fa.size(); ++i) {
      dot += static_cast<double>(fa[i]) * static_cast<double>(fb[i]);
      na += static_cast<double>(fa[i]) * static_cast<double>(fa[i]);
      nb += static_cast<double>(fb[i]) * static_cast<double>(fb[i]);
    }
    total += dot / std::max(std::sqrt(na * nb), 1e-30);
  }
  return total / static_cast<double>(images);
}

// The audit suite on a freshly built random-weight model (double precision).
inline AuditReport run_invariance_audit(const ModelSpec& spec, std::uint64_t seed,
                                        double approx_tolerance = 1e-2) {
  if (spec.kind != ModelKind::Scnn)
    throw std::invalid_argument("audit: variant must be an SCNN model, got " + spec.name());
  AuditReport report;
  report.variant = spec.name();
  report.seed = seed;
  Model<double> model = build_model<double>(spec, seed);
  const int n = (spec.K - 1) / 2;
  const bool square = spec.sampling == Sampling::Square;

  {
    AuditCheck c;
    c.name = "feature-rot90";
    c.residual = feature_rot90_residual(model, 8, seed + 1);
    c.exact = square;  // polar taps are not closed under 90 degrees bitwise
    c.tolerance = square ? 0.0 : 1e-9;
    c.pass = c.residual <= c.tolerance;
    report.checks.push_back(c);
  }
  {
    AuditCheck c;
    c.name = "ring-closure-affine";
    c.residual = ring_closure_residual(n, spec.phase, seed + 2);
    c.tolerance = 1e-9;
    c.exact = true;
    c.pass = c.residual <= c.tolerance;
    report.checks.push_back(c);
  }
  {
    AuditCheck c;
    c.name = "ring-arbitrary-angle";
    c.residual = ring_bandlimited_residual(n, spec.phase, seed + 3);
    c.tolerance = approx_tolerance;
    c.exact = false;
    c.pass = c.residual <= c.tolerance;
    report.checks.push_back(c);
  }
  {
    AuditCheck c;
    c.name = "feature-analytic-37deg";
    c.residual = feature_analytic_rotation_residual(model, 37.0, seed + 4);
    c.tolerance = approx_tolerance;
    c.exact = false;
    c.pass = c.residual <= c.tolerance;
    report.checks.push_back(c);
  }
  {
    AuditCheck c;
    c.name = "digit-cosine-30deg";
    c.residual = feature_digit_cosine(model, 6, seed + 5);
    c.tolerance = 0.9;  // reported: cosine should stay above this
    c.exact = false;
    c.pass = c.residual >= c.tolerance;
    report.checks.push_back(c);
  }
  return report;
}

inline void write_audit_json(const std::string& path, const AuditReport& report) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["variant"] = report.variant;
  j["seed"] = report.seed;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : report.checks)
    j["checks"].push_back({{"name", c.name},
                           {"residual", c.residual},
                           {"tolerance", c.tolerance},
                           {"exact", c.exact},
                           {"pass", c.pass}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot create audit report: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace sortconv
