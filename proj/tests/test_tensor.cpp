#include "doctest.h"

#include <random>

#include "sortconv/ops.hpp"
#include "sortconv/tensor.hpp"
#include "support.hpp"

using namespace sortconv;
using testsupport::conv2d_naive;
using testsupport::finite_diff_max_rel_err;
using testsupport::random_values;
using testsupport::weighted_sum;
using D = Tensor<double>;

TEST_CASE("elementwise op examples") {
  auto a = D::from({2}, {1, 2}), b = D::from({2}, {3, 4});
  auto sum = add(a, b);
  CHECK(sum.data()[0] == 4);
  CHECK(sum.data()[1] == 6);

  auto r = relu(D::from({3}, {-1, 0, 2}));
  CHECK(r.data()[0] == 0);
  CHECK(r.data()[1] == 0);
  CHECK(r.data()[2] == 2);

  auto scaled = mul_scalar(D::from({2}, {1.5, -2}), 2.0);
  CHECK(scaled.data()[0] == 3.0);
  CHECK(scaled.data()[1] == -4.0);
}

TEST_CASE("matmul of ones") {
  auto m = matmul(D::full({2, 3}, 1.0), D::full({3, 2}, 1.0));
  REQUIRE(m.shape() == Shape{2, 2});
  for (double v : m.data()) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("shape errors are descriptive") {
  CHECK_THROWS_AS(add(D::zeros({2}), D::zeros({3})), ShapeError);
  CHECK_THROWS_AS(matmul(D::zeros({2, 3}), D::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(reshape(D::zeros({4}), {3}), ShapeError);
  // non-scalar loss rejected
  auto x = D::zeros({2}).set_requires_grad(true);
  CHECK_THROWS_AS(x.backward(), std::invalid_argument);
}

TEST_CASE("backward: sum of squares gives 2x") {
  auto x = D::from({3}, {1, 2, 3});
  x.set_requires_grad(true);
  // sum(x*x) expressed with the fixed op set: x_row * x_col
  auto loss = matmul(reshape(x, {1, 3}), reshape(x, {3, 1}));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward: relu subgradient is 0 at negatives") {
  auto x = D::from({2}, {-1, 2});
  x.set_requires_grad(true);
  auto loss = matmul(reshape(relu(x), {1, 2}), D::full({2, 1}, 1.0));
  loss.backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward accumulates over shared subexpressions") {
  // loss = w'x + w'x reuses the same matmul result twice
  auto x = D::from({3}, {0.5, -1.0, 2.0});
  x.set_requires_grad(true);
  auto row = reshape(x, {1, 3});
  auto w = D::from({3, 1}, {1.0, 2.0, 3.0});
  auto once = matmul(row, w);
  auto loss = add(once, once);
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));

  // and against finite differences
  auto err = finite_diff_max_rel_err(
      [](const std::vector<D>& in) {
        auto row = reshape(in[0], {1, 3});
        auto w = D::from({3, 1}, {1.0, 2.0, 3.0});
        auto once = matmul(row, w);
        auto twice = add(once, once);
        return matmul(twice, D::full({1, 1}, 1.0));
      },
      {{3}}, {{0.5, -1.0, 2.0}});
  CHECK(err < 1e-6);
}

TEST_CASE("conv2d trivial examples") {
  // identity-like diagonal under a kernel of ones sums the diagonal
  auto in = D::from({1, 1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto kernel = D::full({1, 1, 3, 3}, 1.0);
  auto out = conv2d(in, kernel, D::zeros({1}), 1, 0);
  REQUIRE(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.item() == doctest::Approx(3.0));

  // constant input: every output equals c * sum(W) + bias
  const double c = 0.7;
  auto kin = D::from({1, 1, 3, 3}, random_values(9, 11));
  double wsum = 0;
  for (double v : kin.data()) wsum += v;
  auto out2 = conv2d(D::full({1, 1, 5, 5}, c), kin, D::from({1}, {0.25}), 1, 0);
  for (double v : out2.data()) CHECK(v == doctest::Approx(c * wsum + 0.25));
}

TEST_CASE("conv2d matches the naive loop oracle") {
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 6; ++rep) {
    const std::int64_t N = 1 + rep % 2, C = 1 + rep % 3, O = 1 + (rep + 1) % 3;
    const std::int64_t H = 5 + rep, W = 5 + (rep * 2) % 3;
    const std::int64_t k = rep % 2 ? 5 : 3;
    const std::int64_t stride = 1 + rep % 3, pad = rep % (k / 2 + 1);
    if (H + 2 * pad < k || W + 2 * pad < k) continue;
    auto input = random_values(N * C * H * W, 100 + rep);
    auto kernel = random_values(O * C * k * k, 200 + rep);
    auto bias = random_values(O, 300 + rep);
    auto expect = conv2d_naive(input, N, C, H, W, kernel, O, k, bias, stride, pad);
    auto got = conv2d(D::from({N, C, H, W}, input), D::from({O, C, k, k}, kernel),
                      D::from({O}, bias), stride, pad);
    REQUIRE(got.numel() == static_cast<std::int64_t>(expect.size()));
    for (size_t i = 0; i < expect.size(); ++i)
      CHECK(std::abs(got.data()[static_cast<std::int64_t>(i)] - expect[i]) < 1e-12);
  }
}

TEST_CASE("conv2d rejects even kernels") {
  CHECK_THROWS_AS(conv2d(D::zeros({1, 1, 4, 4}), D::zeros({1, 1, 2, 2}), D::zeros({1}), 1, 0),
                  ShapeError);
  CHECK_THROWS_AS(conv2d(D::zeros({1, 2, 4, 4}), D::zeros({1, 1, 3, 3}), D::zeros({1}), 1, 0),
                  ShapeError);
}

TEST_CASE("conv2d gradient vs central finite differences") {
  // random 1x1x6x6 input, 3x3 kernel, step 1e-4, per the stated example
  auto input = random_values(36, 7);
  auto kernel = random_values(9, 8);
  auto bias = random_values(1, 9);
  auto err = finite_diff_max_rel_err(
      [](const std::vector<D>& in) {
        return weighted_sum(conv2d(in[0], in[1], in[2], 1, 1), 77);
      },
      {{1, 1, 6, 6}, {1, 1, 3, 3}, {1}}, {input, kernel, bias}, 1e-4);
  CHECK(err < 1e-5);
}

TEST_CASE("maxpool2d forward and argmax routing") {
  auto in = D::from({1, 1, 2, 4}, {1, 5, 2, 0, 3, -1, 7, 4});
  in.set_requires_grad(true);
  auto out = maxpool2d(in, 2);
  REQUIRE(out.shape() == Shape{1, 1, 1, 2});
  CHECK(out.data()[0] == 5);
  CHECK(out.data()[1] == 7);
  auto loss = weighted_sum(out, 5);
  loss.backward();
  // gradient lands only on the argmax positions
  int nonzero = 0;
  for (double g : in.grad()) nonzero += g != 0.0;
  CHECK(nonzero == 2);
  CHECK(in.grad()[1] != 0.0);
  CHECK(in.grad()[6] != 0.0);
}

TEST_CASE("global pooling examples") {
  auto in = D::from({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(global_avgpool(in).item() == doctest::Approx(2.5));
  CHECK(global_maxpool(in).item() == 4.0);
  auto cst = global_avgpool(D::full({2, 3, 4, 4}, 0.3));
  for (double v : cst.data()) CHECK(v == doctest::Approx(0.3));
  // mean is invariant to spatial permutation (rot90)
  auto img = D::from({1, 1, 4, 4}, random_values(16, 21));
  CHECK(global_avgpool(img).item() ==
        global_avgpool(testsupport::rot90_nchw(img)).item());
}

TEST_CASE("softmax cross-entropy value and gradient") {
  auto logits = D::from({1, 2}, {0.0, 0.0});
  logits.set_requires_grad(true);
  std::vector<int> labels{0};
  auto loss = softmax_cross_entropy(logits, labels);
  CHECK(loss.item() == doctest::Approx(std::log(2.0)));
  loss.backward();
  CHECK(logits.grad()[0] == doctest::Approx(-0.5));
  CHECK(logits.grad()[1] == doctest::Approx(0.5));

  auto err = finite_diff_max_rel_err(
      [](const std::vector<D>& in) {
        std::vector<int> lbl{2, 0, 1};
        return softmax_cross_entropy(in[0], lbl);
      },
      {{3, 4}}, {random_values(12, 31)});
  CHECK(err < 1e-6);
}

TEST_CASE("gradient property: every op kind passes finite differences") {
  // random small tensors, elements kept away from relu kinks / pooling ties
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    auto err_relu = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) { return weighted_sum(relu(in[0]), rep); }, {{4, 7}},
        {random_values(28, 1000 + rep)});
    CHECK(err_relu < 1e-4);

    auto err_add = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) { return weighted_sum(add(in[0], in[1]), rep); },
        {{3, 5}, {3, 5}}, {random_values(15, 1100 + rep), random_values(15, 1200 + rep)});
    CHECK(err_add < 1e-4);

    auto err_bias = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) { return weighted_sum(add(in[0], in[1]), rep); },
        {{3, 5}, {5}}, {random_values(15, 1300 + rep), random_values(5, 1400 + rep)});
    CHECK(err_bias < 1e-4);

    auto err_mm = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) { return weighted_sum(matmul(in[0], in[1]), rep); },
        {{4, 3}, {3, 5}}, {random_values(12, 1500 + rep), random_values(15, 1600 + rep)});
    CHECK(err_mm < 1e-4);

    auto err_pool = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) { return weighted_sum(maxpool2d(in[0], 2), rep); },
        {{1, 2, 4, 4}}, {random_values(32, 1700 + rep)});
    CHECK(err_pool < 1e-4);

    auto err_gap = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) { return weighted_sum(global_avgpool(in[0]), rep); },
        {{2, 3, 3, 3}}, {random_values(54, 1800 + rep)});
    CHECK(err_gap < 1e-4);

    auto err_gmp = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) { return weighted_sum(global_maxpool(in[0]), rep); },
        {{2, 2, 3, 3}}, {random_values(36, 1900 + rep)});
    CHECK(err_gmp < 1e-4);

    auto err_scale = finite_diff_max_rel_err(
        [rep](const std::vector<D>& in) {
          return weighted_sum(mul_scalar(reshape(in[0], {2, 6}), 1.7), rep);
        },
        {{12}}, {random_values(12, 2000 + rep)});
    CHECK(err_scale < 1e-4);
  }
}

TEST_CASE("deterministic: same inputs give bitwise-identical results") {
  auto run = [] {
    auto x = D::from({1, 2, 6, 6}, random_values(72, 5000));
    x.set_requires_grad(true);
    auto w = D::from({3, 2, 3, 3}, random_values(54, 5001));
    w.set_requires_grad(true);
    auto out = conv2d(x, w, D::zeros({3}), 1, 1);
    auto loss = weighted_sum(global_avgpool(relu(out)), 13);
    loss.backward();
    std::vector<double> all(out.data().begin(), out.data().end());
    all.insert(all.end(), x.grad().begin(), x.grad().end());
    all.insert(all.end(), w.grad().begin(), w.grad().end());
    all.push_back(loss.item());
    return all;
  };
  auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
