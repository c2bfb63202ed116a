#include <doctest.h>

#include <cmath>

#include "tbscreen/autograd.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/gradcheck.hpp"
#include "tbscreen/gradcheck_suite.hpp"
#include "tbscreen/rng.hpp"

using namespace tbscreen;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Direct six-loop valid convolution.
Tensor reference_conv(const Tensor& x, const Tensor& k, std::size_t stride) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = k.dim(0), ks = k.dim(2);
  const std::size_t oh = (h - ks) / stride + 1, ow = (w - ks) / stride + 1;
  Tensor out({cout, oh, ow});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t a = 0; a < ks; ++a)
            for (std::size_t b = 0; b < ks; ++b)
              acc += x.at({c, i * stride + a, j * stride + b}) * k.at({o, c, a, b});
        out.at({o, i, j}) = acc;
      }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double row_norm(const Tensor& t, std::size_t row, std::size_t d) {
  double q = 0.0;
  for (std::size_t k = 0; k < d; ++k) q += t[row * d + k] * t[row * d + k];
  return std::sqrt(q);
}

}  // namespace

TEST_CASE("conv2d examples") {
  SUBCASE("zero input gives zero output") {
    Rng rng(1);
    const auto y = conv2d(constant(Tensor({1, 9, 9})), constant(random_tensor({1, 1, 9, 9}, rng)), 1);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.value()[0] == 0.0);
  }
  SUBCASE("centre impulse with an all-ones kernel") {
    Tensor x({1, 3, 3});
    x.at({0, 1, 1}) = 1.0;
    const auto y = conv2d(constant(x), constant(Tensor({1, 1, 3, 3}, 1.0)), 1);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.value()[0] == 1.0);
  }
  SUBCASE("random [2,12,12] * [4,2,9,9] matches the loop oracle") {
    Rng rng(2);
    const Tensor x = random_tensor({2, 12, 12}, rng), k = random_tensor({4, 2, 9, 9}, rng);
    const auto y = conv2d(constant(x), constant(k), 1);
    CHECK(y.shape() == Shape{4, 4, 4});
    CHECK(max_abs_diff(y.value(), reference_conv(x, k, 1)) < 1e-12);
  }
}

TEST_CASE("conv2d matches the loop oracle over random shapes and strides") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cin = rng.integer(1, 3), cout = rng.integer(1, 4), ks = rng.integer(1, 5);
    const std::size_t stride = rng.integer(1, 3);
    const std::size_t h = ks + rng.integer(0, 9), w = ks + rng.integer(0, 9);
    const Tensor x = random_tensor({cin, h, w}, rng), k = random_tensor({cout, cin, ks, ks}, rng);
    CAPTURE(trial);
    CHECK(max_abs_diff(conv2d(constant(x), constant(k), stride).value(), reference_conv(x, k, stride)) <
          1e-12);
  }
}

TEST_CASE("conv2d rejects bad arguments") {
  CHECK_THROWS_AS(conv2d(constant(Tensor({2, 5, 5})), constant(Tensor({1, 1, 3, 3})), 1), DimensionError);
  CHECK_THROWS_AS(conv2d(constant(Tensor({1, 5, 5})), constant(Tensor({1, 1, 3, 3})), 0), ParameterError);
  CHECK_THROWS_AS(conv2d(constant(Tensor({1, 2, 2})), constant(Tensor({1, 1, 3, 3})), 1), DimensionError);
}

TEST_CASE("matmul") {
  const Tensor b({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(matmul(constant(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1})), constant(b)).value() == b);
  CHECK(matmul(constant(Tensor({1, 2}, std::vector<double>{1, 2})),
               constant(Tensor({2, 1}, std::vector<double>{3, 4})))
            .value()[0] == 11.0);
  CHECK_THROWS_AS(matmul(constant(Tensor({2, 3})), constant(Tensor({2, 3}))), DimensionError);

  Rng rng(4);
  const Tensor x = random_tensor({5, 7}, rng), y = random_tensor({7, 3}, rng);
  Tensor expect({5, 3});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 7; ++k) expect.at({i, j}) += x.at({i, k}) * y.at({k, j});
  CHECK(max_abs_diff(matmul(constant(x), constant(y)).value(), expect) < 1e-12);
}

TEST_CASE("squash examples") {
  CHECK(squash(constant(Tensor({1, 3}))).value() == Tensor({1, 3}));

  const Tensor unit({1, 2}, std::vector<double>{0.6, 0.8});
  const auto v = squash(constant(unit)).value();
  CHECK(row_norm(v, 0, 2) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(v[0] / v[1] == doctest::Approx(0.75).epsilon(1e-12));

  const Tensor three({1, 3}, std::vector<double>{3.0, 0.0, 0.0});
  CHECK(row_norm(squash(constant(three)).value(), 0, 3) == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("squash norm is below one and increasing in the input norm") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor dir = random_tensor({1, 4}, rng);
    const double n = row_norm(dir, 0, 4);
    double prev = -1.0;
    for (double r : {1e-3, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e4}) {
      Tensor s({1, 4});
      for (std::size_t k = 0; k < 4; ++k) s[k] = dir[k] / n * r;
      const double out = row_norm(squash(constant(s)).value(), 0, 4);
      CHECK(out < 1.0);
      CHECK(out > prev);
      prev = out;
    }
  }
}

TEST_CASE("softmax") {
  const auto u = softmax(constant(Tensor({4})), 0).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(u[i] == 0.25);

  const auto big = softmax(constant(Tensor({2}, std::vector<double>{1000.0, 0.0})), 0).value();
  CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big[1] < 1e-12);
  CHECK(big.all_finite());

  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({5}, rng, -5.0, 5.0);
    double mx = x[0];
    for (double v : x.data()) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : x.data()) z += std::exp(v - mx);
    const auto p = softmax(constant(x), 0).value();
    Tensor shifted = x;
    for (auto& v : shifted.data()) v += 17.25;
    const auto q = softmax(constant(shifted), 0).value();
    double sum = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::abs(p[i] - std::exp(x[i] - mx) / z) < 1e-12);
      CHECK(std::abs(p[i] - q[i]) < 1e-12);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("margin loss examples") {
  const Tensor target({2}, std::vector<double>{1.0, 0.0});
  auto loss = [&](double a, double b) {
    return margin_loss(constant(Tensor({2}, std::vector<double>{a, b})), target).value().item();
  };
  CHECK(loss(0.9, 0.1) == 0.0);
  CHECK(loss(0.0, 0.0) == doctest::Approx(0.81).epsilon(1e-15));
  CHECK(loss(0.5, 0.5) == doctest::Approx(0.24).epsilon(1e-15));
  CHECK_THROWS_AS(margin_loss(constant(Tensor({2}, 0.5)), Tensor({2}, 1.0)), ValidationError);
  CHECK_THROWS_AS(margin_loss(constant(Tensor({2}, 0.5)), Tensor({2}, std::vector<double>{0.5, 0.5})),
                  ValidationError);
}

TEST_CASE("cross-entropy gradient equals probabilities minus one-hot") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Var z = parameter(random_tensor({2}, rng, -3.0, 3.0));
    const std::size_t target = trial % 2;
    backward(cross_entropy(z, target));
    const auto p = softmax(constant(z.value()), 0).value();
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(std::abs(z.grad()[k] - (p[k] - (k == target ? 1.0 : 0.0))) < 1e-10);
  }
}

TEST_CASE("norm has zero gradient at the zero vector") {
  Var x = parameter(Tensor({1, 3}));
  backward(reduce_sum(norm(x)));
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("downsample is floor mean pooling") {
  Tensor x({1, 5, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const auto y = downsample(constant(x), 2).value();
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(y.at({0, 0, 0}) == (0 + 1 + 4 + 5) / 4.0);
  CHECK(y.at({0, 1, 1}) == (10 + 11 + 14 + 15) / 4.0);
}

TEST_CASE("to_capsules groups channel blocks per grid cell") {
  // x[c*D + d, y, x] goes to row (c*H + y)*W + x, column d.
  Tensor x({4, 2, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const auto u = to_capsules(constant(x), 2).value();
  CHECK(u.shape() == Shape{12, 2});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t yy = 0; yy < 2; ++yy)
      for (std::size_t xx = 0; xx < 3; ++xx)
        for (std::size_t d = 0; d < 2; ++d)
          CHECK(u.at({(c * 2 + yy) * 3 + xx, d}) == x.at({c * 2 + d, yy, xx}));
}

TEST_CASE("capsule_predict multiplies each capsule by its own matrices") {
  Rng rng(8);
  const Tensor u = random_tensor({3, 4}, rng), w = random_tensor({3, 2, 5, 4}, rng);
  const auto p = capsule_predict(constant(u), constant(w)).value();
  CHECK(p.shape() == Shape{3, 2, 5});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t a = 0; a < 5; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < 4; ++b) acc += w.at({i, j, a, b}) * u.at({i, b});
        CHECK(std::abs(p.at({i, j, a}) - acc) < 1e-14);
      }
}

TEST_CASE("backward contract") {
  SUBCASE("each input gradient matches its input shape") {
    Rng rng(9);
    Var x = parameter(random_tensor({2, 6, 6}, rng));
    Var k = parameter(random_tensor({3, 2, 3, 3}, rng));
    backward(reduce_sum(conv2d(x, k, 2)));
    CHECK(x.grad().size() == x.value().size());
    CHECK(k.grad().size() == k.value().size());
  }
  SUBCASE("a root without trainable inputs is a state error") {
    CHECK_THROWS_AS(backward(reduce_sum(constant(Tensor({2}, 1.0)))), StateError);
  }
  SUBCASE("ops without a backward are unsupported") {
    Var x = parameter(Tensor({3}, 0.2));
    CHECK_THROWS_AS(backward(reduce_sum(threshold(x, 0.5))), UnsupportedError);
  }
}

TEST_CASE("grad_check examples") {
  Rng rng(10);
  const GraphFn lin = [](std::span<const Var> v) { return matmul(v[0], v[1]); };
  CHECK(grad_check(lin, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}) < 1e-9);
  const GraphFn sq = [](std::span<const Var> v) { return squash(v[0]); };
  CHECK(grad_check(sq, {random_tensor({2, 5}, rng)}) < 1e-6);
  const GraphFn rl = [](std::span<const Var> v) { return relu(v[0]); };
  Tensor away({8});
  for (std::size_t i = 0; i < 8; ++i) away[i] = (i % 2 ? 1.0 : -1.0) * rng.uniform(0.01, 1.0);
  CHECK(grad_check(rl, {away}) < 1e-9);
  const GraphFn th = [](std::span<const Var> v) { return threshold(v[0], 0.0); };
  CHECK_THROWS_AS(grad_check(th, {away}), UnsupportedError);
}

TEST_CASE("check suite passes for every op and the tiny end-to-end models") {
  for (const auto& c : run_gradcheck_suite(11, 10)) {
    CAPTURE(c.name);
    CAPTURE(c.max_error);
    CHECK(c.passed());
  }
}

TEST_CASE("forward and backward through a toy network are deterministic") {
  auto run = [] {
    Rng rng(12);
    Var w1 = parameter(random_tensor({4, 3}, rng));
    Var w2 = parameter(random_tensor({1, 4}, rng));
    const Var x = constant(random_tensor({3, 1}, rng));
    const Var loss = reduce_sum(matmul(w2, relu(matmul(w1, x))));
    backward(loss);
    std::vector<double> out{loss.value().item()};
    out.insert(out.end(), w1.grad().begin(), w1.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("ops keep finite inputs finite") {
  Rng rng(13);
  const Tensor big = random_tensor({3, 4}, rng, -1e6, 1e6);
  CHECK(squash(constant(big)).value().all_finite());
  CHECK(softmax(constant(big), 1).value().all_finite());
  CHECK(sigmoid(constant(big)).value().all_finite());
  CHECK(cross_entropy(constant(Tensor({2}, std::vector<double>{1e6, -1e6})), 1).value().all_finite());
}
