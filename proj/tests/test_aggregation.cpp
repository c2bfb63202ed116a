#include <doctest.h>

#include <cmath>
#include <numeric>

#include "tbscreen/aggregation.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/rng.hpp"

using namespace tbscreen;

namespace {

HistogramFeature feature(std::vector<double> normalized) {
  HistogramFeature f;
  f.total_patches = 1;
  f.normalized = std::move(normalized);
  f.bins.assign(f.normalized.size(), 0);
  return f;
}

std::vector<double> random_scores(Rng& rng, std::size_t n) {
  std::vector<double> s(n);
  for (auto& v : s) v = rng.uniform();
  return s;
}

// Separable proportions at B = 2: positives carry more positive-bin mass.
void separable(Rng& rng, std::size_t n, std::vector<HistogramFeature>& f, std::vector<Label>& y) {
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    const double p = pos ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.4);
    f.push_back(feature({1.0 - p, p}));
    y.push_back(pos ? Label::positive : Label::negative);
  }
}

}  // namespace

TEST_CASE("histogram examples") {
  const std::vector<double> s = {0.1, 0.9, 0.8};
  auto h = build_histogram(s, 2);
  CHECK(h.bins == std::vector<std::size_t>{1, 2});
  CHECK(h.total_patches == 3);

  const std::vector<double> one = {1.0};
  h = build_histogram(one, 10);
  CHECK(h.bins[9] == 1);

  const std::vector<double> zeros(204, 0.0);
  h = build_histogram(zeros, 2);
  CHECK(h.bins == std::vector<std::size_t>{204, 0});
  CHECK(h.normalized == std::vector<double>{1.0, 0.0});

  const std::vector<double> half = {0.5};
  CHECK(build_histogram(half, 2).bins == std::vector<std::size_t>{0, 1});
}

TEST_CASE("histogram errors") {
  CHECK_THROWS_AS(build_histogram({}, 2), ValidationError);
  const std::vector<double> s = {0.2};
  CHECK_THROWS_AS(build_histogram(s, 1), ParameterError);
  const std::vector<double> bad = {1.2};
  CHECK_THROWS_AS(build_histogram(bad, 2), ValidationError);
}

TEST_CASE("histogram invariants") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = rng.integer(2, 12);
    auto s = random_scores(rng, rng.integer(1, 300));
    const auto h = build_histogram(s, b);
    CHECK(std::accumulate(h.bins.begin(), h.bins.end(), std::size_t{0}) == s.size());
    CHECK(std::abs(std::accumulate(h.normalized.begin(), h.normalized.end(), 0.0) - 1.0) < 1e-12);
    for (std::size_t k = 0; k < b; ++k) {
      std::size_t count = 0;
      for (double v : s)
        if (std::min<std::size_t>(static_cast<std::size_t>(v * b), b - 1) == k) ++count;
      CHECK(h.bins[k] == count);
    }
    rng.shuffle(s);
    CHECK(build_histogram(s, b).bins == h.bins);
  }
}

TEST_CASE("logistic prediction") {
  LogisticModel zero{{0.0, 0.0}, 0.0};
  CHECK(logistic_predict(zero, feature({0.3, 0.7})) == 0.5);
  LogisticModel m{{-4.0, 4.0}, 0.0};
  CHECK(logistic_predict(m, feature({0.0, 1.0})) == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))));
  CHECK(logistic_predict(m, feature({0.0, 1.0})) == doctest::Approx(0.982).epsilon(1e-3));
  double prev = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double p = logistic_predict(m, feature({1.0 - k / 20.0, k / 20.0}));
    CHECK(p >= prev);
    prev = p;
  }
  CHECK_THROWS_AS(logistic_predict(m, feature({1.0, 0.0, 0.0})), DimensionError);
}

TEST_CASE("logistic training examples") {
  std::vector<HistogramFeature> f = {feature({1.0, 0.0}), feature({0.0, 1.0})};
  std::vector<Label> y = {Label::negative, Label::positive};

  LogisticHyper h;
  h.learning_rate = 0.5;
  h.epochs = 500;
  auto t = train_logistic(f, y, h);
  CHECK(t.loss_curve.size() == 501);
  CHECK(t.loss_curve.back() < 0.1);
  CHECK(logistic_predict(t.model, f[0]) < 0.5);
  CHECK(logistic_predict(t.model, f[1]) >= 0.5);

  h.l2 = 1000.0;
  h.learning_rate = 1e-4;
  h.epochs = 2000;
  t = train_logistic(f, y, h);
  CHECK(std::hypot(t.model.weights[0], t.model.weights[1]) < 0.1);

  h = {};
  h.epochs = 0;
  t = train_logistic(f, y, h);
  CHECK(logistic_predict(t.model, f[0]) == 0.5);
  CHECK(logistic_predict(t.model, f[1]) == 0.5);

  const std::vector<Label> same = {Label::positive, Label::positive};
  CHECK_THROWS_AS(train_logistic(f, same, {}), ValidationError);
}

TEST_CASE("logistic gradient matches central differences") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<HistogramFeature> f;
    std::vector<Label> y;
    separable(rng, 12, f, y);
    LogisticModel m{{rng.uniform(-2, 2), rng.uniform(-2, 2)}, rng.uniform(-1, 1)};
    const double l2 = rng.uniform(0.0, 0.5);
    const auto g = logistic_gradient(m, f, y, l2);
    const double eps = 1e-6;
    for (std::size_t k = 0; k <= 2; ++k) {
      auto up = m, down = m;
      double& a = k < 2 ? up.weights[k] : up.bias;
      double& b = k < 2 ? down.weights[k] : down.bias;
      a += eps;
      b -= eps;
      const double fd = (logistic_objective(up, f, y, l2) - logistic_objective(down, f, y, l2)) / (2 * eps);
      CHECK(std::abs(fd - (k < 2 ? g.weights[k] : g.bias)) < 1e-8);
    }
  }
}

TEST_CASE("logistic loss is non-increasing at a small rate") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<HistogramFeature> f;
    std::vector<Label> y;
    separable(rng, 20, f, y);
    LogisticHyper h;
    h.learning_rate = 0.01;
    h.epochs = 300;
    const auto t = train_logistic(f, y, h);
    for (std::size_t i = 1; i < t.loss_curve.size(); ++i) CHECK(t.loss_curve[i] <= t.loss_curve[i - 1]);
  }
}

TEST_CASE("full-image metrics") {
  std::vector<ImagePrediction> p;
  for (int i = 0; i < 10; ++i) p.push_back({i < 8 ? 0.9 : 0.1, Label::positive});
  auto m = evaluate_full_images(p);
  REQUIRE(m.sensitivity.has_value());
  CHECK(*m.sensitivity == doctest::Approx(0.80));
  CHECK_FALSE(m.specificity.has_value());
  CHECK(m.true_positive == 8);
  CHECK(m.false_negative == 2);

  p = {{0.9, Label::positive}, {0.5, Label::positive}, {0.2, Label::negative}, {0.49, Label::negative}};
  m = evaluate_full_images(p);
  CHECK(*m.sensitivity == 1.0);
  CHECK(*m.specificity == 1.0);
  CHECK(m.accuracy == 1.0);

  p.clear();
  for (int i = 0; i < 10; ++i) p.push_back({0.1, i < 5 ? Label::positive : Label::negative});
  m = evaluate_full_images(p);
  CHECK(*m.sensitivity == 0.0);
  CHECK(*m.specificity == 1.0);
  CHECK(m.accuracy == 0.5);

  p.clear();
  for (int i = 0; i < 4; ++i) p.push_back({0.3, Label::negative});
  CHECK_FALSE(evaluate_full_images(p).sensitivity.has_value());
  CHECK_THROWS_AS(evaluate_full_images({}), ValidationError);
}

TEST_CASE("metrics ignore prediction order") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ImagePrediction> p;
    const std::size_t n = rng.integer(2, 40);
    for (std::size_t i = 0; i < n; ++i)
      p.push_back({rng.uniform(), i % 2 ? Label::positive : Label::negative});
    const auto a = evaluate_full_images(p);
    rng.shuffle(p);
    const auto b = evaluate_full_images(p);
    CHECK(a.sensitivity == b.sensitivity);
    CHECK(a.specificity == b.specificity);
    CHECK(a.accuracy == b.accuracy);
  }
}
