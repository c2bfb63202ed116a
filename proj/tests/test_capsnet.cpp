#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tbscreen/capsnet.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/model.hpp"
#include "tbscreen/rng.hpp"

using namespace tbscreen;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double norm_of(const Tensor& v, std::size_t j) {
  const std::size_t d = v.dim(1);
  double q = 0.0;
  for (std::size_t k = 0; k < d; ++k) q += v.at({j, k}) * v.at({j, k});
  return std::sqrt(q);
}

// Plain-array routing recurrence: b = 0; repeat {c = softmax_j(b);
// s_j = sum_i c_ij u_ij; v_j = squash(s_j); b_ij += u_ij . v_j}.
struct Routed {
  std::vector<std::vector<double>> c;
  std::vector<std::vector<double>> v;
};
Routed reference_routing(const Tensor& u, std::size_t iters) {
  const std::size_t n = u.dim(0), j = u.dim(1), d = u.dim(2);
  std::vector<std::vector<double>> b(n, std::vector<double>(j, 0.0)), c = b;
  std::vector<std::vector<double>> v(j, std::vector<double>(d, 0.0));
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const double mx = *std::max_element(b[i].begin(), b[i].end());
      double z = 0.0;
      for (std::size_t k = 0; k < j; ++k) z += std::exp(b[i][k] - mx);
      for (std::size_t k = 0; k < j; ++k) c[i][k] = std::exp(b[i][k] - mx) / z;
    }
    for (std::size_t k = 0; k < j; ++k) {
      std::vector<double> s(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < d; ++e) s[e] += c[i][k] * u.at({i, k, e});
      double q = 0.0;
      for (double x : s) q += x * x;
      for (std::size_t e = 0; e < d; ++e) v[k][e] = q / (1.0 + q) * s[e] / std::sqrt(q + 1e-9);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < j; ++k)
        for (std::size_t e = 0; e < d; ++e) b[i][k] += u.at({i, k, e}) * v[k][e];
  }
  return {c, v};
}

// Two primary capsules that both predict direction (1, 0) for class 0 and
// contradict each other for class 1.
Tensor agreeing_predictions() {
  Tensor u({2, 2, 2});
  u.at({0, 0, 0}) = 1.0;
  u.at({1, 0, 0}) = 1.0;
  u.at({0, 1, 1}) = 1.0;
  u.at({1, 1, 1}) = -1.0;
  return u;
}

Tensor blob_patch(std::size_t side, double cx, double cy) {
  Tensor p({1, side, side});
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      p.at({0, y, x}) = std::exp(-(dx * dx + dy * dy) / 18.0);
    }
  return p;
}

std::vector<PatchSample> blob_vs_blank(std::size_t side, std::size_t count) {
  std::vector<PatchSample> out;
  Rng rng(99);
  for (std::size_t i = 0; i < count; ++i) {
    if (i % 2 == 0) {
      const double cx = rng.uniform(16.0, side - 16.0), cy = rng.uniform(16.0, side - 16.0);
      out.push_back({blob_patch(side, cx, cy), Label::positive});
    } else {
      out.push_back({Tensor({1, side, side}), Label::negative});
    }
  }
  return out;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("default geometry") {
  const CapsNetConfig cfg;
  CHECK(cfg.conv1_side() == (64 - 9) / 2 + 1);
  CHECK(cfg.grid_side() == (28 - 9) / 2 + 1);
  CHECK(cfg.primary_count() == 800);
  const auto p = init_params(cfg, 1);
  CHECK(p.transform.shape() == Shape{800, 2, 16, 8});
  CHECK(p.conv1_kernels.shape() == Shape{16, 1, 9, 9});
  CHECK(p.primary_kernels.shape() == Shape{64, 16, 9, 9});
}

TEST_CASE("config validation") {
  CapsNetConfig cfg;
  cfg.kernel_side = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.class_caps_count = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.input_side = 16;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  CHECK(CapsNetConfig::from_map(cfg.to_map()).to_map() == cfg.to_map());
}

TEST_CASE("init is deterministic, scaled by fan-in, with zero biases") {
  const CapsNetConfig cfg;
  const auto a = init_params(cfg, 5), b = init_params(cfg, 5), c = init_params(cfg, 6);
  CHECK(a.transform == b.transform);
  CHECK(a.conv1_kernels == b.conv1_kernels);
  CHECK_FALSE(a.transform == c.transform);
  for (double v : a.conv1_bias.data()) CHECK(v == 0.0);
  for (double v : a.primary_bias.data()) CHECK(v == 0.0);
  const double conv1_bound = 1.0 / 9.0;  // fan_in 81
  for (double v : a.conv1_kernels.data()) CHECK(std::abs(v) <= conv1_bound);
  const double w_bound = 1.0 / std::sqrt(8.0);
  for (double v : a.transform.data()) CHECK(std::abs(v) <= w_bound);
}

TEST_CASE("forward contracts") {
  const CapsNetConfig cfg;
  const auto params = init_params(cfg, 3);
  Rng rng(4);
  const auto out = forward(cfg, params, random_tensor({1, 64, 64}, rng, 0.0, 1.0));
  CHECK(out.class_lengths.shape() == Shape{2});
  for (double l : out.class_lengths.data()) {
    CHECK(l >= 0.0);
    CHECK(l < 1.0);
  }
  const auto zero = forward(cfg, params, Tensor({1, 64, 64}));
  CHECK(zero.class_lengths[0] == 0.0);
  CHECK(zero.class_lengths[1] == 0.0);

  const Tensor patch = random_tensor({1, 64, 64}, rng, 0.0, 1.0);
  CHECK(forward(cfg, params, patch).class_lengths == forward(cfg, params, patch).class_lengths);
  CHECK_THROWS_AS(forward(cfg, params, Tensor({1, 60, 60})), DimensionError);
}

TEST_CASE("routing examples") {
  SUBCASE("one iteration uses uniform coefficients") {
    Rng rng(5);
    const Tensor u = random_tensor({6, 2, 3}, rng);
    const auto st = dynamic_routing(u, 1);
    REQUIRE(st.coefficient_history.size() == 1);
    for (double c : st.coefficient_history[0].data()) CHECK(c == 0.5);
    const auto ref = reference_routing(u, 1);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t e = 0; e < 3; ++e) CHECK(std::abs(st.class_caps_v.at({j, e}) - ref.v[j][e]) < 1e-14);
  }
  SUBCASE("zero predictions are a fixed point") {
    const auto st = dynamic_routing(Tensor({4, 2, 3}), 3);
    for (double v : st.class_caps_v.data()) CHECK(v == 0.0);
    for (const auto& c : st.coefficient_history)
      for (double x : c.data()) CHECK(x == 0.5);
  }
  SUBCASE("agreeing capsules pull their coefficients toward the agreed class") {
    const Tensor u = agreeing_predictions();
    const auto st = dynamic_routing(u, 3);
    const auto ref = reference_routing(u, 3);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(st.coefficients_c.at({i, 0}) > st.coefficients_c.at({i, 1}));
      CHECK(std::abs(st.coefficients_c.at({i, 0}) - ref.c[i][0]) < 1e-14);
    }
    for (std::size_t it = 1; it < st.coefficient_history.size(); ++it)
      for (std::size_t i = 0; i < 2; ++i)
        CHECK(st.coefficient_history[it].at({i, 0}) >= st.coefficient_history[it - 1].at({i, 0}));
  }
  SUBCASE("fewer than one iteration is rejected") {
    CHECK_THROWS_AS(dynamic_routing(Tensor({2, 2, 2}), 0), ParameterError);
  }
}

TEST_CASE("routing invariants over random instances") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng.integer(1, 40), d = rng.integer(1, 16), iters = rng.integer(1, 5);
    const Tensor u = random_tensor({n, 2, d}, rng, -2.0, 2.0);
    const auto st = dynamic_routing(u, iters);
    CHECK(st.coefficient_history.size() == iters);
    for (const auto& c : st.coefficient_history)
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(c.at({i, 0}) + c.at({i, 1}) - 1.0) < 1e-10);
    for (std::size_t j = 0; j < 2; ++j) CHECK(norm_of(st.class_caps_v, j) < 1.0);
    const auto ref = reference_routing(u, iters);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t e = 0; e < d; ++e) CHECK(std::abs(st.class_caps_v.at({j, e}) - ref.v[j][e]) < 1e-12);
  }
}

TEST_CASE("permuting primary capsules leaves class lengths unchanged") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 30, din = 4, dout = 6;
    const Tensor u = random_tensor({n, din}, rng), w = random_tensor({n, 2, dout, din}, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    Tensor up({n, din}), wp({n, 2, dout, din});
    const std::size_t wrow = 2 * dout * din;
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(u.data().begin() + perm[i] * din, din, up.data().begin() + i * din);
      std::copy_n(w.data().begin() + perm[i] * wrow, wrow, wp.data().begin() + i * wrow);
    }
    const auto a = dynamic_routing(capsule_predict(constant(u), constant(w)).value(), 3);
    const auto b = dynamic_routing(capsule_predict(constant(up), constant(wp)).value(), 3);
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::abs(norm_of(a.class_caps_v, j) - norm_of(b.class_caps_v, j)) < 1e-10);
  }
}

TEST_CASE("patch decisions") {
  auto lengths = [](double neg, double pos) { return Tensor({2}, std::vector<double>{neg, pos}); };
  auto d = decide(lengths(0.3, 0.8));
  CHECK(d.label == Label::positive);
  CHECK(d.score == 0.8);
  d = decide(lengths(0.9, 0.2));
  CHECK(d.label == Label::negative);
  CHECK(d.score == 0.2);
  CHECK(decide(lengths(0.1, 0.5)).label == Label::positive);
}

TEST_CASE("training contracts") {
  CapsNetConfig cfg;
  cfg.input_side = 32;
  cfg.conv1_channels = 4;
  cfg.conv1_stride = 1;
  cfg.primary_caps_channels = 2;
  cfg.primary_caps_dim = 4;
  cfg.class_caps_dim = 4;
  const auto data = blob_vs_blank(32, 8);

  SUBCASE("lr 0 gives identical epoch losses") {
    TrainHyper h;
    h.learning_rate = 0.0;
    h.epochs = 3;
    const auto [model, curve] = train_patch_classifier(data, {}, cfg, h);
    REQUIRE(curve.epochs.size() == 3);
    CHECK(curve.epochs[0].loss == curve.epochs[1].loss);
    CHECK(curve.epochs[1].loss == curve.epochs[2].loss);
  }
  SUBCASE("same seed and data give an identical final loss") {
    TrainHyper h;
    h.epochs = 2;
    const auto a = train_patch_classifier(data, {}, cfg, h).second.epochs.back().loss;
    const auto b = train_patch_classifier(data, {}, cfg, h).second.epochs.back().loss;
    CHECK(a == b);
  }
  SUBCASE("single-class or empty data is rejected") {
    std::vector<PatchSample> one(data.begin(), data.begin() + 1);
    CHECK_THROWS_AS(train_patch_classifier(one, {}, cfg, TrainHyper{}), ValidationError);
    CHECK_THROWS_AS(train_patch_classifier({}, {}, cfg, TrainHyper{}), ValidationError);
  }
}

TEST_CASE("blob versus blank is learned within 30 epochs") {
  const CapsNetConfig cfg;
  const auto data = blob_vs_blank(64, 20);
  TrainHyper h;
  h.epochs = 30;
  double best = 0.0;
  train_patch_classifier(data, {}, cfg, h,
                         [&](const EpochStats& s) { best = std::max(best, s.train_accuracy); });
  CHECK(best == 1.0);
}

TEST_CASE("dihedral transforms") {
  Tensor t({1, 3, 3});
  std::iota(t.data().begin(), t.data().end(), 0.0);
  // 0 1 2 / 3 4 5 / 6 7 8
  CHECK(values(dihedral(t, 0)) == values(t));
  CHECK(values(dihedral(t, 1)) == std::vector<double>{2, 1, 0, 5, 4, 3, 8, 7, 6});
  CHECK(values(dihedral(t, 2)) == std::vector<double>{6, 7, 8, 3, 4, 5, 0, 1, 2});
  CHECK(values(dihedral(t, 4)) == std::vector<double>{0, 3, 6, 1, 4, 7, 2, 5, 8});

  Rng rng(21);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  std::vector<std::vector<double>> seen;
  for (unsigned k = 0; k < 8; ++k) {
    const Tensor y = dihedral(x, k);
    auto a = values(x), b = values(y);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(std::find(seen.begin(), seen.end(), values(y)) == seen.end());
    seen.push_back(values(y));
  }
  // Closed under composition.
  for (unsigned k = 0; k < 8; ++k)
    for (unsigned j = 0; j < 8; ++j)
      CHECK(std::find(seen.begin(), seen.end(), values(dihedral(dihedral(x, k), j))) != seen.end());
  CHECK_THROWS_AS(dihedral(Tensor({1, 3, 4}), 1), DimensionError);
}
