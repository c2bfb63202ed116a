#include "tbscreen/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "tbscreen/baselines.hpp"
#include "tbscreen/capsnet.hpp"
#include "tbscreen/gradcheck.hpp"
#include "tbscreen/rng.hpp"

namespace tbscreen {

namespace {

constexpr double kEpsilon = 1e-5;
constexpr double kDefaultTolerance = 1e-4;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values with |x| in [0.1, 1] so piecewise-linear ops stay away from kinks.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return t;
}

using PointFn = std::function<std::vector<Tensor>(Rng&)>;

GradCheckCase check(const std::string& name, const GraphFn& fn, const PointFn& point, Rng& rng,
                    std::size_t points, double tolerance = kDefaultTolerance) {
  GradCheckCase c{name, 0.0, tolerance};
  for (std::size_t i = 0; i < points; ++i)
    c.max_error = std::max(c.max_error, grad_check(fn, point(rng), kEpsilon));
  return c;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, std::size_t points) {
  Rng rng(seed);
  std::vector<GradCheckCase> out;
  auto unary = [&](Shape s, double lo = -1.0, double hi = 1.0) -> PointFn {
    return [s, lo, hi](Rng& r) { return std::vector<Tensor>{random_tensor(s, r, lo, hi)}; };
  };

  out.push_back(check("conv2d stride 1",
                      [](std::span<const Var> v) { return conv2d(v[0], v[1], 1); },
                      [](Rng& r) {
                        return std::vector<Tensor>{random_tensor({2, 7, 7}, r), random_tensor({3, 2, 3, 3}, r)};
                      },
                      rng, points));
  out.push_back(check("conv2d stride 2",
                      [](std::span<const Var> v) { return conv2d(v[0], v[1], 2); },
                      [](Rng& r) {
                        return std::vector<Tensor>{random_tensor({2, 9, 9}, r), random_tensor({2, 2, 3, 3}, r)};
                      },
                      rng, points));
  out.push_back(check("matmul", [](std::span<const Var> v) { return matmul(v[0], v[1]); },
                      [](Rng& r) {
                        return std::vector<Tensor>{random_tensor({3, 4}, r), random_tensor({4, 2}, r)};
                      },
                      rng, points, 1e-9));
  out.push_back(check("relu", [](std::span<const Var> v) { return relu(v[0]); },
                      [](Rng& r) { return std::vector<Tensor>{away_from_zero({12}, r)}; }, rng, points,
                      1e-9));
  out.push_back(check("sigmoid", [](std::span<const Var> v) { return sigmoid(v[0]); },
                      unary({8}, -4.0, 4.0), rng, points));
  out.push_back(check("softmax axis 0", [](std::span<const Var> v) { return softmax(v[0], 0); },
                      unary({4, 3}, -3.0, 3.0), rng, points));
  out.push_back(check("softmax axis 1", [](std::span<const Var> v) { return softmax(v[0], 1); },
                      unary({4, 3}, -3.0, 3.0), rng, points));
  out.push_back(check("squash", [](std::span<const Var> v) { return squash(v[0]); },
                      unary({3, 5}, -2.0, 2.0), rng, points, 1e-6));
  out.push_back(check("add", [](std::span<const Var> v) { return add(v[0], v[1]); },
                      [](Rng& r) { return std::vector<Tensor>{random_tensor({5}, r), random_tensor({5}, r)}; },
                      rng, points, 1e-9));
  out.push_back(check("mul", [](std::span<const Var> v) { return mul(v[0], v[1]); },
                      [](Rng& r) { return std::vector<Tensor>{random_tensor({5}, r), random_tensor({5}, r)}; },
                      rng, points));
  out.push_back(check("scale", [](std::span<const Var> v) { return scale(v[0], -1.7); }, unary({6}),
                      rng, points, 1e-9));
  out.push_back(check("reduce-sum", [](std::span<const Var> v) { return reduce_sum(v[0]); },
                      unary({2, 3}), rng, points, 1e-9));
  out.push_back(check("norm", [](std::span<const Var> v) { return norm(v[0]); },
                      [](Rng& r) { return std::vector<Tensor>{away_from_zero({3, 4}, r)}; }, rng, points));
  out.push_back(check("margin-loss",
                      [](std::span<const Var> v) { return margin_loss(v[0], Tensor({2}, {0.0, 1.0})); },
                      // Lengths in (0.12, 0.88) keep both hinges away from their kinks.
                      unary({2}, 0.12, 0.88), rng, points));
  out.push_back(check("cross-entropy", [](std::span<const Var> v) { return cross_entropy(v[0], 1); },
                      unary({3}, -3.0, 3.0), rng, points));
  out.push_back(check("downsample", [](std::span<const Var> v) { return downsample(v[0], 2); },
                      unary({2, 5, 4}), rng, points, 1e-9));
  out.push_back(check("pad2d", [](std::span<const Var> v) { return pad2d(v[0], 1); }, unary({2, 3, 3}),
                      rng, points, 1e-9));
  out.push_back(check("bias-add", [](std::span<const Var> v) { return bias_add(v[0], v[1]); },
                      [](Rng& r) {
                        return std::vector<Tensor>{random_tensor({3, 2, 2}, r), random_tensor({3}, r)};
                      },
                      rng, points, 1e-9));
  out.push_back(check("reshape", [](std::span<const Var> v) { return reshape(v[0], {6}); },
                      unary({2, 3}), rng, points, 1e-9));
  out.push_back(check("to-capsules", [](std::span<const Var> v) { return to_capsules(v[0], 2); },
                      unary({4, 2, 3}), rng, points, 1e-9));
  out.push_back(check("capsule-predict",
                      [](std::span<const Var> v) { return capsule_predict(v[0], v[1]); },
                      [](Rng& r) {
                        return std::vector<Tensor>{random_tensor({3, 4}, r), random_tensor({3, 2, 5, 4}, r)};
                      },
                      rng, points));
  out.push_back(check("route-sum", [](std::span<const Var> v) { return route_sum(v[0], v[1]); },
                      [](Rng& r) {
                        return std::vector<Tensor>{random_tensor({4, 2}, r), random_tensor({4, 2, 3}, r)};
                      },
                      rng, points));
  out.push_back(check("agreement", [](std::span<const Var> v) { return agreement(v[0], v[1]); },
                      [](Rng& r) {
                        return std::vector<Tensor>{random_tensor({4, 2, 3}, r), random_tensor({2, 3}, r)};
                      },
                      rng, points));
  out.push_back(check("dynamic routing (3 iterations)",
                      [](std::span<const Var> v) { return route(v[0], 3).v; }, unary({5, 2, 4}), rng,
                      points));

  // End-to-end: tiny capsule network, margin loss w.r.t. every parameter.
  {
    CapsNetConfig tiny;
    tiny.input_side = 18;
    tiny.conv1_channels = 2;
    tiny.conv1_stride = 1;
    tiny.primary_caps_channels = 2;
    tiny.primary_caps_dim = 4;
    tiny.primary_caps_stride = 1;
    tiny.class_caps_dim = 4;
    GradCheckCase c{"capsnet end-to-end (tiny)", 0.0, kDefaultTolerance};
    for (std::size_t i = 0; i < std::max<std::size_t>(1, points / 5); ++i) {
      CapsNetModel model(tiny, init_params(tiny, rng.next()));
      const Tensor patch = random_tensor({1, tiny.input_side, tiny.input_side}, rng, 0.0, 1.0);
      const Label label = i % 2 ? Label::positive : Label::negative;
      std::vector<Tensor> point;
      for (const auto& p : model.parameters()) point.push_back(p.value);
      // Zero biases put some relu inputs exactly on the kink for a constant
      // patch region; jitter them.
      for (auto& v : point[1].data()) v = rng.uniform(-0.1, 0.1);
      for (auto& v : point[3].data()) v = rng.uniform(-0.1, 0.1);
      const GraphFn fn = [&](std::span<const Var> v) {
        return model.loss(model.outputs(v, constant(patch)), label);
      };
      c.max_error = std::max(c.max_error, grad_check(fn, point, kEpsilon));
    }
    out.push_back(c);
  }

  struct TinyBaseline {
    BaselineFamily family;
    std::size_t side;
    std::vector<std::size_t> widths;
  };
  for (const auto& tb : {TinyBaseline{BaselineFamily::lenet, 16, {2, 2}},
                         TinyBaseline{BaselineFamily::alexnet_mini, 44, {2, 2, 2}},
                         TinyBaseline{BaselineFamily::vgg_mini, 16, {2, 2, 2, 2}}}) {
    BaselineConfig cfg;
    cfg.family = tb.family;
    cfg.input_side = tb.side;
    cfg.conv_widths = tb.widths;
    cfg.hidden_width = 4;
    GradCheckCase c{std::string(family_name(tb.family)) + " end-to-end (tiny)", 0.0, kDefaultTolerance};
    for (std::size_t i = 0; i < std::max<std::size_t>(1, points / 5); ++i) {
      BaselineModel model = build_baseline(cfg, rng.next());
      const Tensor patch = random_tensor({1, tb.side, tb.side}, rng, 0.0, 1.0);
      std::vector<Tensor> point;
      for (const auto& p : model.parameters()) {
        point.push_back(p.value);
        if (p.name.ends_with(".bias"))
          for (auto& v : point.back().data()) v = rng.uniform(-0.1, 0.1);
      }
      const Label label = i % 2 ? Label::positive : Label::negative;
      const GraphFn fn = [&](std::span<const Var> v) {
        return model.loss(model.outputs(v, constant(patch)), label);
      };
      c.max_error = std::max(c.max_error, grad_check(fn, point, kEpsilon));
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace tbscreen
