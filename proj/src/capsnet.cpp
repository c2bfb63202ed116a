#include "tbscreen/capsnet.hpp"

#include <cmath>

#include "config_util.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/rng.hpp"

namespace tbscreen {

namespace {

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride) {
  return in < kernel ? 0 : (in - kernel) / stride + 1;
}

Tensor uniform_tensor(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

void CapsNetConfig::validate() const {
  if (kernel_side != 9) throw ConfigError("capsnet kernel_side is fixed at 9");
  if (class_caps_count != 2) throw ConfigError("capsnet class_caps_count is fixed at 2");
  if (conv1_stride == 0 || primary_caps_stride == 0) throw ConfigError("capsnet strides must be >= 1");
  if (conv1_channels == 0 || primary_caps_channels == 0 || primary_caps_dim == 0 ||
      class_caps_dim == 0)
    throw ConfigError("capsnet channel counts and capsule dims must be >= 1");
  if (routing_iters == 0) throw ConfigError("capsnet routing_iters must be >= 1");
  if (grid_side() == 0)
    throw ConfigError("capsnet geometry: input side " + std::to_string(input_side) +
                      " leaves an empty primary capsule grid");
}

std::size_t CapsNetConfig::conv1_side() const {
  return conv_out(input_side, kernel_side, conv1_stride);
}

std::size_t CapsNetConfig::grid_side() const {
  return conv_out(conv1_side(), kernel_side, primary_caps_stride);
}

std::size_t CapsNetConfig::primary_count() const {
  return grid_side() * grid_side() * primary_caps_channels;
}

ConfigMap CapsNetConfig::to_map() const {
  return {
      {"input_side", std::to_string(input_side)},
      {"conv1_channels", std::to_string(conv1_channels)},
      {"conv1_stride", std::to_string(conv1_stride)},
      {"primary_caps_channels", std::to_string(primary_caps_channels)},
      {"primary_caps_dim", std::to_string(primary_caps_dim)},
      {"primary_caps_stride", std::to_string(primary_caps_stride)},
      {"class_caps_count", std::to_string(class_caps_count)},
      {"class_caps_dim", std::to_string(class_caps_dim)},
      {"routing_iters", std::to_string(routing_iters)},
      {"kernel_side", std::to_string(kernel_side)},
      {"m_plus", detail::exact(margin.m_plus)},
      {"m_minus", detail::exact(margin.m_minus)},
      {"lambda", detail::exact(margin.lambda)},
  };
}

CapsNetConfig CapsNetConfig::from_map(const ConfigMap& map) {
  using detail::get_double;
  using detail::get_size;
  CapsNetConfig c;
  c.input_side = get_size(map, "input_side");
  c.conv1_channels = get_size(map, "conv1_channels");
  c.conv1_stride = get_size(map, "conv1_stride");
  c.primary_caps_channels = get_size(map, "primary_caps_channels");
  c.primary_caps_dim = get_size(map, "primary_caps_dim");
  c.primary_caps_stride = get_size(map, "primary_caps_stride");
  c.class_caps_count = get_size(map, "class_caps_count");
  c.class_caps_dim = get_size(map, "class_caps_dim");
  c.routing_iters = get_size(map, "routing_iters");
  c.kernel_side = get_size(map, "kernel_side");
  c.margin.m_plus = get_double(map, "m_plus");
  c.margin.m_minus = get_double(map, "m_minus");
  c.margin.lambda = get_double(map, "lambda");
  c.validate();
  return c;
}

CapsNetParams init_params(const CapsNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t k = config.kernel_side;
  const std::size_t primary_out = config.primary_caps_channels * config.primary_caps_dim;
  CapsNetParams p;
  p.conv1_kernels = uniform_tensor({config.conv1_channels, 1, k, k}, k * k, rng);
  p.conv1_bias = Tensor({config.conv1_channels}, 0.0);
  p.primary_kernels =
      uniform_tensor({primary_out, config.conv1_channels, k, k}, config.conv1_channels * k * k, rng);
  p.primary_bias = Tensor({primary_out}, 0.0);
  p.transform = uniform_tensor({config.primary_count(), config.class_caps_count,
                                config.class_caps_dim, config.primary_caps_dim},
                               config.primary_caps_dim, rng);
  return p;
}

RoutingGraph route(const Var& predictions, std::size_t iters) {
  if (iters < 1) throw ParameterError("dynamic routing needs at least one iteration");
  if (predictions.value().rank() != 3)
    throw DimensionError("routing predictions must be [N, classes, dim], got " +
                         shape_string(predictions.shape()));
  const std::size_t n = predictions.shape()[0], classes = predictions.shape()[1];

  RoutingGraph g;
  g.logits_b = constant(Tensor({n, classes}, 0.0));
  for (std::size_t it = 0; it < iters; ++it) {
    g.coefficients_c = softmax(g.logits_b, 1);
    g.coefficient_history.push_back(g.coefficients_c.value());
    g.v = squash(route_sum(g.coefficients_c, predictions));
    g.logits_b = add(g.logits_b, agreement(predictions, g.v));
  }
  return g;
}

RoutingState dynamic_routing(const Tensor& predictions, std::size_t iters) {
  auto g = route(constant(predictions), iters);
  return {g.logits_b.value(), g.coefficients_c.value(), g.v.value(),
          std::move(g.coefficient_history)};
}

namespace {

struct CapsGraph {
  Var lengths;
  RoutingGraph routing;
};

CapsGraph build_graph(const CapsNetConfig& config, std::span<const Var> p, const Var& input) {
  if (input.value().rank() != 3 || input.shape()[0] != 1 ||
      input.shape()[1] != config.input_side || input.shape()[2] != config.input_side)
    throw DimensionError("capsnet expects a patch [1," + std::to_string(config.input_side) + "," +
                         std::to_string(config.input_side) + "], got " +
                         shape_string(input.shape()));
  const Var h1 = relu(bias_add(conv2d(input, p[0], config.conv1_stride), p[1]));
  const Var primary = bias_add(conv2d(h1, p[2], config.primary_caps_stride), p[3]);
  const Var u = squash(to_capsules(primary, config.primary_caps_dim));
  const Var u_hat = capsule_predict(u, p[4]);
  CapsGraph g;
  g.routing = route(u_hat, config.routing_iters);
  g.lengths = norm(g.routing.v);
  return g;
}

std::vector<NamedTensor> to_named(CapsNetParams p) {
  std::vector<NamedTensor> out;
  out.push_back({"conv1.kernels", std::move(p.conv1_kernels)});
  out.push_back({"conv1.bias", std::move(p.conv1_bias)});
  out.push_back({"primary.kernels", std::move(p.primary_kernels)});
  out.push_back({"primary.bias", std::move(p.primary_bias)});
  out.push_back({"class.transform", std::move(p.transform)});
  return out;
}

void check_param_shapes(const CapsNetConfig& c, const std::vector<NamedTensor>& params) {
  const std::size_t k = c.kernel_side;
  const std::size_t primary_out = c.primary_caps_channels * c.primary_caps_dim;
  const std::vector<std::pair<std::string, Shape>> expected = {
      {"conv1.kernels", {c.conv1_channels, 1, k, k}},
      {"conv1.bias", {c.conv1_channels}},
      {"primary.kernels", {primary_out, c.conv1_channels, k, k}},
      {"primary.bias", {primary_out}},
      {"class.transform", {c.primary_count(), c.class_caps_count, c.class_caps_dim, c.primary_caps_dim}},
  };
  if (params.size() != expected.size())
    throw DimensionError("capsnet expects " + std::to_string(expected.size()) + " parameter tensors");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (params[i].name != expected[i].first)
      throw DimensionError("capsnet parameter " + std::to_string(i) + " should be '" +
                           expected[i].first + "', got '" + params[i].name + "'");
    if (params[i].value.shape() != expected[i].second)
      throw DimensionError("capsnet parameter '" + params[i].name + "' has shape " +
                           shape_string(params[i].value.shape()) + ", expected " +
                           shape_string(expected[i].second));
  }
}

}  // namespace

CapsNetOutput forward(const CapsNetConfig& config, const CapsNetParams& params,
                      const Tensor& patch) {
  config.validate();
  const std::vector<Var> p = {constant(params.conv1_kernels), constant(params.conv1_bias),
                              constant(params.primary_kernels), constant(params.primary_bias),
                              constant(params.transform)};
  auto g = build_graph(config, p, constant(patch));
  return {g.lengths.value(),
          {g.routing.logits_b.value(), g.routing.coefficients_c.value(), g.routing.v.value(),
           std::move(g.routing.coefficient_history)}};
}

CapsNetModel::CapsNetModel(CapsNetConfig config, CapsNetParams params)
    : CapsNetModel(config, to_named(std::move(params))) {}

CapsNetModel::CapsNetModel(CapsNetConfig config, std::vector<NamedTensor> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  check_param_shapes(config_, params_);
}

Var CapsNetModel::outputs(std::span<const Var> params, const Var& input) const {
  return build_graph(config_, params, input).lengths;
}

Var CapsNetModel::loss(const Var& outputs, Label label) const {
  Tensor target({2}, 0.0);
  target[static_cast<std::size_t>(label)] = 1.0;
  return margin_loss(outputs, target, config_.margin);
}

double CapsNetModel::positive_score(const Tensor& outputs) const {
  return outputs[static_cast<std::size_t>(Label::positive)];
}

CapsNetParams CapsNetModel::params() const {
  return {params_[0].value, params_[1].value, params_[2].value, params_[3].value,
          params_[4].value};
}

PatchPrediction decide(const Tensor& class_lengths) {
  if (class_lengths.size() != 2) throw DimensionError("expected two class lengths");
  const double score = class_lengths[static_cast<std::size_t>(Label::positive)];
  return {label_for_score(score), score};
}

PatchPrediction predict_patch(const CapsNetModel& model, const Tensor& patch) {
  const double score = model.score(patch);
  return {label_for_score(score), score};
}

std::pair<CapsNetModel, TrainingCurve> train_patch_classifier(
    std::span<const PatchSample> train, std::span<const PatchSample> test,
    const CapsNetConfig& config, const TrainHyper& hyper, const EpochCallback& on_epoch) {
  CapsNetModel model(config, init_params(config, hyper.seed));
  auto curve = train_classifier(model, train, test, hyper, on_epoch);
  return {std::move(model), std::move(curve)};
}

}  // namespace tbscreen
