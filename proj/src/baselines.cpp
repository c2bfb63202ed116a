#include "tbscreen/baselines.hpp"

#include <cmath>
#include <sstream>

#include "config_util.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/rng.hpp"

namespace tbscreen {

std::string_view family_name(BaselineFamily family) {
  switch (family) {
    case BaselineFamily::lenet: return "lenet";
    case BaselineFamily::alexnet_mini: return "alexnet_mini";
    case BaselineFamily::vgg_mini: return "vgg_mini";
  }
  return "unknown";
}

BaselineFamily parse_family(std::string_view name) {
  if (name == "lenet") return BaselineFamily::lenet;
  if (name == "alexnet_mini") return BaselineFamily::alexnet_mini;
  if (name == "vgg_mini") return BaselineFamily::vgg_mini;
  throw ConfigError("unknown baseline family '" + std::string(name) + "'");
}

namespace {

enum class LayerKind { conv, pool, dense };

struct Layer {
  LayerKind kind;
  std::size_t out = 0;  // channels or units
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool relu = true;
};

std::vector<Layer> layer_plan(const BaselineConfig& c) {
  const auto& w = c.conv_widths;
  std::vector<Layer> plan;
  auto conv = [&](std::size_t out, std::size_t k, std::size_t stride = 1, std::size_t pad = 0) {
    plan.push_back({LayerKind::conv, out, k, stride, pad, true});
  };
  auto pool = [&] { plan.push_back({LayerKind::pool, 0, 2, 2, 0, false}); };
  switch (c.family) {
    case BaselineFamily::lenet:
      conv(w[0], 5); pool();
      conv(w[1], 5); pool();
      break;
    case BaselineFamily::alexnet_mini:
      conv(w[0], 7, 2); pool();
      conv(w[1], 5);
      conv(w[2], 3); pool();
      break;
    case BaselineFamily::vgg_mini:
      for (std::size_t b = 0; b < 4; ++b) {
        conv(w[b], 3, 1, 1);
        conv(w[b], 3, 1, 1);
        pool();
      }
      break;
  }
  plan.push_back({LayerKind::dense, c.hidden_width, 0, 1, 0, true});
  plan.push_back({LayerKind::dense, c.class_count, 0, 1, 0, false});
  return plan;
}

std::size_t expected_widths(BaselineFamily f) {
  switch (f) {
    case BaselineFamily::lenet: return 2;
    case BaselineFamily::alexnet_mini: return 3;
    case BaselineFamily::vgg_mini: return 4;
  }
  return 0;
}

struct ParamShape {
  std::string name;
  Shape shape;
  std::size_t fan_in;
  bool bias;
};

/// Walks the plan over the input geometry; throws ConfigError if a layer
/// does not fit.
std::vector<ParamShape> param_shapes(const BaselineConfig& c) {
  std::vector<ParamShape> shapes;
  std::size_t channels = 1, side = c.input_side, features = 0;
  std::size_t conv_i = 0, fc_i = 0;
  for (const auto& layer : layer_plan(c)) {
    switch (layer.kind) {
      case LayerKind::conv: {
        const std::size_t padded = side + 2 * layer.pad;
        if (layer.kernel > padded)
          throw ConfigError(std::string(family_name(c.family)) + ": input side " +
                            std::to_string(c.input_side) + " too small for the conv stack");
        const std::string name = "conv" + std::to_string(++conv_i);
        const std::size_t fan_in = channels * layer.kernel * layer.kernel;
        shapes.push_back({name + ".kernels", {layer.out, channels, layer.kernel, layer.kernel}, fan_in, false});
        shapes.push_back({name + ".bias", {layer.out}, fan_in, true});
        side = (padded - layer.kernel) / layer.stride + 1;
        channels = layer.out;
        break;
      }
      case LayerKind::pool:
        side /= 2;
        if (side == 0)
          throw ConfigError(std::string(family_name(c.family)) + ": input side " +
                            std::to_string(c.input_side) + " too small for the pooling stack");
        break;
      case LayerKind::dense: {
        const std::size_t in = features ? features : channels * side * side;
        const std::string name = "fc" + std::to_string(++fc_i);
        shapes.push_back({name + ".weights", {in, layer.out}, in, false});
        shapes.push_back({name + ".bias", {layer.out}, in, true});
        features = layer.out;
        break;
      }
    }
  }
  return shapes;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

BaselineConfig BaselineConfig::defaults(BaselineFamily family, std::size_t input_side) {
  BaselineConfig c;
  c.family = family;
  c.input_side = input_side;
  switch (family) {
    case BaselineFamily::lenet:
      c.conv_widths = {6, 16};
      c.hidden_width = 32;
      break;
    case BaselineFamily::alexnet_mini:
      c.conv_widths = {16, 32, 32};
      c.hidden_width = 256;
      break;
    case BaselineFamily::vgg_mini:
      c.conv_widths = {8, 16, 32, 64};
      c.hidden_width = 256;
      break;
  }
  return c;
}

void BaselineConfig::validate() const {
  if (class_count != 2) throw ConfigError("baseline class_count is fixed at 2");
  if (conv_widths.size() != expected_widths(family))
    throw ConfigError(std::string(family_name(family)) + " needs " +
                      std::to_string(expected_widths(family)) + " conv widths");
  for (auto w : conv_widths)
    if (w == 0) throw ConfigError("baseline widths must be positive");
  if (hidden_width == 0) throw ConfigError("baseline hidden width must be positive");
  param_shapes(*this);
}

ConfigMap BaselineConfig::to_map() const {
  return {{"family", std::string(family_name(family))},
          {"input_side", std::to_string(input_side)},
          {"class_count", std::to_string(class_count)},
          {"conv_widths", join(conv_widths)},
          {"hidden_width", std::to_string(hidden_width)}};
}

BaselineConfig BaselineConfig::from_map(const ConfigMap& map) {
  BaselineConfig c;
  c.family = parse_family(detail::require_key(map, "family"));
  c.input_side = detail::get_size(map, "input_side");
  c.class_count = detail::get_size(map, "class_count");
  c.hidden_width = detail::get_size(map, "hidden_width");
  std::stringstream ss(detail::require_key(map, "conv_widths"));
  for (std::string item; std::getline(ss, item, ',');) {
    ConfigMap one{{"w", item}};
    c.conv_widths.push_back(detail::get_size(one, "w"));
  }
  c.validate();
  return c;
}

BaselineModel::BaselineModel(BaselineConfig config, std::vector<NamedTensor> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto shapes = param_shapes(config_);
  if (shapes.size() != params_.size())
    throw DimensionError(family() + " expects " + std::to_string(shapes.size()) +
                         " parameter tensors, got " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (shapes[i].name != params_[i].name || shapes[i].shape != params_[i].value.shape())
      throw DimensionError(family() + " parameter '" + params_[i].name + "' " +
                           shape_string(params_[i].value.shape()) + " does not match '" +
                           shapes[i].name + "' " + shape_string(shapes[i].shape));
}

Var BaselineModel::outputs(std::span<const Var> params, const Var& input) const {
  if (input.value().rank() != 3 || input.shape()[0] != 1 ||
      input.shape()[1] != config_.input_side || input.shape()[2] != config_.input_side)
    throw DimensionError(family() + " expects a patch [1," + std::to_string(config_.input_side) +
                         "," + std::to_string(config_.input_side) + "], got " +
                         shape_string(input.shape()));
  Var x = input;
  std::size_t next = 0;
  for (const auto& layer : layer_plan(config_)) {
    switch (layer.kind) {
      case LayerKind::conv:
        if (layer.pad) x = pad2d(x, layer.pad);
        x = bias_add(conv2d(x, params[next], layer.stride), params[next + 1]);
        next += 2;
        break;
      case LayerKind::pool:
        x = downsample(x, 2);
        break;
      case LayerKind::dense:
        x = reshape(x, {1, x.value().size()});
        x = matmul(x, params[next]);
        x = bias_add(reshape(x, {layer.out}), params[next + 1]);
        next += 2;
        break;
    }
    if (layer.relu) x = relu(x);
  }
  return x;
}

Var BaselineModel::loss(const Var& outputs, Label label) const {
  return cross_entropy(outputs, static_cast<std::size_t>(label));
}

double BaselineModel::positive_score(const Tensor& outputs) const {
  const double a = outputs[0], b = outputs[1];
  // softmax([a,b])[1] = sigmoid(b - a)
  const double z = b - a;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

BaselineModel build_baseline(const BaselineConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  std::vector<NamedTensor> params;
  for (const auto& ps : param_shapes(config)) {
    Tensor t(ps.shape, 0.0);
    if (!ps.bias) {
      // He-uniform: keeps activation variance through the relu stack.
      const double bound = std::sqrt(6.0 / static_cast<double>(ps.fan_in));
      for (auto& v : t.data()) v = rng.uniform(-bound, bound);
    }
    params.push_back({ps.name, std::move(t)});
  }
  return BaselineModel(config, std::move(params));
}

std::pair<BaselineModel, TrainingCurve> train_baseline(std::span<const PatchSample> train,
                                                       std::span<const PatchSample> test,
                                                       const BaselineConfig& config,
                                                       const TrainHyper& hyper,
                                                       const EpochCallback& on_epoch) {
  BaselineModel model = build_baseline(config, hyper.seed);
  auto curve = train_classifier(model, train, test, hyper, on_epoch);
  return {std::move(model), std::move(curve)};
}

}  // namespace tbscreen
