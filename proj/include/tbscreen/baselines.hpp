#pragma once

// Small convolutional baselines in the shape of LeNet, AlexNet and VGG,
// scaled to 64x64 inputs. They share the autograd ops with the capsule
// network and use a softmax cross-entropy head.

#include <cstdint>
#include <string>
#include <vector>

#include "tbscreen/model.hpp"

namespace tbscreen {

enum class BaselineFamily { lenet, alexnet_mini, vgg_mini };

std::string_view family_name(BaselineFamily family);
/// Throws ConfigError for an unknown name.
BaselineFamily parse_family(std::string_view name);

struct BaselineConfig {
  BaselineFamily family = BaselineFamily::lenet;
  std::size_t input_side = 64;
  std::size_t class_count = 2;
  /// lenet: 2 conv widths; alexnet_mini: 3; vgg_mini: 4 (one per block).
  std::vector<std::size_t> conv_widths;
  std::size_t hidden_width = 0;

  /// Default widths for a family.
  static BaselineConfig defaults(BaselineFamily family, std::size_t input_side = 64);

  void validate() const;
  ConfigMap to_map() const;
  static BaselineConfig from_map(const ConfigMap& map);
};

class BaselineModel final : public PatchModel {
 public:
  BaselineModel(BaselineConfig config, std::vector<NamedTensor> params);

  std::string family() const override { return std::string(family_name(config_.family)); }
  std::size_t input_side() const override { return config_.input_side; }
  ConfigMap config_map() const override { return config_.to_map(); }
  std::vector<NamedTensor>& parameters() override { return params_; }
  const std::vector<NamedTensor>& parameters() const override { return params_; }

  /// Logits [2].
  Var outputs(std::span<const Var> params, const Var& input) const override;
  Var loss(const Var& outputs, Label label) const override;
  /// Softmax probability of the positive class.
  double positive_score(const Tensor& outputs) const override;

  const BaselineConfig& config() const { return config_; }

 private:
  BaselineConfig config_;
  std::vector<NamedTensor> params_;
};

/// Fresh model with uniform(+-sqrt(6/fan_in)) weights and zero biases.
BaselineModel build_baseline(const BaselineConfig& config, std::uint64_t seed);

/// Builds and trains a baseline; mirrors train_patch_classifier.
std::pair<BaselineModel, TrainingCurve> train_baseline(std::span<const PatchSample> train,
                                                       std::span<const PatchSample> test,
                                                       const BaselineConfig& config,
                                                       const TrainHyper& hyper,
                                                       const EpochCallback& on_epoch = {});

}  // namespace tbscreen
