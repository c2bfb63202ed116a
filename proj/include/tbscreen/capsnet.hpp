#pragma once

// Capsule-network patch classifier: two 9x9 convolutions (the second one
// produces the primary capsules), squash, and two class capsules connected to
// the primary capsules by routing-by-agreement. Capsule lengths are the class
// scores.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tbscreen/autograd.hpp"
#include "tbscreen/model.hpp"

namespace tbscreen {

struct CapsNetConfig {
  std::size_t input_side = 64;
  std::size_t conv1_channels = 16;
  std::size_t conv1_stride = 2;
  std::size_t primary_caps_channels = 8;
  std::size_t primary_caps_dim = 8;
  std::size_t primary_caps_stride = 2;
  std::size_t class_caps_count = 2;
  std::size_t class_caps_dim = 16;
  std::size_t routing_iters = 3;
  std::size_t kernel_side = 9;
  MarginLossParams margin;

  /// Throws ConfigError on a fixed-field violation or an empty capsule grid.
  void validate() const;
  std::size_t conv1_side() const;
  std::size_t grid_side() const;
  /// grid_side^2 * primary_caps_channels
  std::size_t primary_count() const;

  ConfigMap to_map() const;
  static CapsNetConfig from_map(const ConfigMap& map);
};

struct CapsNetParams {
  Tensor conv1_kernels;    // [conv1_channels, 1, 9, 9]
  Tensor conv1_bias;       // [conv1_channels]
  Tensor primary_kernels;  // [caps_channels * caps_dim, conv1_channels, 9, 9]
  Tensor primary_bias;     // [caps_channels * caps_dim]
  Tensor transform;        // [N_primary, classes, class_dim, caps_dim]
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
CapsNetParams init_params(const CapsNetConfig& config, std::uint64_t seed);

struct RoutingState {
  Tensor logits_b;        // [N_primary, classes]
  Tensor coefficients_c;  // [N_primary, classes]
  Tensor class_caps_v;    // [classes, class_dim]
  /// Coupling coefficients used in each iteration, in order.
  std::vector<Tensor> coefficient_history;
};

/// Routing result inside a graph; gradients flow through every iteration.
struct RoutingGraph {
  Var v;
  Var logits_b;
  Var coefficients_c;
  std::vector<Tensor> coefficient_history;
};

/// Routing-by-agreement over predictions [N, classes, dim]. Coefficients are
/// a softmax over classes for each primary capsule. Throws ParameterError if
/// iters < 1.
RoutingGraph route(const Var& predictions, std::size_t iters);
RoutingState dynamic_routing(const Tensor& predictions, std::size_t iters);

struct CapsNetOutput {
  Tensor class_lengths;  // [classes]
  RoutingState state;
};

/// Runs a patch [1, input_side, input_side] through the network.
CapsNetOutput forward(const CapsNetConfig& config, const CapsNetParams& params,
                      const Tensor& patch);

class CapsNetModel final : public PatchModel {
 public:
  CapsNetModel(CapsNetConfig config, CapsNetParams params);
  CapsNetModel(CapsNetConfig config, std::vector<NamedTensor> params);

  static constexpr const char* kFamily = "capsnet";

  std::string family() const override { return kFamily; }
  std::size_t input_side() const override { return config_.input_side; }
  ConfigMap config_map() const override { return config_.to_map(); }
  std::vector<NamedTensor>& parameters() override { return params_; }
  const std::vector<NamedTensor>& parameters() const override { return params_; }

  Var outputs(std::span<const Var> params, const Var& input) const override;
  Var loss(const Var& outputs, Label label) const override;
  double positive_score(const Tensor& outputs) const override;

  const CapsNetConfig& config() const { return config_; }
  CapsNetParams params() const;

 private:
  CapsNetConfig config_;
  std::vector<NamedTensor> params_;
};

struct PatchPrediction {
  Label label;
  double score;
};

/// Labels a pair of class capsule lengths by the positive length.
PatchPrediction decide(const Tensor& class_lengths);
PatchPrediction predict_patch(const CapsNetModel& model, const Tensor& patch);

std::pair<CapsNetModel, TrainingCurve> train_patch_classifier(
    std::span<const PatchSample> train, std::span<const PatchSample> test,
    const CapsNetConfig& config, const TrainHyper& hyper, const EpochCallback& on_epoch = {});

}  // namespace tbscreen
