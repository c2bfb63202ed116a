#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tbscreen/autograd.hpp"

namespace tbscreen {

enum class Label : int { negative = 0, positive = 1 };

std::string_view label_name(Label label);
Label parse_label(std::string_view text);

/// Patch scores at or above this are labeled positive (ties go positive).
inline constexpr double kDecisionThreshold = 0.5;

inline Label label_for_score(double score) {
  return score >= kDecisionThreshold ? Label::positive : Label::negative;
}

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Model input [1, side, side] with its class.
struct PatchSample {
  Tensor input;
  Label label;
};

/// Flat key=value view of an architecture config, used by checkpoints.
using ConfigMap = std::map<std::string, std::string>;

/// Two-class patch classifier built on the autograd ops. Implementations are
/// immutable during inference and may be shared across threads.
class PatchModel {
 public:
  virtual ~PatchModel() = default;

  virtual std::string family() const = 0;
  virtual std::size_t input_side() const = 0;
  virtual ConfigMap config_map() const = 0;

  virtual std::vector<NamedTensor>& parameters() = 0;
  virtual const std::vector<NamedTensor>& parameters() const = 0;

  /// Class outputs [2] for one input; `params` follow parameters() order.
  virtual Var outputs(std::span<const Var> params, const Var& input) const = 0;
  /// Scalar training loss from class outputs.
  virtual Var loss(const Var& outputs, Label label) const = 0;
  /// Positive-class score in [0, 1] from class outputs.
  virtual double positive_score(const Tensor& outputs) const = 0;

  /// Positive-class score of one input, without building gradients.
  double score(const Tensor& input) const;
  std::size_t parameter_count() const;
};

struct TrainHyper {
  double learning_rate = 0.005;
  double momentum = 0.9;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  /// Feed each training sample through a random flip/transpose each epoch.
  bool augment = false;
};

/// One of the 8 symmetries of the square applied to [C, n, n]: bit 0 flips
/// x, bit 1 flips y, bit 2 transposes. k = 0 is the identity.
Tensor dihedral(const Tensor& input, unsigned k);

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

struct TrainingCurve {
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch SGD with momentum on the model's loss. Batches come from a seeded
/// per-epoch shuffle; per-sample gradients are summed in sample order and
/// divided by the batch size, so the result does not depend on the worker
/// count. Epoch loss and training accuracy come from the forward passes made
/// during the epoch.
///
/// Throws ValidationError if `train` is empty or holds a single class, and
/// NumericError if a loss becomes non-finite.
TrainingCurve train_classifier(PatchModel& model, std::span<const PatchSample> train,
                               std::span<const PatchSample> test, const TrainHyper& hyper,
                               const EpochCallback& on_epoch = {});

/// Positive scores of many inputs, computed in parallel.
std::vector<double> score_all(const PatchModel& model, std::span<const Tensor> inputs);
double accuracy(const PatchModel& model, std::span<const PatchSample> samples);

}  // namespace tbscreen
