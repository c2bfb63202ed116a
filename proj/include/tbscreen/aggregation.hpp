#pragma once

// Whole-image decision: a histogram of patch scores per image feeds a
// logistic regressor.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tbscreen/model.hpp"

namespace tbscreen {

struct HistogramFeature {
  std::vector<std::size_t> bins;
  std::size_t total_patches = 0;
  std::vector<double> normalized;  // bins / total_patches
};

/// Bin k collects scores in [k/B, (k+1)/B); the last bin also takes 1.0.
/// With B = 2 this is {negative count, positive count} at threshold 0.5.
HistogramFeature build_histogram(std::span<const double> patch_scores, std::size_t bins = 2);

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
};

/// sigmoid(w . normalized + bias)
double logistic_predict(const LogisticModel& model, const HistogramFeature& feature);

struct LogisticHyper {
  double learning_rate = 0.5;
  std::size_t epochs = 500;
  double l2 = 0.0;
};

struct LogisticTraining {
  LogisticModel model;
  /// Objective before each update, then after the last one (epochs + 1 values).
  std::vector<double> loss_curve;
};

/// Mean negative log likelihood plus l2 * |w|^2 (bias not penalized).
double logistic_objective(const LogisticModel& model, std::span<const HistogramFeature> features,
                          std::span<const Label> labels, double l2);

struct LogisticGradient {
  std::vector<double> weights;
  double bias = 0.0;
};
LogisticGradient logistic_gradient(const LogisticModel& model,
                                   std::span<const HistogramFeature> features,
                                   std::span<const Label> labels, double l2);

/// Full-batch gradient descent from a zero model. Throws ValidationError if
/// only one class is present.
LogisticTraining train_logistic(std::span<const HistogramFeature> features,
                                std::span<const Label> labels, const LogisticHyper& hyper = {});

struct ImagePrediction {
  double probability = 0.0;
  Label truth = Label::negative;
};

struct FullImageMetrics {
  std::size_t true_positive = 0;
  std::size_t false_negative = 0;
  std::size_t true_negative = 0;
  std::size_t false_positive = 0;
  /// Absent when there are no positive (resp. negative) images.
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double accuracy = 0.0;
};

/// Confusion counts at probability >= 0.5. Throws ValidationError if empty.
FullImageMetrics evaluate_full_images(std::span<const ImagePrediction> predictions);

}  // namespace tbscreen
