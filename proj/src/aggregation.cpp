#include "tbscreen/aggregation.hpp"

#include <cmath>

#include "tbscreen/error.hpp"

namespace tbscreen {

HistogramFeature build_histogram(std::span<const double> patch_scores, std::size_t bins) {
  if (bins < 2) throw ParameterError("histogram needs at least 2 bins");
  if (patch_scores.empty()) throw ValidationError("histogram of an empty score list");
  HistogramFeature h;
  h.bins.assign(bins, 0);
  for (double s : patch_scores) {
    if (!(s >= 0.0 && s <= 1.0))
      throw ValidationError("patch score outside [0,1]: " + std::to_string(s));
    const auto k = static_cast<std::size_t>(std::floor(s * static_cast<double>(bins)));
    ++h.bins[std::min(k, bins - 1)];
  }
  h.total_patches = patch_scores.size();
  h.normalized.resize(bins);
  for (std::size_t k = 0; k < bins; ++k)
    h.normalized[k] = static_cast<double>(h.bins[k]) / static_cast<double>(h.total_patches);
  return h;
}

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double linear(const LogisticModel& model, const HistogramFeature& feature) {
  if (feature.normalized.size() != model.weights.size())
    throw DimensionError("logistic model has " + std::to_string(model.weights.size()) +
                         " weights, feature has " + std::to_string(feature.normalized.size()) +
                         " bins");
  double z = model.bias;
  for (std::size_t k = 0; k < model.weights.size(); ++k) z += model.weights[k] * feature.normalized[k];
  return z;
}

void check_examples(std::span<const HistogramFeature> features, std::span<const Label> labels) {
  if (features.size() != labels.size())
    throw DimensionError("feature and label counts differ");
  if (features.empty()) throw ValidationError("no training examples");
}

}  // namespace

double logistic_predict(const LogisticModel& model, const HistogramFeature& feature) {
  return sigmoid(linear(model, feature));
}

double logistic_objective(const LogisticModel& model, std::span<const HistogramFeature> features,
                          std::span<const Label> labels, double l2) {
  check_examples(features, labels);
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double z = linear(model, features[i]);
    const double y = labels[i] == Label::positive ? 1.0 : 0.0;
    total += softplus(z) - y * z;
  }
  double penalty = 0.0;
  for (double w : model.weights) penalty += w * w;
  return total / static_cast<double>(features.size()) + l2 * penalty;
}

LogisticGradient logistic_gradient(const LogisticModel& model,
                                   std::span<const HistogramFeature> features,
                                   std::span<const Label> labels, double l2) {
  check_examples(features, labels);
  LogisticGradient g{std::vector<double>(model.weights.size(), 0.0), 0.0};
  const double inv = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double y = labels[i] == Label::positive ? 1.0 : 0.0;
    const double r = (sigmoid(linear(model, features[i])) - y) * inv;
    for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] += r * features[i].normalized[k];
    g.bias += r;
  }
  for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] += 2.0 * l2 * model.weights[k];
  return g;
}

LogisticTraining train_logistic(std::span<const HistogramFeature> features,
                                std::span<const Label> labels, const LogisticHyper& hyper) {
  check_examples(features, labels);
  bool has_pos = false, has_neg = false;
  for (auto l : labels) (l == Label::positive ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw ValidationError("logistic training needs both classes");
  const std::size_t bins = features.front().normalized.size();
  for (const auto& f : features)
    if (f.normalized.size() != bins) throw DimensionError("features have differing bin counts");

  LogisticTraining out;
  out.model.weights.assign(bins, 0.0);
  out.loss_curve.reserve(hyper.epochs + 1);
  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    out.loss_curve.push_back(logistic_objective(out.model, features, labels, hyper.l2));
    const auto g = logistic_gradient(out.model, features, labels, hyper.l2);
    for (std::size_t k = 0; k < bins; ++k) out.model.weights[k] -= hyper.learning_rate * g.weights[k];
    out.model.bias -= hyper.learning_rate * g.bias;
  }
  out.loss_curve.push_back(logistic_objective(out.model, features, labels, hyper.l2));
  if (!std::isfinite(out.loss_curve.back())) throw NumericError("logistic training diverged");
  return out;
}

FullImageMetrics evaluate_full_images(std::span<const ImagePrediction> predictions) {
  if (predictions.empty()) throw ValidationError("no full-image predictions to evaluate");
  FullImageMetrics m;
  for (const auto& p : predictions) {
    const bool predicted_positive = p.probability >= kDecisionThreshold;
    if (p.truth == Label::positive)
      ++(predicted_positive ? m.true_positive : m.false_negative);
    else
      ++(predicted_positive ? m.false_positive : m.true_negative);
  }
  const std::size_t pos = m.true_positive + m.false_negative;
  const std::size_t neg = m.true_negative + m.false_positive;
  if (pos) m.sensitivity = static_cast<double>(m.true_positive) / static_cast<double>(pos);
  if (neg) m.specificity = static_cast<double>(m.true_negative) / static_cast<double>(neg);
  m.accuracy = static_cast<double>(m.true_positive + m.true_negative) /
               static_cast<double>(predictions.size());
  return m;
}

}  // namespace tbscreen
