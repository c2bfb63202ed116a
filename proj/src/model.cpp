#include "tbscreen/model.hpp"

#include <cmath>
#include <numeric>

#include "tbscreen/error.hpp"
#include "tbscreen/optim.hpp"
#include "tbscreen/parallel.hpp"
#include "tbscreen/rng.hpp"

namespace tbscreen {

std::string_view label_name(Label label) {
  return label == Label::positive ? "positive" : "negative";
}

Label parse_label(std::string_view text) {
  if (text == "positive" || text == "1") return Label::positive;
  if (text == "negative" || text == "0") return Label::negative;
  throw ValidationError("unknown label '" + std::string(text) + "'");
}

double PatchModel::score(const Tensor& input) const {
  std::vector<Var> params;
  params.reserve(parameters().size());
  for (const auto& p : parameters()) params.push_back(constant(p.value));
  return positive_score(outputs(params, constant(input)).value());
}

std::size_t PatchModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.size();
  return n;
}

std::vector<double> score_all(const PatchModel& model, std::span<const Tensor> inputs) {
  std::vector<double> scores(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) { scores[i] = model.score(inputs[i]); });
  return scores;
}

double accuracy(const PatchModel& model, std::span<const PatchSample> samples) {
  if (samples.empty()) throw ValidationError("accuracy of an empty sample set");
  std::vector<Tensor> inputs;
  inputs.reserve(samples.size());
  for (const auto& s : samples) inputs.push_back(s.input);
  const auto scores = score_all(model, inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (label_for_score(scores[i]) == samples[i].label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace {

struct SampleResult {
  double loss = 0.0;
  bool correct = false;
  std::vector<std::vector<double>> grads;
};

SampleResult sample_gradient(const PatchModel& model, const PatchSample& sample) {
  const auto& params = model.parameters();
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(parameter(p.value));
  const Var out = model.outputs(vars, constant(sample.input));
  const Var loss = model.loss(out, sample.label);
  backward(loss);

  SampleResult r;
  r.loss = loss.value().item();
  r.correct = label_for_score(model.positive_score(out.value())) == sample.label;
  r.grads.reserve(vars.size());
  for (const auto& v : vars) {
    if (v.has_grad())
      r.grads.emplace_back(v.grad().begin(), v.grad().end());
    else
      r.grads.emplace_back(v.value().size(), 0.0);
  }
  return r;
}

}  // namespace

Tensor dihedral(const Tensor& input, unsigned k) {
  if (input.rank() != 3 || input.dim(1) != input.dim(2))
    throw DimensionError("dihedral expects [C, n, n], got " + shape_string(input.shape()));
  const std::size_t c = input.dim(0), n = input.dim(1);
  Tensor out(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        std::size_t sx = k & 1 ? n - 1 - x : x, sy = k & 2 ? n - 1 - y : y;
        if (k & 4) std::swap(sx, sy);
        out.at({ch, y, x}) = input.at({ch, sy, sx});
      }
  return out;
}

TrainingCurve train_classifier(PatchModel& model, std::span<const PatchSample> train,
                               std::span<const PatchSample> test, const TrainHyper& hyper,
                               const EpochCallback& on_epoch) {
  if (train.empty()) throw ValidationError("training set is empty");
  bool has_pos = false, has_neg = false;
  for (const auto& s : train) (s.label == Label::positive ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw ValidationError("training set must contain both classes");
  if (hyper.batch_size == 0) throw ParameterError("batch size must be >= 1");
  if (hyper.learning_rate < 0.0) throw ParameterError("learning rate must be >= 0");

  auto& params = model.parameters();
  std::vector<Tensor*> param_ptrs;
  for (auto& p : params) param_ptrs.push_back(&p.value);
  MomentumSgd optimizer(hyper.learning_rate, hyper.momentum);

  std::vector<std::size_t> order(train.size());
  std::vector<double> sample_loss(train.size());
  std::vector<char> sample_correct(train.size());

  TrainingCurve curve;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(hyper.seed, epoch));
    rng.shuffle(order);
    std::vector<unsigned> transform(order.size(), 0);
    if (hyper.augment)
      for (auto& t : transform) t = static_cast<unsigned>(rng.integer(0, 7));

    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, order.size() - start);
      std::vector<SampleResult> results(count);
      parallel_for(count, [&](std::size_t i) {
        const auto& sample = train[order[start + i]];
        const unsigned t = transform[start + i];
        results[i] = t == 0 ? sample_gradient(model, sample)
                            : sample_gradient(model, {dihedral(sample.input, t), sample.label});
      });

      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto g = params[k].value.ensure_grad();
        std::fill(g.begin(), g.end(), 0.0);
        for (const auto& r : results)
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += r.grads[k][i];
        for (auto& v : g) v *= inv;
      }
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(results[i].loss))
          throw NumericError("non-finite training loss in epoch " + std::to_string(epoch));
        sample_loss[order[start + i]] = results[i].loss;
        sample_correct[order[start + i]] = results[i].correct;
      }
      optimizer.step(param_ptrs);
    }

    EpochStats stats;
    stats.epoch = epoch;
    const double n = static_cast<double>(train.size());
    stats.loss = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) / n;
    stats.train_accuracy =
        static_cast<double>(std::count(sample_correct.begin(), sample_correct.end(), 1)) / n;
    if (!test.empty()) stats.test_accuracy = accuracy(model, test);
    curve.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  for (auto& p : params) p.value.clear_grad();
  return curve;
}

}  // namespace tbscreen
