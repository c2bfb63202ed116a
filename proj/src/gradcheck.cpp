#include "tbscreen/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tbscreen/error.hpp"
#include "tbscreen/rng.hpp"

namespace tbscreen {

namespace {

double projected(const Tensor& out, const Tensor& projection) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += out[i] * projection[i];
  return total;
}

double evaluate(const GraphFn& fn, const std::vector<Tensor>& point, const Tensor& projection) {
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const auto& t : point) vars.push_back(constant(t));
  return projected(fn(vars).value(), projection);
}

}  // namespace

double grad_check(const GraphFn& fn, const std::vector<Tensor>& point, double epsilon,
                  std::uint64_t projection_seed) {
  if (epsilon <= 0.0) throw ParameterError("grad_check: epsilon must be positive");

  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const auto& t : point) vars.push_back(parameter(t));
  const Var out = fn(vars);

  Tensor projection(out.shape(), 1.0);
  if (out.value().size() > 1) {
    Rng rng(projection_seed);
    for (auto& v : projection.data()) v = rng.uniform(-1.0, 1.0);
  }
  backward(out, projection);

  double worst = 0.0;
  std::vector<Tensor> probe = point;
  for (std::size_t k = 0; k < point.size(); ++k) {
    std::vector<double> analytic(point[k].size(), 0.0);
    if (vars[k].has_grad()) std::ranges::copy(vars[k].grad(), analytic.begin());
    for (std::size_t i = 0; i < point[k].size(); ++i) {
      const double x0 = point[k][i];
      probe[k][i] = x0 + epsilon;
      const double up = evaluate(fn, probe, projection);
      probe[k][i] = x0 - epsilon;
      const double down = evaluate(fn, probe, projection);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace tbscreen
