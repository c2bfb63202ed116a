#pragma once

#include <span>
#include <vector>

#include "tbscreen/tensor.hpp"

namespace tbscreen {

/// p <- p - lr * grad for every tensor, then zeroes the gradients. Throws
/// StateError if any tensor has no gradient.
void sgd_step(std::span<Tensor* const> params, double learning_rate);

/// SGD with classical momentum: v <- mu*v + grad; p <- p - lr*v.
class MomentumSgd {
 public:
  MomentumSgd(double learning_rate, double momentum)
      : learning_rate_(learning_rate), momentum_(momentum) {}

  void step(std::span<Tensor* const> params);

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }

 private:
  double learning_rate_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace tbscreen
