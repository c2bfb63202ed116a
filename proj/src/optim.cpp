#include "tbscreen/optim.hpp"

#include "tbscreen/error.hpp"

namespace tbscreen {

namespace {
void require_grads(std::span<Tensor* const> params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i]->has_grad())
      throw StateError("optimizer step: parameter " + std::to_string(i) + " has no gradient");
}
}  // namespace

void sgd_step(std::span<Tensor* const> params, double learning_rate) {
  require_grads(params);
  for (Tensor* p : params) {
    auto data = p->data();
    auto grad = p->grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= learning_rate * grad[i];
    p->zero_grad();
  }
}

void MomentumSgd::step(std::span<Tensor* const> params) {
  require_grads(params);
  if (velocity_.empty()) {
    for (Tensor* p : params) velocity_.emplace_back(p->size(), 0.0);
  } else if (velocity_.size() != params.size()) {
    throw StateError("optimizer step: parameter list changed between steps");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k]->data();
    auto grad = params[k]->grad();
    auto& vel = velocity_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      vel[i] = momentum_ * vel[i] + grad[i];
      data[i] -= learning_rate_ * vel[i];
    }
    params[k]->zero_grad();
  }
}

}  // namespace tbscreen
