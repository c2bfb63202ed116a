#include "tbscreen/tensor.hpp"

#include <cmath>
#include <numeric>

#include "tbscreen/error.hpp"

namespace tbscreen {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_size(shape_) != data_.size())
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
}

namespace {
std::size_t flat_index(const Shape& shape, std::initializer_list<std::size_t> index) {
  if (index.size() != shape.size())
    throw DimensionError("index rank does not match tensor rank " + shape_string(shape));
  std::size_t flat = 0, axis = 0;
  for (auto i : index) {
    if (i >= shape[axis]) throw DimensionError("index out of range for " + shape_string(shape));
    flat = flat * shape[axis] + i;
    ++axis;
  }
  return flat;
}
}  // namespace

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(shape_, index)];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(shape_, index)];
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() needs a one-element tensor, got " + shape_string(shape_));
  return data_[0];
}

std::span<double> Tensor::grad() {
  if (!grad_) throw StateError("tensor has no gradient");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw StateError("tensor has no gradient");
  return *grad_;
}

std::span<double> Tensor::ensure_grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0);
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace tbscreen
