#include "cpgnn/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "cpgnn/error.hpp"

namespace cpgnn {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ContractViolation("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                            shape_str(shape_));
  }
}

std::span<Real> Tensor::row(std::size_t r) {
  const std::size_t width = shape_.at(0) == 0 ? 0 : numel() / shape_[0];
  return {data_.data() + r * width, width};
}

std::span<const Real> Tensor::row(std::size_t r) const {
  const std::size_t width = shape_.at(0) == 0 ? 0 : numel() / shape_[0];
  return {data_.data() + r * width, width};
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw ContractViolation("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

}  // namespace cpgnn
