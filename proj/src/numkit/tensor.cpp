#include "offpolicy/numkit/tensor.hpp"

#include <cmath>
#include <sstream>

#include "offpolicy/errors.hpp"

namespace offpolicy::numkit {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : s_(std::make_shared<TensorStorage>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor shape has a zero extent: " + shape_string(shape));
  }
  if (shape.size() > 2) throw DimensionError("tensor rank > 2 unsupported: " + shape_string(shape));
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
  s_->requires_grad = requires_grad;
  if (requires_grad) s_->grad.assign(s_->data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
  return s_->shape.size() == 2 ? s_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  return s_->shape.empty() ? 1 : s_->shape.back();
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return s_->data[0];
}

void Tensor::zero_grad() {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(s_->shape, s_->data, requires_grad);
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace offpolicy::numkit
