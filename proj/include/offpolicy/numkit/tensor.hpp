#ifndef OFFPOLICY_NUMKIT_TENSOR_HPP_
#define OFFPOLICY_NUMKIT_TENSOR_HPP_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace offpolicy::numkit {

using Shape = std::vector<std::size_t>;

class Tape;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  // Set for tensors produced by a recorded op; leaves keep nullptr.
  const Tape* producer = nullptr;
};

// Shared handle to a dense row-major array of doubles with an optional
// gradient buffer. Copies alias the same storage. Ops only handle rank <= 2;
// a rank-1 tensor of length n behaves as a 1 x n row.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return s_->data; }
  std::span<double> mutable_data() { return s_->data; }
  double operator[](std::size_t i) const { return s_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return s_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  std::span<double> mutable_grad() { return s_->grad; }
  void zero_grad();

  // Deep copy without autodiff history.
  Tensor clone(bool requires_grad = false) const;

  TensorStorage* storage() const { return s_.get(); }
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<TensorStorage> s) : s_(std::move(s)) {}
  std::shared_ptr<TensorStorage> s_;
};

bool all_finite(std::span<const double> values);

}  // namespace offpolicy::numkit

#endif  // OFFPOLICY_NUMKIT_TENSOR_HPP_
