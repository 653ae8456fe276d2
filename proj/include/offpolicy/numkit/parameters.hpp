#ifndef OFFPOLICY_NUMKIT_PARAMETERS_HPP_
#define OFFPOLICY_NUMKIT_PARAMETERS_HPP_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "offpolicy/numkit/tensor.hpp"
#include "offpolicy/random.hpp"

namespace offpolicy::numkit {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered collection of trainable leaves. Order is insertion order and is
// what checkpoints and the optimizer iterate over.
class ParameterSet {
 public:
  Tensor add(std::string name, Tensor value);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t num_values() const;

  void zero_grad();
  double grad_norm() const;
  void scale_grads(double factor);

  // Copies every value into a structurally identical set.
  void copy_values_from(const ParameterSet& other);
  bool values_equal(const ParameterSet& other) const;
  // All values concatenated in entry order.
  std::vector<double> flat_values() const;

 private:
  std::vector<NamedTensor> entries_;
};

// Glorot-uniform init for a [rows x cols] weight.
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Rescales grads so their global L2 norm is at most max_norm. Returns the
// norm measured before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);
  void step();
  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParameterSet& params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace offpolicy::numkit

#endif  // OFFPOLICY_NUMKIT_PARAMETERS_HPP_
