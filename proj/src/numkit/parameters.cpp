#include "offpolicy/numkit/parameters.hpp"

#include <cmath>
#include <cstring>

#include "offpolicy/errors.hpp"

namespace offpolicy::numkit {

Tensor ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  if (!value.requires_grad()) value = value.clone(true);
  entries_.push_back({std::move(name), value});
  return value;
}

const Tensor& ParameterSet::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("unknown parameter: " + std::string(name));
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParameterSet::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

double ParameterSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& e : entries_) {
    for (double g : e.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void ParameterSet::scale_grads(double factor) {
  for (auto& e : entries_) {
    for (double& g : e.tensor.mutable_grad()) g *= factor;
  }
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.entries_.size() != entries_.size()) {
    throw DimensionError("parameter sets differ in entry count");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other.entries_[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw DimensionError("parameter mismatch: " + dst.name + shape_string(dst.tensor.shape()) +
                           " vs " + src.name + shape_string(src.tensor.shape()));
    }
    std::copy(src.tensor.data().begin(), src.tensor.data().end(),
              dst.tensor.mutable_data().begin());
  }
}

bool ParameterSet::values_equal(const ParameterSet& other) const {
  if (other.entries_.size() != entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i].tensor;
    const auto& b = other.entries_[i].tensor;
    if (entries_[i].name != other.entries_[i].name || a.shape() != b.shape()) return false;
    if (std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

std::vector<double> ParameterSet::flat_values() const {
  std::vector<double> out;
  out.reserve(num_values());
  for (const auto& e : entries_) out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> data(rows * cols);
  for (double& v : data) v = rng.uniform(-limit, limit);
  return Tensor({rows, cols}, std::move(data), true);
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  const double norm = params.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) params.scale_grads(max_norm / norm);
  return norm;
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(params), config_(config) {
  if (!(config.lr > 0.0)) throw ValidationError("Adam learning rate must be positive");
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.tensor.size(), 0.0);
    v_.emplace_back(e.tensor.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto& entries = params_.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor t = entries[p].tensor;
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace offpolicy::numkit
