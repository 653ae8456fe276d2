#include "offpolicy/numkit/gradcheck.hpp"

#include <cmath>
#include <numeric>

#include "offpolicy/errors.hpp"

namespace offpolicy::numkit {

GradcheckReport gradcheck(const LossFn& loss, std::span<const NamedTensor> leaves, double step,
                          std::size_t max_per_tensor, std::uint64_t seed) {
  for (auto leaf : leaves) leaf.tensor.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    tape.backward(loss(tape));
    for (const auto& leaf : leaves) {
      if (!leaf.tensor.requires_grad()) throw ContractError("gradcheck leaf without grad: " + leaf.name);
      analytic.emplace_back(leaf.tensor.grad().begin(), leaf.tensor.grad().end());
    }
  }

  auto evaluate = [&]() {
    Tape tape(false);
    return loss(tape).item();
  };

  Rng rng(seed);
  GradcheckReport report;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    Tensor t = leaves[p].tensor;
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_per_tensor > 0 && idx.size() > max_per_tensor) {
      for (std::size_t i = 0; i < max_per_tensor; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      }
      idx.resize(max_per_tensor);
    }
    auto values = t.mutable_data();
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate();
      values[i] = saved - step;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / (std::abs(a) + 1e-8);
      ++report.entries_checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_entry = leaves[p].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace offpolicy::numkit
