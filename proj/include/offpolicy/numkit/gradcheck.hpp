#ifndef OFFPOLICY_NUMKIT_GRADCHECK_HPP_
#define OFFPOLICY_NUMKIT_GRADCHECK_HPP_

#include <functional>
#include <span>
#include <string>

#include "offpolicy/numkit/parameters.hpp"
#include "offpolicy/numkit/tape.hpp"

namespace offpolicy::numkit {

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_entry;
};

using LossFn = std::function<Tensor(Tape&)>;

// Compares tape gradients of `loss` against central differences
//   (f(x + h) - f(x - h)) / 2h
// using |analytic - numeric| / (|analytic| + 1e-8). When max_per_tensor > 0
// only that many randomly chosen entries per leaf are perturbed.
GradcheckReport gradcheck(const LossFn& loss, std::span<const NamedTensor> leaves,
                          double step = 1e-5, std::size_t max_per_tensor = 0,
                          std::uint64_t seed = 0);

}  // namespace offpolicy::numkit

#endif  // OFFPOLICY_NUMKIT_GRADCHECK_HPP_
