#ifndef OFFPOLICY_ORACLE_DIAGNOSTICS_HPP_
#define OFFPOLICY_ORACLE_DIAGNOSTICS_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace offpolicy::oracle {

struct GradcheckCase {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  std::string worst_entry;
};

// Central-difference checks of every differentiable op, the layers built on
// them and both policies' sequence log-probabilities, `instances` random
// draws each. Losses are random projections of the op output.
std::vector<GradcheckCase> gradcheck_suite(std::size_t instances = 20, std::uint64_t seed = 1);

// Header name,instances,max_rel_error,worst_entry.
void write_gradcheck_csv(std::ostream& out, const std::vector<GradcheckCase>& cases);

struct RisBoundReport {
  std::size_t samples = 0;
  std::size_t violations = 0;  // ratio > 1/lambda + tolerance
  double max_excess = 0.0;     // max over samples of ratio - 1/lambda
};

// Random (pi, pi_b, lambda) triples with lambda in (0, 1]. Half the
// probabilities are uniform on (0, 1], half log-uniform down to 1e-12.
RisBoundReport ris_bound_check(std::size_t samples, std::uint64_t seed, double tolerance = 1e-12);

}  // namespace offpolicy::oracle

#endif  // OFFPOLICY_ORACLE_DIAGNOSTICS_HPP_
