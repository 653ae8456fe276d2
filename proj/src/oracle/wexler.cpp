#include <cmath>
#include <limits>

#include "offpolicy/errors.hpp"
#include "offpolicy/oracle/oracle.hpp"

namespace offpolicy::oracle {

double ratio_variance(std::span<const double> pi, std::span<const double> b) {
  if (pi.size() != b.size() || pi.empty()) throw ContractError("ratio_variance needs two distributions on one support");
  double second = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!(b[i] > 0.0)) throw ContractError("behaviour probabilities must be positive");
    second += pi[i] * pi[i] / b[i];
  }
  return std::max(0.0, second - 1.0);
}

WexlerReport wexler_variance_check(std::span<const double> pi, std::span<const double> b1,
                                   std::span<const double> b2, double c) {
  WexlerReport r;
  r.c = c;
  r.d = estimators::exact_state_kl(b1, pi) - estimators::exact_state_kl(b2, pi);
  r.variance_b1 = ratio_variance(pi, b1);
  r.variance_b2 = ratio_variance(pi, b2);
  r.bound = std::exp(2.0 * r.d) / (c * c);
  if (r.variance_b2 > 0.0) {
    r.ratio = r.variance_b1 / r.variance_b2;
  } else {
    r.ratio = r.variance_b1 > 0.0 ? std::numeric_limits<double>::infinity() : std::nan("");
  }
  const double log_c = std::log(c);
  r.applicable = c > 0.0 && log_c > 0.0 && r.d > log_c;
  if (!r.applicable) {
    r.note = "not applicable: precondition d > ln c > 0 fails";
    return r;
  }
  r.satisfied = r.ratio >= r.bound;
  r.note = r.satisfied ? "bound holds" : "bound violated";
  return r;
}

WexlerInstance wexler_instance() {
  return {{0.4, 0.3, 0.2, 0.1}, {0.1, 0.2, 0.3, 0.4}, {0.35, 0.3, 0.2, 0.15}, 1.1};
}

void write_report(std::ostream& out, const WexlerReport& r) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "d=" << r.d << '\n'
      << "c=" << r.c << '\n'
      << "variance_b1=" << r.variance_b1 << '\n'
      << "variance_b2=" << r.variance_b2 << '\n'
      << "ratio=" << r.ratio << '\n'
      << "bound=" << r.bound << '\n'
      << "applicable=" << (r.applicable ? "true" : "false") << '\n'
      << "satisfied=" << (r.satisfied ? "true" : "false") << '\n'
      << "note=" << r.note << '\n';
  out.precision(old);
}

}  // namespace offpolicy::oracle
