#ifndef OFFPOLICY_ORACLE_ORACLE_HPP_
#define OFFPOLICY_ORACLE_ORACLE_HPP_

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "offpolicy/estimators/estimators.hpp"
#include "offpolicy/numkit/tape.hpp"
#include "offpolicy/numkit/tensor.hpp"

namespace offpolicy::oracle {

// Largest trajectory count the exact routines will enumerate.
constexpr std::uint64_t kEnumerationBudget = 1'000'000;

// Fixed-horizon sequence MDP over `vocab` actions. The state is the prefix
// of actions taken so far; states are numbered breadth first, so the root is
// 0 and prefix p of length t has index (V^t - 1)/(V - 1) + value(p). Both
// policies are tabular softmaxes with one logit row per state.
struct ToyMDP {
  std::size_t vocab = 3;
  std::size_t horizon = 2;
  std::vector<double> target_logits;     // [num_states x vocab], the parameters theta
  std::vector<double> behaviour_logits;  // same layout, fixed
  std::function<double(std::span<const int>)> terminal_reward;      // full sequence
  std::function<double(std::span<const int>, int)> step_reward;     // optional (prefix, action)
  double gamma = 1.0;

  void validate() const;
  std::size_t num_states() const;
  std::size_t state_index(std::span<const int> prefix) const;
  std::vector<int> prefix_of(std::size_t state) const;
  std::vector<double> target_probs(std::size_t state) const;
  std::vector<double> behaviour_probs(std::size_t state) const;
  // sum_t gamma^t r_t, with the terminal reward added to the last step.
  double trajectory_return(std::span<const int> actions) const;
};

// V^T; throws ContractError beyond kEnumerationBudget.
std::uint64_t num_trajectories(const ToyMDP& mdp);

// Calls fn(actions) for every complete action sequence in lexicographic order.
void for_each_trajectory(const ToyMDP& mdp, const std::function<void(std::span<const int>)>& fn);

// Sequence probability under the target (or behaviour) policy.
double trajectory_probability(const ToyMDP& mdp, std::span<const int> actions, bool behaviour = false);

// sum over trajectories of p(tau) R(tau) grad log p(tau), flattened like
// target_logits.
std::vector<double> exact_policy_gradient(const ToyMDP& mdp);

// J(theta) = sum over trajectories of p(tau) R(tau), differentiable in
// theta [num_states x vocab].
numkit::Tensor expected_return(numkit::Tape& tape, const ToyMDP& mdp, const numkit::Tensor& theta);

struct ValueTables {
  std::vector<double> v;  // per state
  std::vector<double> q;  // [num_states x vocab]
};

ValueTables exact_value_functions(const ToyMDP& mdp);

// Exact D(pi || pi_b) between the two sequence distributions.
double sequence_kl(const ToyMDP& mdp);

// Copy with target logits moved towards the behaviour: (1 - k) theta + k theta_b.
ToyMDP pull_target_towards_behaviour(const ToyMDP& mdp, double k);

// Monte-Carlo study of the off-policy estimator. Each draw samples a
// trajectory from the behaviour and takes minus the gradient of
// off_policy_loss for that single episode (sum reduction, zero baseline), so
// the estimator under test is exactly the production loss.
struct BiasVariance {
  std::size_t n_samples = 0;
  std::vector<double> exact;           // exact_policy_gradient
  std::vector<double> mean;            // MC mean of the estimator
  std::vector<double> standard_error;  // per coordinate
  double bias_norm = 0.0;              // ||mean - exact||
  // Variance of the per-draw scalar W(tau) R(tau), W the sequence ratio product.
  double variance = 0.0;
  double max_product = 0.0;
  std::vector<double> weighted_returns;  // W(tau) R(tau) per draw

  // max_k |mean_k - exact_k| / se_k; 0/0 counts as 0.
  double max_z() const;
};

BiasVariance estimator_bias_variance(const ToyMDP& mdp, const estimators::EstimatorConfig& config,
                                     std::size_t n_samples, std::uint64_t seed);

// Exact Var_b[W(tau) R(tau)] by enumeration.
double exact_weighted_return_variance(const ToyMDP& mdp, const estimators::EstimatorConfig& config);

// Fraction of paired bootstrap resamples in which the sample variance of
// `a` exceeds that of `b`.
double bootstrap_variance_confidence(std::span<const double> a, std::span<const double> b,
                                     std::size_t resamples, std::uint64_t seed);

// Fixtures: a mild vocab-3 horizon-2 pair, a divergent pair whose behaviour
// sits almost deterministically on an action the target rarely takes, and a
// discounted chain with per-step rewards.
ToyMDP fixture_vocab3_horizon2();
ToyMDP fixture_divergent();
ToyMDP fixture_discounted();

// Var_b(pi/b) = sum_x pi(x)^2 / b(x) - 1 over a discrete support.
double ratio_variance(std::span<const double> pi, std::span<const double> b);

struct WexlerReport {
  double d = 0.0;  // D(b1 || pi) - D(b2 || pi)
  double c = 0.0;
  double variance_b1 = 0.0;
  double variance_b2 = 0.0;
  double ratio = 0.0;  // variance_b1 / variance_b2
  double bound = 0.0;  // e^{2d} / c^2
  bool applicable = false;
  bool satisfied = false;
  std::string note;
};

// Exact check of Var_b1 / Var_b2 >= e^{2d}/c^2 on one instance. When the
// precondition d > ln c > 0 fails the report says so and `satisfied` stays false.
WexlerReport wexler_variance_check(std::span<const double> pi, std::span<const double> b1,
                                   std::span<const double> b2, double c);

struct WexlerInstance {
  std::vector<double> pi, b1, b2;
  double c = 0.0;
};

// Four-outcome instance with d > ln c > 0.
WexlerInstance wexler_instance();

void write_report(std::ostream& out, const WexlerReport& report);

}  // namespace offpolicy::oracle

#endif  // OFFPOLICY_ORACLE_ORACLE_HPP_
