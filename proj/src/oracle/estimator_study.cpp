#include <cmath>

#include "offpolicy/errors.hpp"
#include "offpolicy/numkit/ops.hpp"
#include "offpolicy/oracle/oracle.hpp"
#include "offpolicy/policies/policy.hpp"
#include "offpolicy/random.hpp"

namespace offpolicy::oracle {

using numkit::Tape;
using numkit::Tensor;

namespace {

estimators::EstimatorConfig single_episode(estimators::EstimatorConfig config) {
  config.reduction = estimators::StepReduction::kSum;
  config.validate();
  return config;
}

std::vector<double> log_probs_along(const ToyMDP& mdp, std::span<const int> actions, bool behaviour) {
  std::vector<double> out(actions.size());
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const std::size_t s = mdp.state_index(actions.first(t));
    const auto& logits = behaviour ? mdp.behaviour_logits : mdp.target_logits;
    // Same arithmetic as the tape's log_softmax, so equal policies give equal log-probs.
    out[t] = numkit::log_softmax_values(std::span(logits).subspan(s * mdp.vocab, mdp.vocab))[actions[t]];
  }
  return out;
}

double sample_variance(std::span<const double> v, std::span<const std::size_t> idx) {
  double mean = 0.0;
  for (auto i : idx) mean += v[i];
  mean /= static_cast<double>(idx.size());
  double sq = 0.0;
  for (auto i : idx) sq += (v[i] - mean) * (v[i] - mean);
  return sq / static_cast<double>(idx.size());
}

}  // namespace

double BiasVariance::max_z() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) {
    const double diff = std::abs(mean[k] - exact[k]);
    if (diff == 0.0) continue;
    worst = std::max(worst, standard_error[k] > 0.0 ? diff / standard_error[k] : INFINITY);
  }
  return worst;
}

BiasVariance estimator_bias_variance(const ToyMDP& mdp, const estimators::EstimatorConfig& est,
                                     std::size_t n_samples, std::uint64_t seed) {
  mdp.validate();
  if (n_samples < 10'000) throw ContractError("estimator study needs at least 10^4 samples");
  const auto config = single_episode(est);
  const std::size_t v = mdp.vocab;
  BiasVariance out;
  out.n_samples = n_samples;
  out.exact = exact_policy_gradient(mdp);
  const std::size_t dim = out.exact.size();

  // Welford accumulators per coordinate.
  std::vector<double> mean(dim, 0.0), m2(dim, 0.0);
  Tensor theta({mdp.num_states(), v}, mdp.target_logits, true);
  Rng rng(seed);
  std::vector<int> actions(mdp.horizon), states(mdp.horizon);
  out.weighted_returns.reserve(n_samples);
  for (std::size_t n = 0; n < n_samples; ++n) {
    for (std::size_t t = 0; t < mdp.horizon; ++t) {
      const std::size_t s = mdp.state_index(std::span(actions).first(t));
      states[t] = static_cast<int>(s);
      actions[t] = policies::sample_categorical(mdp.behaviour_probs(s), rng.uniform());
    }
    const double reward = mdp.trajectory_return(actions);
    Tape tape;
    const Tensor log_pi = numkit::pick(tape, numkit::log_softmax(tape, numkit::embedding(tape, theta, states)), actions);
    const estimators::OffPolicyEpisode episode{log_pi, log_probs_along(mdp, actions, true), reward, 0.0};
    const auto result = estimators::off_policy_loss(tape, std::span(&episode, 1), config);
    theta.zero_grad();
    tape.backward(result.loss);
    const auto grad = theta.grad();
    const double count = static_cast<double>(n + 1);
    for (std::size_t k = 0; k < dim; ++k) {
      const double g = -grad[k];
      const double delta = g - mean[k];
      mean[k] += delta / count;
      m2[k] += delta * (g - mean[k]);
    }
    const double product = result.products.front();
    out.max_product = std::max(out.max_product, product);
    out.weighted_returns.push_back(product * reward);
  }
  out.mean = mean;
  out.standard_error.resize(dim);
  double bias_sq = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double var = m2[k] / static_cast<double>(n_samples - 1);
    out.standard_error[k] = std::sqrt(var / static_cast<double>(n_samples));
    bias_sq += (mean[k] - out.exact[k]) * (mean[k] - out.exact[k]);
  }
  out.bias_norm = std::sqrt(bias_sq);
  std::vector<std::size_t> all(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) all[i] = i;
  out.variance = sample_variance(out.weighted_returns, all);
  return out;
}

double exact_weighted_return_variance(const ToyMDP& mdp, const estimators::EstimatorConfig& est) {
  mdp.validate();
  const auto config = single_episode(est);
  double first = 0.0, second = 0.0;
  for_each_trajectory(mdp, [&](std::span<const int> actions) {
    const double b = trajectory_probability(mdp, actions, true);
    const auto lp = log_probs_along(mdp, actions, false);
    const auto lpb = log_probs_along(mdp, actions, true);
    const double x = estimators::step_ratios(lp, lpb, config).product * mdp.trajectory_return(actions);
    first += b * x;
    second += b * x * x;
  });
  return second - first * first;
}

double bootstrap_variance_confidence(std::span<const double> a, std::span<const double> b,
                                     std::size_t resamples, std::uint64_t seed) {
  if (a.size() != b.size() || a.empty()) throw ContractError("bootstrap needs paired non-empty samples");
  if (resamples == 0) throw ContractError("bootstrap needs at least one resample");
  Rng rng(seed);
  std::vector<std::size_t> idx(a.size());
  std::size_t wins = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(a.size()));
    if (sample_variance(a, idx) > sample_variance(b, idx)) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(resamples);
}

}  // namespace offpolicy::oracle
