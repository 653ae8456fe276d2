#ifndef OFFPOLICY_ESTIMATORS_ESTIMATORS_HPP_
#define OFFPOLICY_ESTIMATORS_ESTIMATORS_HPP_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "offpolicy/numkit/tape.hpp"

namespace offpolicy::estimators {

enum class RatioMode { kIS, kRIS, kTRIS };
enum class ClampMode { kLower, kUpper, kBoth };
// How per-step terms of one episode are combined before averaging episodes.
// kSum gives the REINFORCE estimator of the sequence-level objective; kMean
// divides each episode's sum by its length.
enum class StepReduction { kMean, kSum };

struct EstimatorConfig {
  double lambda = 0.5;
  double c = 0.95;       // truncation threshold (lower bound in both mode)
  double c_high = 2.0;   // upper bound, used only by ClampMode::kBoth
  double beta = 0.05;
  double alpha = 0.5;
  double gamma = 1.0;
  ClampMode clamp_mode = ClampMode::kLower;
  RatioMode ratio_mode = RatioMode::kTRIS;
  StepReduction reduction = StepReduction::kMean;
  // Weight step t by the product over steps 0..t instead of the whole sequence.
  bool per_prefix_product = false;

  // Throws ContractError on an invalid combination.
  void validate() const;
};

std::string to_string(RatioMode mode);
std::string to_string(ClampMode mode);
std::string to_string(StepReduction reduction);
RatioMode parse_ratio_mode(const std::string& text);
ClampMode parse_clamp_mode(const std::string& text);
StepReduction parse_step_reduction(const std::string& text);
nlohmann::json to_json(const EstimatorConfig& config);
EstimatorConfig estimator_config_from_json(const nlohmann::json& j);

// pi / pi_b.
double is_ratio(double pi, double pi_b);
// pi / (lambda pi + (1 - lambda) pi_b), bounded by 1 / lambda.
double ris_ratio(double pi, double pi_b, double lambda);
// max(c, ris) for kLower, min(c, ris) for kUpper, clamp into [c, c_high] for kBoth.
double tris_ratio(double ris, double c, ClampMode mode, double c_high = 2.0);

// Log-space versions taking log-probabilities.
double log_is_ratio(double log_pi, double log_pi_b);
double log_ris_ratio(double log_pi, double log_pi_b, double lambda);
// Log of the ratio selected by config.ratio_mode.
double log_step_ratio(double log_pi, double log_pi_b, const EstimatorConfig& config);

// beta (log pi_b - log pi).
double kl_penalty_term(double log_pi_b, double log_pi, double beta);
// sum_x p(x) (log p(x) - log q(x)).
double exact_state_kl(std::span<const double> p, std::span<const double> q);

struct StepRatios {
  std::vector<double> is, ris, tris;
  double product = 1.0;  // sequence product of the selected ratio
};

// Per-step ratios of one sequence, from log-probabilities.
StepRatios step_ratios(std::span<const double> log_pi, std::span<const double> log_pi_b,
                       const EstimatorConfig& config);

// One sampled sequence as the estimator sees it.
struct OffPolicyEpisode {
  numkit::Tensor target_log_probs;          // [1 x T], differentiable
  std::vector<double> behaviour_log_probs;  // T fixed numbers
  double sampled_reward = 0.0;
  std::optional<double> baseline_reward;  // greedy CIDEr; required
};

struct OffPolicyResult {
  numkit::Tensor loss;  // scalar
  std::vector<StepRatios> ratios;
  std::vector<double> products;     // sequence product per episode
  std::vector<double> step_ratios;  // selected per-step ratio over the batch
  double advantage_mean = 0.0;
  // Mean over sampled steps of log pi_b - log pi, a Monte Carlo estimate of
  // KL(pi_b || pi) since the actions come from pi_b.
  double kl_mean = 0.0;
};

// Surrogate whose gradient is
//   -mean_episodes reduce_t [(A + beta (log pi_b - log pi)) gamma^(T-1-t) w_t] grad log pi(a_t|s_t)
// with A = sampled - baseline reward and w_t the ratio weight. Everything
// inside the bracket, and w_t, is a constant.
OffPolicyResult off_policy_loss(numkit::Tape& tape, std::span<const OffPolicyEpisode> episodes,
                                const EstimatorConfig& config);

struct RatioRecord {
  std::size_t iteration = 0;
  double min = 0.0, max = 0.0, mean = 0.0, variance = 0.0;
};

// Per-iteration summary statistics of ratios (population variance).
class RatioTrace {
 public:
  void record(std::size_t iteration, std::span<const double> values);
  const std::vector<RatioRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  // Header iteration,min,max,mean,variance.
  void write_csv(std::ostream& out) const;

 private:
  std::vector<RatioRecord> records_;
};

void record_ratio_stats(RatioTrace& trace, std::size_t iteration, std::span<const double> values);

}  // namespace offpolicy::estimators

#endif  // OFFPOLICY_ESTIMATORS_ESTIMATORS_HPP_
