#include "offpolicy/estimators/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "offpolicy/errors.hpp"
#include "offpolicy/numkit/ops.hpp"

namespace offpolicy::estimators {

using numkit::Tape;
using numkit::Tensor;

namespace {

void check_prob(double p, const char* name) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ContractError(std::string(name) + " = " + std::to_string(p) + " outside (0, 1]");
  }
}

void check_log_prob(double lp, const char* name) {
  if (std::isnan(lp)) throw NumericalError(std::string(name) + " is NaN");
  if (!(lp <= 0.0) || std::isinf(lp)) {
    throw ContractError(std::string(name) + " = " + std::to_string(lp) + " is not a finite log-probability");
  }
}

double log_tris(double log_ris, const EstimatorConfig& config) {
  const double lo = std::log(config.c);
  switch (config.clamp_mode) {
    case ClampMode::kLower: return std::max(lo, log_ris);
    case ClampMode::kUpper: return std::min(lo, log_ris);
    case ClampMode::kBoth: return std::clamp(log_ris, lo, std::log(config.c_high));
  }
  return log_ris;
}

}  // namespace

void EstimatorConfig::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ContractError("lambda must lie in (0, 1]");
  if (!(c > 0.0)) throw ContractError("truncation threshold c must be positive");
  if (!(beta >= 0.0)) throw ContractError("beta must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in (0, 1]");
  if (clamp_mode == ClampMode::kLower && c > 1.0 / lambda) {
    throw ContractError("lower clamp c = " + std::to_string(c) + " exceeds the RIS bound 1/lambda = " +
                        std::to_string(1.0 / lambda));
  }
  if (clamp_mode == ClampMode::kBoth && !(c_high >= c)) {
    throw ContractError("clamp bounds must satisfy c <= c_high");
  }
}

std::string to_string(RatioMode mode) {
  switch (mode) {
    case RatioMode::kIS: return "is";
    case RatioMode::kRIS: return "ris";
    case RatioMode::kTRIS: return "tris";
  }
  return "?";
}

std::string to_string(ClampMode mode) {
  switch (mode) {
    case ClampMode::kLower: return "lower";
    case ClampMode::kUpper: return "upper";
    case ClampMode::kBoth: return "both";
  }
  return "?";
}

std::string to_string(StepReduction reduction) {
  return reduction == StepReduction::kMean ? "mean" : "sum";
}

RatioMode parse_ratio_mode(const std::string& text) {
  for (auto m : {RatioMode::kIS, RatioMode::kRIS, RatioMode::kTRIS}) {
    if (to_string(m) == text) return m;
  }
  throw ValidationError("unknown ratio mode '" + text + "' (expected is, ris or tris)");
}

ClampMode parse_clamp_mode(const std::string& text) {
  for (auto m : {ClampMode::kLower, ClampMode::kUpper, ClampMode::kBoth}) {
    if (to_string(m) == text) return m;
  }
  throw ValidationError("unknown clamp mode '" + text + "' (expected lower, upper or both)");
}

StepReduction parse_step_reduction(const std::string& text) {
  if (text == "mean") return StepReduction::kMean;
  if (text == "sum") return StepReduction::kSum;
  throw ValidationError("unknown step reduction '" + text + "' (expected mean or sum)");
}

nlohmann::json to_json(const EstimatorConfig& c) {
  return {{"lambda", c.lambda},         {"c", c.c},
          {"c_high", c.c_high},         {"beta", c.beta},
          {"alpha", c.alpha},           {"gamma", c.gamma},
          {"clamp_mode", to_string(c.clamp_mode)},
          {"ratio_mode", to_string(c.ratio_mode)},
          {"reduction", to_string(c.reduction)},
          {"per_prefix_product", c.per_prefix_product}};
}

EstimatorConfig estimator_config_from_json(const nlohmann::json& j) {
  EstimatorConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.c = j.value("c", c.c);
  c.c_high = j.value("c_high", c.c_high);
  c.beta = j.value("beta", c.beta);
  c.alpha = j.value("alpha", c.alpha);
  c.gamma = j.value("gamma", c.gamma);
  c.clamp_mode = parse_clamp_mode(j.value("clamp_mode", to_string(c.clamp_mode)));
  c.ratio_mode = parse_ratio_mode(j.value("ratio_mode", to_string(c.ratio_mode)));
  c.reduction = parse_step_reduction(j.value("reduction", to_string(c.reduction)));
  c.per_prefix_product = j.value("per_prefix_product", c.per_prefix_product);
  return c;
}

double is_ratio(double pi, double pi_b) {
  if (pi_b == 0.0) throw NumericalError("singular importance ratio: behaviour probability is 0");
  check_prob(pi, "pi");
  check_prob(pi_b, "pi_b");
  return pi / pi_b;
}

double ris_ratio(double pi, double pi_b, double lambda) {
  check_prob(pi, "pi");
  check_prob(pi_b, "pi_b");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ContractError("lambda must lie in (0, 1]");
  // Same value as pi / (lambda pi + (1 - lambda) pi_b), exact when pi == pi_b.
  return 1.0 / (1.0 + (1.0 - lambda) * (pi_b / pi - 1.0));
}

double tris_ratio(double ris, double c, ClampMode mode, double c_high) {
  if (!(c > 0.0)) throw ContractError("truncation threshold c must be positive");
  switch (mode) {
    case ClampMode::kLower: return std::max(c, ris);
    case ClampMode::kUpper: return std::min(c, ris);
    case ClampMode::kBoth:
      if (!(c_high >= c)) throw ContractError("clamp bounds must satisfy c <= c_high");
      return std::clamp(ris, c, c_high);
  }
  return ris;
}

double log_is_ratio(double log_pi, double log_pi_b) {
  check_log_prob(log_pi, "log pi");
  check_log_prob(log_pi_b, "log pi_b");
  return log_pi - log_pi_b;
}

double log_ris_ratio(double log_pi, double log_pi_b, double lambda) {
  check_log_prob(log_pi, "log pi");
  check_log_prob(log_pi_b, "log pi_b");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ContractError("lambda must lie in (0, 1]");
  // pi / (lambda pi + (1 - lambda) pi_b) = 1 / (1 + (1 - lambda)(pi_b / pi - 1)),
  // exactly 1 when the log-probs agree.
  const double d = log_pi_b - log_pi;
  if (d > 700.0) return -(std::log1p(-lambda) + d);
  return std::min(-std::log1p((1.0 - lambda) * std::expm1(d)), -std::log(lambda));
}

double log_step_ratio(double log_pi, double log_pi_b, const EstimatorConfig& config) {
  switch (config.ratio_mode) {
    case RatioMode::kIS: return log_is_ratio(log_pi, log_pi_b);
    case RatioMode::kRIS: return log_ris_ratio(log_pi, log_pi_b, config.lambda);
    case RatioMode::kTRIS: return log_tris(log_ris_ratio(log_pi, log_pi_b, config.lambda), config);
  }
  return 0.0;
}

double kl_penalty_term(double log_pi_b, double log_pi, double beta) {
  return beta * (log_pi_b - log_pi);
}

double exact_state_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw ContractError("exact_state_kl needs two non-empty distributions of equal size");
  }
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw ContractError("negative probability in exact_state_kl");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw ContractError("exact_state_kl inputs must each sum to 1");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

StepRatios step_ratios(std::span<const double> log_pi, std::span<const double> log_pi_b,
                       const EstimatorConfig& config) {
  if (log_pi.size() != log_pi_b.size()) {
    throw ContractError("target and behaviour log-prob sequences differ in length (" +
                        std::to_string(log_pi.size()) + " vs " + std::to_string(log_pi_b.size()) + ")");
  }
  StepRatios out;
  double log_product = 0.0;
  for (std::size_t t = 0; t < log_pi.size(); ++t) {
    const double lr = log_ris_ratio(log_pi[t], log_pi_b[t], config.lambda);
    out.is.push_back(std::exp(log_is_ratio(log_pi[t], log_pi_b[t])));
    out.ris.push_back(std::exp(lr));
    out.tris.push_back(std::exp(log_tris(lr, config)));
    log_product += log_step_ratio(log_pi[t], log_pi_b[t], config);
  }
  out.product = std::exp(log_product);
  return out;
}

OffPolicyResult off_policy_loss(Tape& tape, std::span<const OffPolicyEpisode> episodes,
                                const EstimatorConfig& config) {
  config.validate();
  if (episodes.empty()) throw ContractError("off_policy_loss needs at least one episode");
  OffPolicyResult result;
  const double n_episodes = static_cast<double>(episodes.size());
  double kl_sum = 0.0;
  std::size_t kl_count = 0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const OffPolicyEpisode& ep = episodes[e];
    if (!ep.baseline_reward) {
      throw ContractError("episode " + std::to_string(e) + " has no greedy baseline reward");
    }
    if (!ep.target_log_probs.defined() || ep.target_log_probs.rows() != 1) {
      throw ContractError("episode " + std::to_string(e) + " needs a [1 x T] row of target log-probs");
    }
    const auto log_pi = ep.target_log_probs.data();
    const std::size_t steps = log_pi.size();
    if (ep.behaviour_log_probs.size() != steps) {
      throw ContractError("episode " + std::to_string(e) + " has " + std::to_string(steps) +
                          " target steps but " + std::to_string(ep.behaviour_log_probs.size()) +
                          " behaviour log-probs");
    }
    const double advantage = ep.sampled_reward - *ep.baseline_reward;
    StepRatios ratios = step_ratios(log_pi, ep.behaviour_log_probs, config);
    if (!std::isfinite(ratios.product)) {
      throw NumericalError("importance weight product overflowed in episode " + std::to_string(e));
    }

    const double scale =
        n_episodes * (config.reduction == StepReduction::kMean ? static_cast<double>(steps) : 1.0);
    std::vector<double> coefficients(steps);
    double log_prefix = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double log_ratio = log_step_ratio(log_pi[t], ep.behaviour_log_probs[t], config);
      log_prefix += log_ratio;
      result.step_ratios.push_back(std::exp(log_ratio));
      const double weight = config.per_prefix_product ? std::exp(log_prefix) : ratios.product;
      const double discount = std::pow(config.gamma, static_cast<double>(steps - 1 - t));
      const double kl = kl_penalty_term(ep.behaviour_log_probs[t], log_pi[t], config.beta);
      coefficients[t] = -(discount * advantage + kl) * weight / scale;
      kl_sum += ep.behaviour_log_probs[t] - log_pi[t];
      ++kl_count;
    }
    const Tensor term = numkit::dot_const(tape, ep.target_log_probs, coefficients);
    result.loss = result.loss.defined() ? numkit::add(tape, result.loss, term) : term;
    result.products.push_back(ratios.product);
    result.ratios.push_back(std::move(ratios));
    result.advantage_mean += advantage / n_episodes;
  }
  result.kl_mean = kl_count == 0 ? 0.0 : kl_sum / static_cast<double>(kl_count);
  return result;
}

void RatioTrace::record(std::size_t iteration, std::span<const double> values) {
  if (values.empty()) throw ContractError("cannot record ratio statistics of an empty batch");
  RatioRecord r;
  r.iteration = iteration;
  r.min = *std::min_element(values.begin(), values.end());
  r.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - r.mean) * (v - r.mean);
  r.variance = sq / static_cast<double>(values.size());
  records_.push_back(r);
}

void RatioTrace::write_csv(std::ostream& out) const {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "iteration,min,max,mean,variance\n";
  for (const auto& r : records_) {
    out << r.iteration << ',' << r.min << ',' << r.max << ',' << r.mean << ',' << r.variance << '\n';
  }
  out.precision(old);
}

void record_ratio_stats(RatioTrace& trace, std::size_t iteration, std::span<const double> values) {
  trace.record(iteration, values);
}

}  // namespace offpolicy::estimators
