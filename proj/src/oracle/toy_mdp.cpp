#include <cmath>

#include "offpolicy/errors.hpp"
#include "offpolicy/numkit/ops.hpp"
#include "offpolicy/oracle/oracle.hpp"

namespace offpolicy::oracle {

using numkit::Tape;
using numkit::Tensor;

namespace {

std::size_t power(std::size_t base, std::size_t exp) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) out *= base;
  return out;
}

std::size_t depth_offset(std::size_t vocab, std::size_t depth) {
  return (power(vocab, depth) - 1) / (vocab - 1);
}

std::vector<double> row_softmax(const std::vector<double>& logits, std::size_t state, std::size_t vocab) {
  return numkit::softmax_values(std::span(logits).subspan(state * vocab, vocab));
}

}  // namespace

void ToyMDP::validate() const {
  if (vocab < 2) throw ContractError("toy MDP needs at least two actions");
  if (horizon < 1) throw ContractError("toy MDP needs horizon >= 1");
  num_trajectories(*this);
  const std::size_t expected = num_states() * vocab;
  if (target_logits.size() != expected || behaviour_logits.size() != expected) {
    throw DimensionError("toy MDP logit tables need " + std::to_string(expected) + " entries");
  }
  for (double x : target_logits) {
    if (!std::isfinite(x)) throw ValidationError("non-finite target logit");
  }
  for (double x : behaviour_logits) {
    if (!std::isfinite(x)) throw ValidationError("non-finite behaviour logit");
  }
  if (!terminal_reward) throw ContractError("toy MDP needs a terminal reward");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in [0, 1]");
}

std::size_t ToyMDP::num_states() const { return depth_offset(vocab, horizon); }

std::size_t ToyMDP::state_index(std::span<const int> prefix) const {
  if (prefix.size() >= horizon) throw ContractError("prefix is not a decision state");
  std::size_t value = 0;
  for (int a : prefix) {
    if (a < 0 || static_cast<std::size_t>(a) >= vocab) throw ContractError("action outside the toy vocabulary");
    value = value * vocab + static_cast<std::size_t>(a);
  }
  return depth_offset(vocab, prefix.size()) + value;
}

std::vector<int> ToyMDP::prefix_of(std::size_t state) const {
  if (state >= num_states()) throw ContractError("state index out of range");
  std::size_t depth = 0;
  while (depth_offset(vocab, depth + 1) <= state) ++depth;
  std::size_t value = state - depth_offset(vocab, depth);
  std::vector<int> prefix(depth);
  for (std::size_t i = depth; i-- > 0;) {
    prefix[i] = static_cast<int>(value % vocab);
    value /= vocab;
  }
  return prefix;
}

std::vector<double> ToyMDP::target_probs(std::size_t state) const {
  return row_softmax(target_logits, state, vocab);
}

std::vector<double> ToyMDP::behaviour_probs(std::size_t state) const {
  return row_softmax(behaviour_logits, state, vocab);
}

double ToyMDP::trajectory_return(std::span<const int> actions) const {
  if (actions.size() != horizon) throw ContractError("trajectory length differs from the horizon");
  double total = 0.0, discount = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    double r = step_reward ? step_reward(actions.first(t), actions[t]) : 0.0;
    if (t + 1 == horizon) r += terminal_reward(actions);
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

std::uint64_t num_trajectories(const ToyMDP& mdp) {
  std::uint64_t n = 1;
  for (std::size_t t = 0; t < mdp.horizon; ++t) {
    if (mdp.vocab == 0 || n > kEnumerationBudget / mdp.vocab) {
      throw ContractError("toy MDP has more than " + std::to_string(kEnumerationBudget) +
                          " trajectories; refusing to enumerate");
    }
    n *= mdp.vocab;
  }
  return n;
}

void for_each_trajectory(const ToyMDP& mdp, const std::function<void(std::span<const int>)>& fn) {
  const std::uint64_t n = num_trajectories(mdp);
  std::vector<int> actions(mdp.horizon);
  for (std::uint64_t k = 0; k < n; ++k) {
    std::uint64_t v = k;
    for (std::size_t t = mdp.horizon; t-- > 0;) {
      actions[t] = static_cast<int>(v % mdp.vocab);
      v /= mdp.vocab;
    }
    fn(actions);
  }
}

double trajectory_probability(const ToyMDP& mdp, std::span<const int> actions, bool behaviour) {
  double p = 1.0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const std::size_t s = mdp.state_index(actions.first(t));
    const auto probs = behaviour ? mdp.behaviour_probs(s) : mdp.target_probs(s);
    p *= probs[static_cast<std::size_t>(actions[t])];
  }
  return p;
}

std::vector<double> exact_policy_gradient(const ToyMDP& mdp) {
  mdp.validate();
  const std::size_t v = mdp.vocab;
  std::vector<double> grad(mdp.num_states() * v, 0.0);
  for_each_trajectory(mdp, [&](std::span<const int> actions) {
    const double weight = trajectory_probability(mdp, actions) * mdp.trajectory_return(actions);
    for (std::size_t t = 0; t < actions.size(); ++t) {
      const std::size_t s = mdp.state_index(actions.first(t));
      const auto probs = mdp.target_probs(s);
      for (std::size_t a = 0; a < v; ++a) {
        const double score = (static_cast<int>(a) == actions[t] ? 1.0 : 0.0) - probs[a];
        grad[s * v + a] += weight * score;
      }
    }
  });
  return grad;
}

Tensor expected_return(Tape& tape, const ToyMDP& mdp, const Tensor& theta) {
  mdp.validate();
  if (theta.rows() != mdp.num_states() || theta.cols() != mdp.vocab) {
    throw DimensionError("theta must be " + std::to_string(mdp.num_states()) + " x " + std::to_string(mdp.vocab));
  }
  const Tensor log_probs = numkit::log_softmax(tape, theta);
  Tensor total;
  for_each_trajectory(mdp, [&](std::span<const int> actions) {
    std::vector<int> states(actions.size());
    for (std::size_t t = 0; t < actions.size(); ++t) states[t] = static_cast<int>(mdp.state_index(actions.first(t)));
    const Tensor steps = numkit::pick(tape, numkit::embedding(tape, log_probs, states), actions);
    const Tensor term = numkit::scale(tape, numkit::exp(tape, numkit::sum(tape, steps)), mdp.trajectory_return(actions));
    total = total.defined() ? numkit::add(tape, total, term) : term;
  });
  return total;
}

ValueTables exact_value_functions(const ToyMDP& mdp) {
  mdp.validate();
  const std::size_t v = mdp.vocab;
  ValueTables out;
  out.v.assign(mdp.num_states(), 0.0);
  out.q.assign(mdp.num_states() * v, 0.0);
  for (std::size_t s = mdp.num_states(); s-- > 0;) {
    std::vector<int> prefix = mdp.prefix_of(s);
    const bool last = prefix.size() + 1 == mdp.horizon;
    const auto probs = mdp.target_probs(s);
    for (std::size_t a = 0; a < v; ++a) {
      double q = mdp.step_reward ? mdp.step_reward(prefix, static_cast<int>(a)) : 0.0;
      prefix.push_back(static_cast<int>(a));
      q += last ? mdp.terminal_reward(prefix) : mdp.gamma * out.v[mdp.state_index(prefix)];
      prefix.pop_back();
      out.q[s * v + a] = q;
      out.v[s] += probs[a] * q;
    }
  }
  return out;
}

double sequence_kl(const ToyMDP& mdp) {
  mdp.validate();
  double kl = 0.0;
  for_each_trajectory(mdp, [&](std::span<const int> actions) {
    const double p = trajectory_probability(mdp, actions);
    const double b = trajectory_probability(mdp, actions, true);
    if (p > 0.0) kl += p * (std::log(p) - std::log(b));
  });
  return kl;
}

ToyMDP pull_target_towards_behaviour(const ToyMDP& mdp, double k) {
  if (!(k >= 0.0 && k <= 1.0)) throw ContractError("interpolation weight must lie in [0, 1]");
  ToyMDP out = mdp;
  for (std::size_t i = 0; i < out.target_logits.size(); ++i) {
    out.target_logits[i] = (1.0 - k) * mdp.target_logits[i] + k * mdp.behaviour_logits[i];
  }
  return out;
}

ToyMDP fixture_vocab3_horizon2() {
  ToyMDP m;
  m.vocab = 3;
  m.horizon = 2;
  m.target_logits = {0.2, -0.1, 0.4, 0.0, 0.5, -0.3, 0.3, 0.3, -0.2, -0.4, 0.1, 0.2};
  m.behaviour_logits = {0.1, 0.3, -0.2, 0.4, -0.2, 0.0, -0.1, 0.2, 0.3, 0.0, 0.0, 0.5};
  m.terminal_reward = [](std::span<const int> a) {
    static constexpr double kTable[3][3] = {{1.0, 0.2, 0.5}, {0.0, 2.0, 0.3}, {0.7, 0.1, 1.5}};
    return kTable[a[0]][a[1]];
  };
  return m;
}

ToyMDP fixture_divergent() {
  ToyMDP m = fixture_vocab3_horizon2();
  m.target_logits = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  m.behaviour_logits = {0.0, 0.0, 5.0, 0.0, 0.0, 5.0, 0.0, 0.0, 5.0, 0.0, 0.0, 5.0};
  return m;
}

ToyMDP fixture_discounted() {
  ToyMDP m;
  m.vocab = 2;
  m.horizon = 3;
  m.gamma = 0.5;
  m.target_logits.assign(7 * 2, 0.0);
  m.behaviour_logits.assign(7 * 2, 0.0);
  for (std::size_t i = 0; i < m.target_logits.size(); ++i) {
    m.target_logits[i] = 0.3 * std::sin(static_cast<double>(i) + 1.0);
    m.behaviour_logits[i] = 0.3 * std::cos(static_cast<double>(i) + 1.0);
  }
  m.step_reward = [](std::span<const int> prefix, int a) { return a == 1 ? 1.0 : 0.1 * static_cast<double>(prefix.size()); };
  m.terminal_reward = [](std::span<const int> a) { return a[0] == a[2] ? 2.0 : 0.0; };
  return m;
}

}  // namespace offpolicy::oracle
