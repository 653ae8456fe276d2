#include "offpolicy/policies/policy.hpp"

#include "offpolicy/errors.hpp"
#include "offpolicy/numkit/ops.hpp"
#include "offpolicy/random.hpp"

namespace offpolicy::policies {

using numkit::Tape;
using numkit::Tensor;

void RegionFeatures::validate() const {
  if (!features.defined() || features.rank() != 2) {
    throw ValidationError("region features for '" + image_id + "' must be a K x N matrix");
  }
  if (!numkit::all_finite(features.data())) {
    throw ValidationError("region features for '" + image_id + "' contain non-finite values");
  }
}

Tensor action_mask(const Vocabulary& vocab) {
  std::vector<double> mask(vocab.size(), 0.0);
  mask[static_cast<std::size_t>(vocab.pad_id())] = kMaskedLogit;
  mask[static_cast<std::size_t>(vocab.bos_id())] = kMaskedLogit;
  return Tensor::row(std::move(mask));
}

void check_vocabulary(const Vocabulary& vocab) {
  if (vocab.size() <= static_cast<std::size_t>(Vocabulary::kNumReserved)) {
    throw ContractError("vocabulary needs at least one content token");
  }
}

Tensor policy_step_logits(Tape& tape, const Policy& policy, PolicyState& state) {
  const auto& vocab = policy.vocabulary();
  if (state.features == nullptr) throw ContractError("policy state has no features");
  if (state.prefix.empty() || state.prefix.front() != vocab.bos_id()) {
    throw ContractError("policy state prefix must begin with BOS");
  }
  if (state.prefix.size() > policy.max_length()) {
    throw ContractError("prefix of length " + std::to_string(state.prefix.size()) +
                        " exceeds max length " + std::to_string(policy.max_length()));
  }
  for (std::size_t i = 1; i < state.prefix.size(); ++i) {
    const int id = state.prefix[i];
    if (!vocab.valid_id(id) || id == vocab.pad_id() || id == vocab.bos_id()) {
      throw ContractError("malformed prefix token " + std::to_string(id));
    }
  }
  return policy.step_logits(tape, state);
}

void validate_sequence(const Policy& policy, std::span<const int> tokens) {
  const auto& vocab = policy.vocabulary();
  if (tokens.empty()) throw ContractError("empty token sequence");
  if (tokens.size() > policy.max_length()) {
    throw ContractError("sequence of length " + std::to_string(tokens.size()) +
                        " exceeds max length " + std::to_string(policy.max_length()));
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int id = tokens[t];
    if (!vocab.valid_id(id)) throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
    if (id == vocab.pad_id() || id == vocab.bos_id()) {
      throw ContractError("sequence contains PAD/BOS at position " + std::to_string(t));
    }
    if (id == vocab.eos_id() && t + 1 != tokens.size()) {
      throw ContractError("EOS before the end of the sequence at position " + std::to_string(t));
    }
  }
}

Tensor sequence_log_probs(Tape& tape, const Policy& policy, const Observation& obs,
                          std::span<const int> tokens) {
  validate_sequence(policy, tokens);
  const Tensor logits = policy.sequence_logits(tape, obs, tokens);
  return numkit::pick(tape, numkit::log_softmax(tape, logits), tokens);
}

Tensor sequence_nll(Tape& tape, const Policy& policy, const Observation& obs,
                    std::span<const int> tokens) {
  validate_sequence(policy, tokens);
  return numkit::cross_entropy(tape, policy.sequence_logits(tape, obs, tokens), tokens);
}

int argmax_lowest(std::span<const double> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int sample_categorical(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = static_cast<int>(i);
    if (u < cumulative) return static_cast<int>(i);
  }
  return last_positive;
}

Rollout rollout(const Policy& policy, const Observation& obs, DecodeMode mode,
                std::size_t max_length, std::uint64_t seed) {
  if (max_length == 0) throw ContractError("rollout needs max_length >= 1");
  max_length = std::min(max_length, policy.max_length());
  Tape tape(false);
  Rng rng(seed);
  PolicyState state = policy.initial_state(tape, obs);
  Rollout out;
  out.mode = mode;
  const int eos = policy.vocabulary().eos_id();
  while (out.token_ids.size() < max_length) {
    const Tensor logits = policy_step_logits(tape, policy, state);
    const auto log_probs = numkit::log_softmax_values(logits.data());
    int token;
    if (mode == DecodeMode::kGreedy) {
      token = argmax_lowest(logits.data());
    } else {
      const auto probs = numkit::softmax_values(logits.data());
      token = sample_categorical(probs, rng.uniform());
    }
    out.token_ids.push_back(token);
    out.step_log_probs.push_back(log_probs[static_cast<std::size_t>(token)]);
    if (token == eos) break;
    state.prefix.push_back(token);
  }
  return out;
}

}  // namespace offpolicy::policies
