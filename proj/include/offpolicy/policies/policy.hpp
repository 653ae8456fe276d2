#ifndef OFFPOLICY_POLICIES_POLICY_HPP_
#define OFFPOLICY_POLICIES_POLICY_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "offpolicy/numkit/parameters.hpp"
#include "offpolicy/numkit/tape.hpp"
#include "offpolicy/policies/vocabulary.hpp"

namespace offpolicy::policies {

// K region vectors of width N standing in for detector output.
struct RegionFeatures {
  numkit::Tensor features;  // [K x N]
  std::string image_id;

  std::size_t num_regions() const { return features.rows(); }
  std::size_t width() const { return features.cols(); }
  // Throws ValidationError on an empty or non-finite feature block.
  void validate() const;
};

// What a policy conditions on besides its own prefix. `guide` is the
// ground-truth paragraph; only the auto-encoder behaviour policy reads it.
struct Observation {
  const RegionFeatures& features;
  std::span<const int> guide = {};
};

class DecodeCache {
 public:
  virtual ~DecodeCache() = default;
};

// s_t = {features, BOS a_1 ... a_{t-1}} plus whatever incremental state the
// policy keeps between steps.
struct PolicyState {
  const RegionFeatures* features = nullptr;
  std::vector<int> prefix;
  std::shared_ptr<DecodeCache> cache;
};

enum class DecodeMode { kMultinomial, kGreedy };

struct Rollout {
  std::vector<int> token_ids;        // generated tokens, EOS included when emitted
  std::vector<double> step_log_probs;  // log pi(a_t | s_t) of each generated token
  DecodeMode mode = DecodeMode::kGreedy;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string kind() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual std::size_t max_length() const = 0;
  virtual numkit::ParameterSet& parameters() = 0;
  virtual const numkit::ParameterSet& parameters() const = 0;
  // Architecture plus vocabulary; enough to rebuild an identically shaped policy.
  virtual nlohmann::json config_json() const = 0;

  virtual PolicyState initial_state(numkit::Tape& tape, const Observation& obs) const = 0;
  // Next-token logits [1 x V] for state.prefix. May advance state.cache.
  virtual numkit::Tensor step_logits(numkit::Tape& tape, PolicyState& state) const = 0;
  // Teacher-forced logits [T x V]: row t scores tokens[t] given BOS + tokens[0..t).
  virtual numkit::Tensor sequence_logits(numkit::Tape& tape, const Observation& obs,
                                         std::span<const int> tokens) const = 0;
};

// Logit offset that removes PAD and BOS from the action space. Both policies
// add it to their output layer, so neither token can be generated or scored
// with nonzero probability.
inline constexpr double kMaskedLogit = -1e30;
numkit::Tensor action_mask(const Vocabulary& vocab);  // [1 x V] constant row

// Throws ContractError unless the vocabulary has at least one content token.
void check_vocabulary(const Vocabulary& vocab);

// Validated entry point for step_logits: the prefix must start with BOS,
// contain no PAD, and leave room for one more token under max_length().
numkit::Tensor policy_step_logits(numkit::Tape& tape, const Policy& policy, PolicyState& state);

// Throws ContractError unless `tokens` is a well-formed generated sequence.
void validate_sequence(const Policy& policy, std::span<const int> tokens);

// log pi(tokens[t] | s_t) for every t, as a differentiable [1 x T] row.
numkit::Tensor sequence_log_probs(numkit::Tape& tape, const Policy& policy,
                                  const Observation& obs, std::span<const int> tokens);

// -sum_t log pi(tokens[t] | s_t).
numkit::Tensor sequence_nll(numkit::Tape& tape, const Policy& policy, const Observation& obs,
                            std::span<const int> tokens);

// Autoregressive decoding without autodiff. Multinomial mode samples from the
// softmax with a generator seeded by `seed`; greedy mode takes the argmax,
// breaking ties toward the lowest id. Stops after EOS or max_length tokens.
Rollout rollout(const Policy& policy, const Observation& obs, DecodeMode mode,
                std::size_t max_length, std::uint64_t seed = 0);

// Index of the first maximal entry.
int argmax_lowest(std::span<const double> logits);
// Inverse-CDF draw from probabilities summing to one.
int sample_categorical(std::span<const double> probs, double u);

}  // namespace offpolicy::policies

#endif  // OFFPOLICY_POLICIES_POLICY_HPP_
