#ifndef OFFPOLICY_POLICIES_TARGET_POLICY_HPP_
#define OFFPOLICY_POLICIES_TARGET_POLICY_HPP_

#include "offpolicy/numkit/layers.hpp"
#include "offpolicy/policies/policy.hpp"

namespace offpolicy::policies {

struct TargetConfig {
  std::size_t model_dim = 64;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ff_dim = 128;
  std::size_t feature_dim = 64;
  std::size_t max_length = 30;
};

// Small post-LN transformer decoder. Each layer applies causal self-attention
// over the token prefix, cross-attention over projected region features and a
// ReLU feed-forward block, each followed by a residual add and layer norm.
class TargetPolicy final : public Policy {
 public:
  TargetPolicy(Vocabulary vocab, TargetConfig config, std::uint64_t seed);
  static std::unique_ptr<TargetPolicy> from_config(const nlohmann::json& config);

  std::string kind() const override { return "target"; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t max_length() const override { return config_.max_length; }
  numkit::ParameterSet& parameters() override { return params_; }
  const numkit::ParameterSet& parameters() const override { return params_; }
  nlohmann::json config_json() const override;
  const TargetConfig& config() const { return config_; }

  PolicyState initial_state(numkit::Tape& tape, const Observation& obs) const override;
  // Recomputes the whole prefix and returns the last row.
  numkit::Tensor step_logits(numkit::Tape& tape, PolicyState& state) const override;
  numkit::Tensor sequence_logits(numkit::Tape& tape, const Observation& obs,
                                 std::span<const int> tokens) const override;

 private:
  struct Layer {
    numkit::AttentionParams self_attention;
    numkit::LayerNormParams norm_self;
    numkit::AttentionParams cross_attention;
    numkit::LayerNormParams norm_cross;
    numkit::FeedForwardParams feed_forward;
    numkit::LayerNormParams norm_ff;
  };

  void check_features(const RegionFeatures& features) const;
  // Logits [len x V] for decoder inputs `inputs` (BOS first).
  numkit::Tensor decode(numkit::Tape& tape, const numkit::Tensor& features,
                        std::span<const int> inputs) const;

  Vocabulary vocab_;
  TargetConfig config_;
  numkit::ParameterSet params_;
  numkit::Tensor token_embedding_;
  numkit::Tensor position_embedding_;
  numkit::Linear memory_projection_;
  std::vector<Layer> layers_;
  numkit::Linear output_;
  numkit::Tensor mask_;
};

}  // namespace offpolicy::policies

#endif  // OFFPOLICY_POLICIES_TARGET_POLICY_HPP_
