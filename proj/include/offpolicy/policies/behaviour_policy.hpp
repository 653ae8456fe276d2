#ifndef OFFPOLICY_POLICIES_BEHAVIOUR_POLICY_HPP_
#define OFFPOLICY_POLICIES_BEHAVIOUR_POLICY_HPP_

#include "offpolicy/numkit/layers.hpp"
#include "offpolicy/policies/policy.hpp"

namespace offpolicy::policies {

struct BehaviourConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;   // M
  std::size_t feature_dim = 64;  // N
  std::size_t max_length = 30;
};

// Attention weights alpha [1 x K] over regions, with per-region score
// e_i = concat(f_i, h_e, h_t) . w_alpha and w_alpha of shape [N + 2M x 1].
numkit::Tensor visual_attention_weights(numkit::Tape& tape, const numkit::Tensor& features,
                                        const numkit::Tensor& h_e, const numkit::Tensor& h_t,
                                        const numkit::Tensor& w_alpha);
// sum_i alpha_i f_i as a [1 x N] row.
numkit::Tensor visual_attend(numkit::Tape& tape, const numkit::Tensor& features,
                             const numkit::Tensor& h_e, const numkit::Tensor& h_t,
                             const numkit::Tensor& w_alpha);

// Image-guided language auto-encoder. A GRU encoder reads the ground-truth
// paragraph into h_e; the GRU decoder starts from h_0 = h_e and at each step
// consumes the attended region vector I_t together with the embedding of the
// previous token: h_t = GRU([I_t ; emb(a_{t-1})], h_{t-1}). Logits are an
// affine map of h_t.
class BehaviourPolicy final : public Policy {
 public:
  BehaviourPolicy(Vocabulary vocab, BehaviourConfig config, std::uint64_t seed);
  static std::unique_ptr<BehaviourPolicy> from_config(const nlohmann::json& config);

  std::string kind() const override { return "behaviour"; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t max_length() const override { return config_.max_length; }
  numkit::ParameterSet& parameters() override { return params_; }
  const numkit::ParameterSet& parameters() const override { return params_; }
  nlohmann::json config_json() const override;
  const BehaviourConfig& config() const { return config_; }

  // Final encoder hidden state [1 x M] after reading `tokens`.
  numkit::Tensor encode_paragraph(numkit::Tape& tape, std::span<const int> tokens) const;

  PolicyState initial_state(numkit::Tape& tape, const Observation& obs) const override;
  numkit::Tensor step_logits(numkit::Tape& tape, PolicyState& state) const override;
  numkit::Tensor sequence_logits(numkit::Tape& tape, const Observation& obs,
                                 std::span<const int> tokens) const override;

  // Decoder hidden state after consuming every prefix token (BOS included).
  numkit::Tensor decoder_hidden(numkit::Tape& tape, PolicyState& state) const;
  // Hidden state of the last decoder step taken; h_0 = h_e on a fresh state.
  numkit::Tensor last_hidden(const PolicyState& state) const;
  numkit::Tensor encoding(const PolicyState& state) const;  // h_e

  const numkit::Tensor& embedding() const { return embedding_; }
  const numkit::GruParams& encoder() const { return encoder_; }
  const numkit::GruParams& decoder() const { return decoder_; }
  const numkit::Tensor& w_alpha() const { return w_alpha_; }
  const numkit::Linear& output() const { return output_; }

 private:
  numkit::Tensor decoder_step(numkit::Tape& tape, const numkit::Tensor& features,
                              const numkit::Tensor& h_e, const numkit::Tensor& h, int token) const;
  numkit::Tensor project(numkit::Tape& tape, const numkit::Tensor& hidden) const;
  void advance(numkit::Tape& tape, PolicyState& state) const;

  Vocabulary vocab_;
  BehaviourConfig config_;
  numkit::ParameterSet params_;
  numkit::Tensor embedding_;
  numkit::GruParams encoder_;
  numkit::GruParams decoder_;
  numkit::Tensor w_alpha_;
  numkit::Linear output_;
  numkit::Tensor mask_;
};

}  // namespace offpolicy::policies

#endif  // OFFPOLICY_POLICIES_BEHAVIOUR_POLICY_HPP_
