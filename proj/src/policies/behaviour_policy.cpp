#include "offpolicy/policies/behaviour_policy.hpp"

#include "offpolicy/errors.hpp"

namespace offpolicy::policies {

using numkit::Tape;
using numkit::Tensor;

namespace {

struct BehaviourCache final : DecodeCache {
  Tensor h_e;
  Tensor h;
  std::size_t consumed = 0;  // prefix tokens already fed to the decoder
};

const BehaviourCache& cache_of(const PolicyState& state) {
  auto* cache = dynamic_cast<const BehaviourCache*>(state.cache.get());
  if (cache == nullptr) throw ContractError("policy state was not created by the behaviour policy");
  return *cache;
}

BehaviourCache& cache_of(PolicyState& state) {
  auto* cache = dynamic_cast<BehaviourCache*>(state.cache.get());
  if (cache == nullptr) throw ContractError("policy state was not created by the behaviour policy");
  return *cache;
}

}  // namespace

Tensor visual_attention_weights(Tape& tape, const Tensor& features, const Tensor& h_e,
                                const Tensor& h_t, const Tensor& w_alpha) {
  const std::size_t k = features.rows();
  const std::size_t n = features.cols();
  const std::size_t m = h_t.cols();
  if (h_e.cols() != m || h_e.rows() != 1 || h_t.rows() != 1) {
    throw DimensionError("attention expects 1 x M hidden rows, got h_e " +
                                 numkit::shape_string(h_e.shape()) + " and h_t " +
                                 numkit::shape_string(h_t.shape()));
  }
  if (w_alpha.rows() != n + 2 * m || w_alpha.cols() != 1) {
    throw DimensionError(
        "attention weight has L = " + std::to_string(w_alpha.rows()) + " rows but N + 2M = " +
        std::to_string(n) + " + 2*" + std::to_string(m) + " = " + std::to_string(n + 2 * m) +
        " (N = " + std::to_string(n) + ", M = " + std::to_string(m) + ")");
  }
  const Tensor joint = numkit::concat_cols(
      tape, {features, numkit::repeat_rows(tape, h_e, k), numkit::repeat_rows(tape, h_t, k)});
  const Tensor scores = numkit::transpose(tape, numkit::matmul(tape, joint, w_alpha));
  return numkit::softmax(tape, scores, 1);
}

Tensor visual_attend(Tape& tape, const Tensor& features, const Tensor& h_e, const Tensor& h_t,
                     const Tensor& w_alpha) {
  return numkit::matmul(tape, visual_attention_weights(tape, features, h_e, h_t, w_alpha),
                        features);
}

BehaviourPolicy::BehaviourPolicy(Vocabulary vocab, BehaviourConfig config, std::uint64_t seed)
    : vocab_(std::move(vocab)), config_(config) {
  if (config_.embed_dim == 0 || config_.hidden_dim == 0 || config_.feature_dim == 0 ||
      config_.max_length == 0) {
    throw ContractError("behaviour policy dimensions must be positive");
  }
  check_vocabulary(vocab_);
  Rng rng(seed);
  const std::size_t v = vocab_.size();
  const std::size_t e = config_.embed_dim;
  const std::size_t m = config_.hidden_dim;
  const std::size_t n = config_.feature_dim;
  embedding_ = params_.add("behaviour.embedding", numkit::glorot_uniform(v, e, rng));
  encoder_ = numkit::make_gru(params_, "behaviour.encoder", e, m, rng);
  decoder_ = numkit::make_gru(params_, "behaviour.decoder", n + e, m, rng);
  w_alpha_ = params_.add("behaviour.w_alpha", numkit::glorot_uniform(n + 2 * m, 1, rng));
  output_ = numkit::make_linear(params_, "behaviour.output", m, v, rng);
  mask_ = action_mask(vocab_);
}

std::unique_ptr<BehaviourPolicy> BehaviourPolicy::from_config(const nlohmann::json& config) {
  if (config.value("kind", "") != "behaviour") {
    throw ValidationError("config does not describe a behaviour policy");
  }
  BehaviourConfig c;
  c.embed_dim = config.at("embed_dim").get<std::size_t>();
  c.hidden_dim = config.at("hidden_dim").get<std::size_t>();
  c.feature_dim = config.at("feature_dim").get<std::size_t>();
  c.max_length = config.at("max_length").get<std::size_t>();
  Vocabulary vocab(config.at("vocabulary").get<std::vector<std::string>>());
  return std::make_unique<BehaviourPolicy>(std::move(vocab), c,
                                           config.value("seed", std::uint64_t{0}));
}

nlohmann::json BehaviourPolicy::config_json() const {
  return {{"kind", kind()},
          {"embed_dim", config_.embed_dim},
          {"hidden_dim", config_.hidden_dim},
          {"feature_dim", config_.feature_dim},
          {"max_length", config_.max_length},
          {"vocabulary", vocab_.content_tokens()}};
}

Tensor BehaviourPolicy::encode_paragraph(Tape& tape, std::span<const int> tokens) const {
  if (tokens.empty()) throw ContractError("the behaviour policy needs a non-empty guide paragraph");
  for (int id : tokens) {
    if (!vocab_.valid_id(id)) throw ContractError("guide token " + std::to_string(id) + " outside vocabulary");
  }
  const Tensor embedded = numkit::embedding(tape, embedding_, tokens);
  Tensor h = Tensor::zeros({1, config_.hidden_dim});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    h = numkit::gru_cell(tape, numkit::slice_rows(tape, embedded, t, t + 1), h, encoder_);
  }
  return h;
}

Tensor BehaviourPolicy::decoder_step(Tape& tape, const Tensor& features, const Tensor& h_e,
                                     const Tensor& h, int token) const {
  const Tensor attended = visual_attend(tape, features, h_e, h, w_alpha_);
  const int ids[] = {token};
  const Tensor input = numkit::concat_cols(tape, {attended, numkit::embedding(tape, embedding_, ids)});
  return numkit::gru_cell(tape, input, h, decoder_);
}

Tensor BehaviourPolicy::project(Tape& tape, const Tensor& hidden) const {
  return numkit::add_row(tape, numkit::linear(tape, hidden, output_), mask_);
}

PolicyState BehaviourPolicy::initial_state(Tape& tape, const Observation& obs) const {
  obs.features.validate();
  if (obs.features.width() != config_.feature_dim) {
    throw DimensionError("region features have width " +
                                 std::to_string(obs.features.width()) + " but the policy expects " +
                                 std::to_string(config_.feature_dim));
  }
  auto cache = std::make_shared<BehaviourCache>();
  cache->h_e = encode_paragraph(tape, obs.guide);
  cache->h = cache->h_e;
  PolicyState state;
  state.features = &obs.features;
  state.prefix = {vocab_.bos_id()};
  state.cache = std::move(cache);
  return state;
}

void BehaviourPolicy::advance(Tape& tape, PolicyState& state) const {
  BehaviourCache& cache = cache_of(state);
  if (cache.consumed > state.prefix.size()) {
    throw ContractError("behaviour state prefix shrank after decoding");
  }
  while (cache.consumed < state.prefix.size()) {
    cache.h = decoder_step(tape, state.features->features, cache.h_e, cache.h,
                           state.prefix[cache.consumed]);
    ++cache.consumed;
  }
}

Tensor BehaviourPolicy::decoder_hidden(Tape& tape, PolicyState& state) const {
  advance(tape, state);
  return cache_of(state).h;
}

Tensor BehaviourPolicy::last_hidden(const PolicyState& state) const {
  return cache_of(state).h;
}

Tensor BehaviourPolicy::encoding(const PolicyState& state) const {
  return cache_of(state).h_e;
}

Tensor BehaviourPolicy::step_logits(Tape& tape, PolicyState& state) const {
  return project(tape, decoder_hidden(tape, state));
}

Tensor BehaviourPolicy::sequence_logits(Tape& tape, const Observation& obs,
                                        std::span<const int> tokens) const {
  if (tokens.empty()) throw ContractError("empty token sequence");
  PolicyState state = initial_state(tape, obs);
  const auto& cache = cache_of(state);
  std::vector<Tensor> hidden;
  hidden.reserve(tokens.size());
  Tensor h = cache.h_e;
  int prev = vocab_.bos_id();
  for (int token : tokens) {
    h = decoder_step(tape, obs.features.features, cache.h_e, h, prev);
    hidden.push_back(h);
    prev = token;
  }
  return project(tape, numkit::concat_rows(tape, hidden));
}

}  // namespace offpolicy::policies
