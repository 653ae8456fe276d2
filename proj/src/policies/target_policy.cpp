#include "offpolicy/policies/target_policy.hpp"

#include "offpolicy/errors.hpp"

namespace offpolicy::policies {

using numkit::Tape;
using numkit::Tensor;

TargetPolicy::TargetPolicy(Vocabulary vocab, TargetConfig config, std::uint64_t seed)
    : vocab_(std::move(vocab)), config_(config) {
  if (config_.model_dim == 0 || config_.layers == 0 || config_.ff_dim == 0 ||
      config_.feature_dim == 0 || config_.max_length == 0) {
    throw ContractError("target policy dimensions must be positive");
  }
  check_vocabulary(vocab_);
  Rng rng(seed);
  const std::size_t d = config_.model_dim;
  token_embedding_ = params_.add("target.token_embedding", numkit::glorot_uniform(vocab_.size(), d, rng));
  position_embedding_ =
      params_.add("target.position_embedding", numkit::glorot_uniform(config_.max_length, d, rng));
  memory_projection_ = numkit::make_linear(params_, "target.memory", config_.feature_dim, d, rng);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "target.layer" + std::to_string(l);
    Layer layer;
    layer.self_attention = numkit::make_attention(params_, p + ".self", d, config_.heads, rng);
    layer.norm_self = numkit::make_layer_norm(params_, p + ".norm_self", d);
    layer.cross_attention = numkit::make_attention(params_, p + ".cross", d, config_.heads, rng);
    layer.norm_cross = numkit::make_layer_norm(params_, p + ".norm_cross", d);
    layer.feed_forward = numkit::make_feed_forward(params_, p + ".ff", d, config_.ff_dim, rng);
    layer.norm_ff = numkit::make_layer_norm(params_, p + ".norm_ff", d);
    layers_.push_back(std::move(layer));
  }
  output_ = numkit::make_linear(params_, "target.output", d, vocab_.size(), rng);
  mask_ = action_mask(vocab_);
}

std::unique_ptr<TargetPolicy> TargetPolicy::from_config(const nlohmann::json& config) {
  if (config.value("kind", "") != "target") {
    throw ValidationError("config does not describe a target policy");
  }
  TargetConfig c;
  c.model_dim = config.at("model_dim").get<std::size_t>();
  c.heads = config.at("heads").get<std::size_t>();
  c.layers = config.at("layers").get<std::size_t>();
  c.ff_dim = config.at("ff_dim").get<std::size_t>();
  c.feature_dim = config.at("feature_dim").get<std::size_t>();
  c.max_length = config.at("max_length").get<std::size_t>();
  Vocabulary vocab(config.at("vocabulary").get<std::vector<std::string>>());
  return std::make_unique<TargetPolicy>(std::move(vocab), c, config.value("seed", std::uint64_t{0}));
}

nlohmann::json TargetPolicy::config_json() const {
  return {{"kind", kind()},
          {"model_dim", config_.model_dim},
          {"heads", config_.heads},
          {"layers", config_.layers},
          {"ff_dim", config_.ff_dim},
          {"feature_dim", config_.feature_dim},
          {"max_length", config_.max_length},
          {"vocabulary", vocab_.content_tokens()}};
}

void TargetPolicy::check_features(const RegionFeatures& features) const {
  features.validate();
  if (features.width() != config_.feature_dim) {
    throw DimensionError("region features have width " + std::to_string(features.width()) +
                         " but the policy expects " + std::to_string(config_.feature_dim));
  }
}

Tensor TargetPolicy::decode(Tape& tape, const Tensor& features, std::span<const int> inputs) const {
  const std::size_t len = inputs.size();
  if (len == 0 || len > config_.max_length) {
    throw ContractError("decoder input of length " + std::to_string(len) + " outside [1, " +
                        std::to_string(config_.max_length) + "]");
  }
  const Tensor memory = numkit::relu(tape, numkit::linear(tape, features, memory_projection_));
  Tensor x = numkit::add(tape, numkit::embedding(tape, token_embedding_, inputs),
                         numkit::slice_rows(tape, position_embedding_, 0, len));
  for (const Layer& layer : layers_) {
    x = numkit::layer_norm(
        tape, numkit::add(tape, x, numkit::multi_head_attention(tape, x, x, layer.self_attention, true)),
        layer.norm_self);
    x = numkit::layer_norm(
        tape,
        numkit::add(tape, x, numkit::multi_head_attention(tape, x, memory, layer.cross_attention, false)),
        layer.norm_cross);
    x = numkit::layer_norm(tape, numkit::add(tape, x, numkit::feed_forward(tape, x, layer.feed_forward)),
                           layer.norm_ff);
  }
  return numkit::add_row(tape, numkit::linear(tape, x, output_), mask_);
}

PolicyState TargetPolicy::initial_state(Tape&, const Observation& obs) const {
  check_features(obs.features);
  PolicyState state;
  state.features = &obs.features;
  state.prefix = {vocab_.bos_id()};
  return state;
}

Tensor TargetPolicy::step_logits(Tape& tape, PolicyState& state) const {
  if (state.features == nullptr) throw ContractError("policy state has no features");
  const Tensor logits = decode(tape, state.features->features, state.prefix);
  return numkit::slice_rows(tape, logits, logits.rows() - 1, logits.rows());
}

Tensor TargetPolicy::sequence_logits(Tape& tape, const Observation& obs,
                                     std::span<const int> tokens) const {
  if (tokens.empty()) throw ContractError("empty token sequence");
  check_features(obs.features);
  std::vector<int> inputs;
  inputs.reserve(tokens.size());
  inputs.push_back(vocab_.bos_id());
  inputs.insert(inputs.end(), tokens.begin(), tokens.end() - 1);
  return decode(tape, obs.features.features, inputs);
}

}  // namespace offpolicy::policies
