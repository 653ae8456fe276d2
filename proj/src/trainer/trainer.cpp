#include "offpolicy/trainer/trainer.hpp"

#include <cmath>

#include "offpolicy/errors.hpp"
#include "offpolicy/numkit/ops.hpp"

namespace offpolicy::trainer {

using numkit::Tape;
using numkit::Tensor;
using policies::DecodeMode;
using policies::Vocabulary;

namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kRolloutStream = 2;

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const numkit::ParameterSet& params) {
  Snapshot out;
  for (const auto& e : params.entries()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

void restore(numkit::ParameterSet& params, const Snapshot& snap) {
  const auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor t = entries[i].tensor;
    std::copy(snap[i].begin(), snap[i].end(), t.mutable_data().begin());
  }
}

std::vector<const Example*> gather(std::span<const Example> examples, const std::vector<std::size_t>& idx) {
  std::vector<const Example*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&examples[i]);
  return out;
}

void check_finite(double loss, std::size_t iteration, const char* phase) {
  if (!std::isfinite(loss)) {
    throw NumericalError(std::string(phase) + " loss became non-finite at iteration " +
                         std::to_string(iteration));
  }
}

double update(numkit::ParameterSet& params, numkit::Adam& optimizer, double clip_norm) {
  const double norm = clip_norm > 0.0 ? numkit::clip_grad_norm(params, clip_norm) : params.grad_norm();
  if (!std::isfinite(norm)) throw NumericalError("gradient norm became non-finite");
  optimizer.step();
  return norm;
}

void mean_and_variance(std::span<const double> v, double& mean, double& var) {
  mean = var = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
}

numkit::AdamConfig with_lr(numkit::AdamConfig adam, double lr) {
  adam.lr = lr;
  return adam;
}

// Shared epoch loop for the two teacher-forced phases. `score` returns the
// validation criterion; `lower_better` flips it for early stopping.
TrainResult supervised_phase(policies::Policy& policy, std::span<const Example> train,
                             std::span<const Example> val, const TrainConfig& config,
                             std::size_t epochs, double lr, const IterationHook& hook,
                             const std::function<double()>& score, bool lower_better, const char* phase) {
  config.validate();
  if (train.empty() && epochs > 0) throw ContractError(std::string(phase) + " needs training examples");
  TrainResult result;
  auto& params = policy.parameters();
  numkit::Adam optimizer(params, with_lr(config.adam, lr));
  Rng shuffle(mix_seed(config.seed, kShuffleStream));
  std::vector<double> history;
  Snapshot best;
  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = epoch_batches(train.size(), config.batch_size, shuffle);
    for (const auto& idx : batches) {
      const auto batch = gather(train, idx);
      params.zero_grad();
      Tape tape;
      const Tensor loss = mle_loss(tape, policy, batch, config.reduction);
      check_finite(loss.item(), iteration, phase);
      tape.backward(loss);
      update(params, optimizer, config.clip_norm);
      result.log.push_back({iteration, loss.item(), loss.item(), 0.0, 0.0, 0.0, 0.0});
      loss_sum += loss.item();
      if (hook) hook(iteration, params);
      ++iteration;
    }
    EpochSummary summary{epoch, loss_sum / static_cast<double>(batches.size()), 0.0};
    if (!val.empty()) {
      summary.val_score = score();
      history.push_back(lower_better ? -summary.val_score : summary.val_score);
    }
    result.epochs.push_back(summary);
    if (val.empty()) continue;
    const auto decision = early_stop(history, config.patience);
    if (decision.best == history.size() - 1) best = snapshot(params);
    result.best_epoch = decision.best;
    if (decision.stop) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best.empty()) restore(params, best);
  return result;
}

}  // namespace

std::vector<int> Example::target_sequence() const {
  std::vector<int> seq = words;
  seq.push_back(Vocabulary::kEos);
  return seq;
}

void TrainConfig::validate() const {
  if (!(mle_lr > 0.0) || !(rl_lr > 0.0) || !(behaviour_lr > 0.0)) throw ContractError("learning rates must be positive");
  if (batch_size == 0) throw ContractError("batch_size must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"mle_lr", c.mle_lr},
          {"rl_lr", c.rl_lr},
          {"behaviour_lr", c.behaviour_lr},
          {"batch_size", c.batch_size},
          {"behaviour_epochs", c.behaviour_epochs},
          {"mle_epochs", c.mle_epochs},
          {"rl_epochs", c.rl_epochs},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"clip_norm", c.clip_norm},
          {"patience", c.patience},
          {"seed", c.seed},
          {"baseline", c.baseline == BaselineSource::kBehaviour ? "behaviour" : "target"},
          {"cider_variant", c.cider.variant == rewards::CiderVariant::kCiderD ? "cider-d" : "cider"},
          {"cider_sigma", c.cider.sigma},
          {"reduction", estimators::to_string(c.reduction)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.mle_lr = j.value("mle_lr", c.mle_lr);
  c.rl_lr = j.value("rl_lr", c.rl_lr);
  c.behaviour_lr = j.value("behaviour_lr", c.behaviour_lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.behaviour_epochs = j.value("behaviour_epochs", c.behaviour_epochs);
  c.mle_epochs = j.value("mle_epochs", c.mle_epochs);
  c.rl_epochs = j.value("rl_epochs", c.rl_epochs);
  c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
  c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
  c.adam.eps = j.value("adam_eps", c.adam.eps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  const std::string baseline = j.value("baseline", std::string("behaviour"));
  if (baseline != "behaviour" && baseline != "target") {
    throw ValidationError("unknown baseline source '" + baseline + "'");
  }
  c.baseline = baseline == "behaviour" ? BaselineSource::kBehaviour : BaselineSource::kTarget;
  const std::string variant = j.value("cider_variant", std::string("cider-d"));
  if (variant != "cider-d" && variant != "cider") throw ValidationError("unknown CIDEr variant '" + variant + "'");
  c.cider.variant = variant == "cider-d" ? rewards::CiderVariant::kCiderD : rewards::CiderVariant::kVanilla;
  c.cider.sigma = j.value("cider_sigma", c.cider.sigma);
  c.reduction = estimators::parse_step_reduction(j.value("reduction", std::string("mean")));
  return c;
}

Tensor mle_loss(Tape& tape, const policies::Policy& policy, std::span<const Example* const> batch,
                estimators::StepReduction reduction) {
  if (batch.empty()) throw ContractError("mle_loss needs a non-empty batch");
  Tensor total;
  const double n = static_cast<double>(batch.size());
  for (const Example* ex : batch) {
    const auto seq = ex->target_sequence();
    const double denom = n * (reduction == estimators::StepReduction::kMean ? static_cast<double>(seq.size()) : 1.0);
    const Tensor term = numkit::scale(tape, policies::sequence_nll(tape, policy, ex->observation(), seq), 1.0 / denom);
    total = total.defined() ? numkit::add(tape, total, term) : term;
  }
  return total;
}

double perplexity(const policies::Policy& policy, std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("perplexity needs examples");
  double nll = 0.0, tokens = 0.0;
  for (const auto& ex : examples) {
    Tape tape(false);
    const auto seq = ex.target_sequence();
    nll += policies::sequence_nll(tape, policy, ex.observation(), seq).item();
    tokens += static_cast<double>(seq.size());
  }
  return std::exp(nll / tokens);
}

Metrics evaluate(const policies::Policy& policy, std::span<const Example> examples,
                 const rewards::CiderConfig& cider) {
  std::vector<rewards::Document> candidates, references;
  for (const auto& ex : examples) {
    const auto r = policies::rollout(policy, ex.observation(), DecodeMode::kGreedy, policy.max_length());
    candidates.push_back(rewards::strip_special(r.token_ids));
    references.push_back(ex.words);
  }
  return score_corpus(candidates, references, cider);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return batches;
}

TrainResult train_behaviour(policies::BehaviourPolicy& behaviour, std::span<const Example> train,
                            std::span<const Example> val, const TrainConfig& config,
                            const IterationHook& hook) {
  return supervised_phase(behaviour, train, val, config, config.behaviour_epochs, config.behaviour_lr, hook,
                          [&] { return perplexity(behaviour, val); }, true, "behaviour");
}

TrainResult pretrain_mle(policies::TargetPolicy& target, std::span<const Example> train,
                         std::span<const Example> val, const TrainConfig& config,
                         const IterationHook& hook, std::optional<double> lr) {
  return supervised_phase(target, train, val, config, config.mle_epochs, lr.value_or(config.mle_lr), hook,
                          [&] { return evaluate(target, val, config.cider).cider; }, false, "mle");
}

double Episode::advantage() const {
  if (!baseline_reward) throw ContractError("episode has no greedy baseline reward");
  return sampled_reward - *baseline_reward;
}

std::vector<Episode> collect_episodes(const policies::BehaviourPolicy& behaviour,
                                      const policies::TargetPolicy& target,
                                      std::span<const Example* const> batch,
                                      const rewards::CiderStats& stats, const TrainConfig& config,
                                      std::uint64_t seed) {
  const std::size_t max_len = std::min(behaviour.max_length(), target.max_length());
  std::vector<Episode> episodes;
  episodes.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = *batch[i];
    Episode ep;
    ep.example = &ex;
    ep.sampled = policies::rollout(behaviour, ex.observation(), DecodeMode::kMultinomial, max_len,
                                   mix_seed(seed, i));
    ep.greedy = config.baseline == BaselineSource::kBehaviour
                    ? policies::rollout(behaviour, ex.observation(), DecodeMode::kGreedy, max_len)
                    : policies::rollout(target, {ex.features}, DecodeMode::kGreedy, max_len);
    const std::vector<rewards::Document> refs = {ex.words};
    auto reward = [&](const policies::Rollout& r) {
      const auto words = rewards::strip_special(r.token_ids);
      return words.empty() ? 0.0 : rewards::cider_score(words, refs, stats, config.cider);
    };
    ep.sampled_reward = reward(ep.sampled);
    ep.baseline_reward = reward(ep.greedy);
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

RlLoss build_rl_loss(Tape& tape, const policies::TargetPolicy& target, std::span<const Episode> episodes,
                     const estimators::EstimatorConfig& est, const TrainConfig& config) {
  est.validate();
  if (episodes.empty()) throw ContractError("build_rl_loss needs episodes");
  RlLoss out;
  std::vector<const Example*> examples;
  for (const auto& ep : episodes) examples.push_back(ep.example);

  out.mle_term_included = est.alpha < 1.0;
  {
    Tape scratch(false);
    Tensor mle = mle_loss(out.mle_term_included ? tape : scratch, target, examples, config.reduction);
    out.loss_mle = mle.item();
    if (out.mle_term_included) out.mle = mle;
  }

  out.rl_term_included = est.alpha > 0.0;
  {
    Tape scratch(false);
    Tape& t = out.rl_term_included ? tape : scratch;
    std::vector<estimators::OffPolicyEpisode> terms;
    for (const auto& ep : episodes) {
      terms.push_back({policies::sequence_log_probs(t, target, {ep.example->features}, ep.sampled.token_ids),
                       ep.sampled.step_log_probs, ep.sampled_reward, ep.baseline_reward});
    }
    out.off_policy = estimators::off_policy_loss(t, terms, est);
    out.loss_rl = out.off_policy->loss.item();
  }

  if (!out.rl_term_included) {
    out.total = *out.mle;
  } else if (!out.mle_term_included) {
    out.total = out.off_policy->loss;
  } else {
    out.total = numkit::add(tape, numkit::scale(tape, *out.mle, 1.0 - est.alpha),
                            numkit::scale(tape, out.off_policy->loss, est.alpha));
  }
  return out;
}

RlStepReport rl_step(policies::TargetPolicy& target, std::span<const Episode> episodes,
                     const estimators::EstimatorConfig& est, const TrainConfig& config,
                     numkit::Adam& optimizer) {
  auto& params = target.parameters();
  params.zero_grad();
  Tape tape;
  const RlLoss loss = build_rl_loss(tape, target, episodes, est, config);
  RlStepReport report;
  report.row.loss_total = loss.total.item();
  check_finite(report.row.loss_total, optimizer.steps_taken(), "rl");
  tape.backward(loss.total);
  report.grad_norm = update(params, optimizer, config.clip_norm);
  report.mle_term_included = loss.mle_term_included;
  report.rl_term_included = loss.rl_term_included;
  report.row.loss_mle = loss.loss_mle;
  report.row.advantage_mean = loss.off_policy->advantage_mean;
  report.row.kl_mean = loss.off_policy->kl_mean;
  report.step_ratios = loss.off_policy->step_ratios;
  report.sequence_ratios = loss.off_policy->products;
  mean_and_variance(report.step_ratios, report.row.ratio_mean, report.row.ratio_var);
  return report;
}

TrainResult train_rl(policies::TargetPolicy& target, const policies::BehaviourPolicy& behaviour,
                     std::span<const Example> train, std::span<const Example> val,
                     const estimators::EstimatorConfig& est, const TrainConfig& config,
                     const IterationHook& hook) {
  config.validate();
  est.validate();
  if (train.empty() && config.rl_epochs > 0) throw ContractError("rl needs training examples");
  std::vector<rewards::Document> corpus;
  for (const auto& ex : train) corpus.push_back(ex.words);
  const rewards::CiderStats stats = corpus.empty() ? rewards::CiderStats{} : rewards::build_idf(corpus);

  const Snapshot frozen = snapshot(behaviour.parameters());
  TrainResult result;
  auto& params = target.parameters();
  numkit::Adam optimizer(params, with_lr(config.adam, config.rl_lr));
  Rng shuffle(mix_seed(config.seed, kShuffleStream));
  const std::uint64_t rollout_seed = mix_seed(config.seed, kRolloutStream);
  std::vector<double> history;
  Snapshot best;
  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < config.rl_epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = epoch_batches(train.size(), config.batch_size, shuffle);
    for (const auto& idx : batches) {
      const auto batch = gather(train, idx);
      const auto episodes =
          collect_episodes(behaviour, target, batch, stats, config, mix_seed(rollout_seed, iteration));
      RlStepReport report = rl_step(target, episodes, est, config, optimizer);
      report.row.iteration = iteration;
      result.log.push_back(report.row);
      result.step_ratios.record(iteration, report.step_ratios);
      result.sequence_ratios.record(iteration, report.sequence_ratios);
      loss_sum += report.row.loss_total;
      if (hook) hook(iteration, params);
      ++iteration;
    }
    EpochSummary summary{epoch, loss_sum / static_cast<double>(batches.size()), 0.0};
    if (!val.empty()) {
      summary.val_score = evaluate(target, val, config.cider).cider;
      history.push_back(summary.val_score);
    }
    result.epochs.push_back(summary);
    if (val.empty()) continue;
    const auto decision = early_stop(history, config.patience);
    if (decision.best == history.size() - 1) best = snapshot(params);
    result.best_epoch = decision.best;
    if (decision.stop) {
      result.stopped_early = true;
      break;
    }
  }
  if (snapshot(behaviour.parameters()) != frozen) {
    throw ContractError("behaviour parameters changed during the RL phase");
  }
  if (!best.empty()) restore(params, best);
  return result;
}

}  // namespace offpolicy::trainer
