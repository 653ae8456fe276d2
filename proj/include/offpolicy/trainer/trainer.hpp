#ifndef OFFPOLICY_TRAINER_TRAINER_HPP_
#define OFFPOLICY_TRAINER_TRAINER_HPP_

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "offpolicy/estimators/estimators.hpp"
#include "offpolicy/numkit/parameters.hpp"
#include "offpolicy/policies/behaviour_policy.hpp"
#include "offpolicy/policies/target_policy.hpp"
#include "offpolicy/rewards/cider.hpp"
#include "offpolicy/trainer/metrics.hpp"

namespace offpolicy::trainer {

// One image with its paragraph. `words` excludes EOS.
struct Example {
  policies::RegionFeatures features;
  rewards::Document words;

  // words followed by EOS: the teacher-forcing target.
  std::vector<int> target_sequence() const;
  policies::Observation observation() const { return {features, words}; }
};

enum class BaselineSource { kBehaviour, kTarget };

struct TrainConfig {
  double mle_lr = 4e-4;
  double rl_lr = 4e-5;
  double behaviour_lr = 5e-3;
  std::size_t batch_size = 20;
  std::size_t behaviour_epochs = 20;
  std::size_t mle_epochs = 10;
  std::size_t rl_epochs = 4;
  numkit::AdamConfig adam;  // lr is overridden per phase
  double clip_norm = 5.0;   // global gradient norm; <= 0 disables
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  BaselineSource baseline = BaselineSource::kBehaviour;
  rewards::CiderConfig cider;
  // How MLE token losses are combined per sequence; matches the RL loss.
  estimators::StepReduction reduction = estimators::StepReduction::kMean;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// One row of train_log.csv.
struct LogRow {
  std::size_t iteration = 0;
  double loss_total = 0.0;
  double loss_mle = 0.0;
  double advantage_mean = 0.0;
  double ratio_mean = 0.0;
  double ratio_var = 0.0;
  double kl_mean = 0.0;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double train_loss = 0.0;   // mean batch loss over the epoch
  double val_score = 0.0;    // CIDEr for target phases, perplexity for the behaviour
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<EpochSummary> epochs;
  estimators::RatioTrace step_ratios;      // selected per-step ratios per iteration
  estimators::RatioTrace sequence_ratios;  // sequence products per iteration
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

// Called after every parameter update with the 0-based global iteration.
using IterationHook = std::function<void(std::size_t, const numkit::ParameterSet&)>;

// Mean NLL of `sequences`: each sequence's token NLLs are summed, divided by
// its length under kMean, then averaged over the batch.
numkit::Tensor mle_loss(numkit::Tape& tape, const policies::Policy& policy,
                        std::span<const Example* const> batch, estimators::StepReduction reduction);

// exp(total NLL / total tokens) over teacher-forced sequences.
double perplexity(const policies::Policy& policy, std::span<const Example> examples);

// Greedy decoding plus BLEU/CIDEr against each example's paragraph.
Metrics evaluate(const policies::Policy& policy, std::span<const Example> examples,
                 const rewards::CiderConfig& cider = {});

// Shuffled batches of example indices for one epoch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng);

// Teacher-forced reconstruction training of the auto-encoder. Keeps the
// parameters with the lowest validation perplexity.
TrainResult train_behaviour(policies::BehaviourPolicy& behaviour, std::span<const Example> train,
                            std::span<const Example> val, const TrainConfig& config,
                            const IterationHook& hook = {});

// MLE pretraining of the target. Keeps the parameters with the highest
// validation CIDEr.
TrainResult pretrain_mle(policies::TargetPolicy& target, std::span<const Example> train,
                         std::span<const Example> val, const TrainConfig& config,
                         const IterationHook& hook = {}, std::optional<double> lr = std::nullopt);

// Everything the RL loss needs about one sampled paragraph.
struct Episode {
  const Example* example = nullptr;
  policies::Rollout sampled;  // behaviour, multinomial
  policies::Rollout greedy;   // baseline decoder, greedy
  double sampled_reward = 0.0;
  std::optional<double> baseline_reward;

  double advantage() const;
};

// Behaviour rollouts for a batch. Episode i uses seed mix_seed(seed, i).
std::vector<Episode> collect_episodes(const policies::BehaviourPolicy& behaviour,
                                      const policies::TargetPolicy& target,
                                      std::span<const Example* const> batch,
                                      const rewards::CiderStats& stats, const TrainConfig& config,
                                      std::uint64_t seed);

struct RlLoss {
  numkit::Tensor total;
  std::optional<numkit::Tensor> mle;           // absent when alpha == 1
  std::optional<estimators::OffPolicyResult> off_policy;  // absent when alpha == 0
  // Which terms were put on the tape; the other is still computed for the
  // log on a separate non-recording tape.
  bool mle_term_included = false;
  bool rl_term_included = false;
  double loss_mle = 0.0;
  double loss_rl = 0.0;
};

// (1 - alpha) MLE + alpha off-policy loss. A term whose weight is zero is
// left off the tape entirely.
RlLoss build_rl_loss(numkit::Tape& tape, const policies::TargetPolicy& target,
                     std::span<const Episode> episodes, const estimators::EstimatorConfig& est,
                     const TrainConfig& config);

struct RlStepReport {
  LogRow row;
  bool mle_term_included = false;
  bool rl_term_included = false;
  double grad_norm = 0.0;  // before clipping
  std::vector<double> step_ratios;
  std::vector<double> sequence_ratios;
};

// One Adam update of the target on a batch of episodes.
RlStepReport rl_step(policies::TargetPolicy& target, std::span<const Episode> episodes,
                     const estimators::EstimatorConfig& est, const TrainConfig& config,
                     numkit::Adam& optimizer);

// Off-policy RL phase. The behaviour is only read; a change to its parameters
// raises ContractError. Keeps the target parameters with the best validation
// CIDEr.
TrainResult train_rl(policies::TargetPolicy& target, const policies::BehaviourPolicy& behaviour,
                     std::span<const Example> train, std::span<const Example> val,
                     const estimators::EstimatorConfig& est, const TrainConfig& config,
                     const IterationHook& hook = {});

}  // namespace offpolicy::trainer

#endif  // OFFPOLICY_TRAINER_TRAINER_HPP_
