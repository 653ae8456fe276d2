#ifndef OFFPOLICY_TRAINER_METRICS_HPP_
#define OFFPOLICY_TRAINER_METRICS_HPP_

#include <array>
#include <span>
#include <vector>

#include "offpolicy/rewards/cider.hpp"

namespace offpolicy::trainer {

// Corpus-level BLEU-1..4 with one reference per candidate: clipped n-gram
// precisions pooled over the corpus, geometric mean with uniform weights and
// brevity penalty exp(1 - r/c) when the candidates are shorter overall.
std::array<double, 4> corpus_bleu(std::span<const rewards::Document> candidates,
                                  std::span<const rewards::Document> references);

struct Metrics {
  std::array<double, 4> bleu{};
  double cider = 0.0;
  std::size_t count = 0;
};

// BLEU plus mean CIDEr-D with document frequencies taken from `references`.
// Empty candidates score zero.
Metrics score_corpus(std::span<const rewards::Document> candidates,
                     std::span<const rewards::Document> references,
                     const rewards::CiderConfig& cider = {});

// Tracks validation scores and decides when to stop.
struct EarlyStopDecision {
  bool stop = false;
  std::size_t best = 0;  // index of the best entry so far
};

// Stops once `patience` consecutive entries fail to beat the best one.
EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience);

}  // namespace offpolicy::trainer

#endif  // OFFPOLICY_TRAINER_METRICS_HPP_
