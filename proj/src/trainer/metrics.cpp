#include "offpolicy/trainer/metrics.hpp"

#include <cmath>

#include "offpolicy/errors.hpp"

namespace offpolicy::trainer {

std::array<double, 4> corpus_bleu(std::span<const rewards::Document> candidates,
                                  std::span<const rewards::Document> references) {
  if (candidates.size() != references.size()) {
    throw ContractError("corpus_bleu needs one reference per candidate");
  }
  std::array<double, 4> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (int n = 1; n <= 4; ++n) {
      const auto ref_counts = rewards::ngram_counts(references[i], n);
      for (const auto& [g, count] : rewards::ngram_counts(candidates[i], n)) {
        auto it = ref_counts.find(g);
        matched[n - 1] += it == ref_counts.end() ? 0 : std::min(count, it->second);
        total[n - 1] += count;
      }
    }
  }
  std::array<double, 4> bleu{};
  if (cand_len == 0.0) return bleu;
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matched[n] == 0.0) break;  // this and every higher order stay 0
    log_sum += std::log(matched[n] / total[n]);
    bleu[n] = bp * std::exp(log_sum / (n + 1));
  }
  return bleu;
}

Metrics score_corpus(std::span<const rewards::Document> candidates,
                     std::span<const rewards::Document> references, const rewards::CiderConfig& cider) {
  if (candidates.empty()) throw ContractError("cannot score an empty evaluation set");
  if (candidates.size() != references.size()) {
    throw ContractError("score_corpus needs one reference per candidate");
  }
  Metrics m;
  m.count = candidates.size();
  m.bleu = corpus_bleu(candidates, references);
  const auto stats = rewards::build_idf(references);
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].empty()) continue;
    sum += rewards::cider_score(candidates[i], references.subspan(i, 1), stats, cider);
  }
  m.cider = sum / static_cast<double>(candidates.size());
  return m;
}

EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience) {
  EarlyStopDecision d;
  std::size_t since_best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[d.best]) {
      d.best = i;
      since_best = 0;
    } else {
      ++since_best;
    }
  }
  d.stop = !history.empty() && patience > 0 && since_best >= patience;
  return d;
}

}  // namespace offpolicy::trainer
