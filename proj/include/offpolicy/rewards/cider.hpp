#ifndef OFFPOLICY_REWARDS_CIDER_HPP_
#define OFFPOLICY_REWARDS_CIDER_HPP_

#include <map>
#include <span>
#include <vector>

#include "offpolicy/policies/policy.hpp"

namespace offpolicy::rewards {

using Ngram = std::vector<int>;
using Document = std::vector<int>;

inline constexpr int kMaxNgram = 4;

// Document frequencies of every 1..4-gram over a reference corpus.
struct CiderStats {
  std::map<Ngram, int> doc_freq;
  int num_docs = 0;

  // log(num_docs) - log(max(1, doc_freq(g))); unseen n-grams count as df 1.
  double idf(const Ngram& g) const;
};

enum class CiderVariant {
  kCiderD,   // clipped counts and a Gaussian length penalty
  kVanilla,  // plain TF-IDF cosine
};

struct CiderConfig {
  CiderVariant variant = CiderVariant::kCiderD;
  double sigma = 6.0;
};

// Counts of every n-gram of order n in `tokens`.
std::map<Ngram, int> ngram_counts(std::span<const int> tokens, int n);

CiderStats build_idf(std::span<const Document> corpus);

// 10 x mean over references of the mean over n = 1..4 of the (clipped)
// TF-IDF cosine, each multiplied by exp(-(len_c - len_r)^2 / (2 sigma^2))
// for CIDEr-D.
double cider_score(std::span<const int> candidate, std::span<const Document> references,
                   const CiderStats& stats, const CiderConfig& config = {});

// Drops BOS/PAD and everything from the first EOS on.
Document strip_special(std::span<const int> tokens);

// CIDEr(sampled) - CIDEr(greedy) on the stripped token sequences. A rollout
// that stops at EOS immediately scores 0.
double self_critical_advantage(const policies::Rollout& sampled, const policies::Rollout& greedy,
                               std::span<const Document> references, const CiderStats& stats,
                               const CiderConfig& config = {});

}  // namespace offpolicy::rewards

#endif  // OFFPOLICY_REWARDS_CIDER_HPP_
