#include "offpolicy/rewards/cider.hpp"

#include <cmath>
#include <set>

#include "offpolicy/errors.hpp"

namespace offpolicy::rewards {

namespace {

using policies::Vocabulary;

struct TfIdf {
  std::map<Ngram, double> weights;
  double norm = 0.0;
};

// Per-order TF-IDF vectors, weight = count x idf.
std::vector<TfIdf> vectorize(std::span<const int> tokens, const CiderStats& stats) {
  std::vector<TfIdf> out(kMaxNgram);
  for (int n = 1; n <= kMaxNgram; ++n) {
    TfIdf& v = out[static_cast<std::size_t>(n - 1)];
    for (const auto& [g, count] : ngram_counts(tokens, n)) {
      const double w = count * stats.idf(g);
      v.weights.emplace(g, w);
      v.norm += w * w;
    }
    v.norm = std::sqrt(v.norm);
  }
  return out;
}

double similarity(const TfIdf& cand, const TfIdf& ref, bool clip) {
  if (cand.norm == 0.0 || ref.norm == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [g, w] : cand.weights) {
    auto it = ref.weights.find(g);
    if (it == ref.weights.end()) continue;
    dot += (clip ? std::min(w, it->second) : w) * it->second;
  }
  return dot / (cand.norm * ref.norm);
}

}  // namespace

double CiderStats::idf(const Ngram& g) const {
  auto it = doc_freq.find(g);
  const int df = it == doc_freq.end() ? 1 : std::max(1, it->second);
  return std::log(static_cast<double>(num_docs)) - std::log(static_cast<double>(df));
}

std::map<Ngram, int> ngram_counts(std::span<const int> tokens, int n) {
  std::map<Ngram, int> counts;
  if (n <= 0) throw ContractError("n-gram order must be positive");
  const auto order = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

CiderStats build_idf(std::span<const Document> corpus) {
  if (corpus.empty()) throw ContractError("build_idf needs a non-empty reference corpus");
  CiderStats stats;
  stats.num_docs = static_cast<int>(corpus.size());
  for (const Document& doc : corpus) {
    std::set<Ngram> seen;
    for (int n = 1; n <= kMaxNgram; ++n) {
      for (const auto& entry : ngram_counts(doc, n)) seen.insert(entry.first);
    }
    for (const Ngram& g : seen) ++stats.doc_freq[g];
  }
  return stats;
}

double cider_score(std::span<const int> candidate, std::span<const Document> references,
                   const CiderStats& stats, const CiderConfig& config) {
  if (candidate.empty()) throw ContractError("cider_score needs a non-empty candidate");
  if (references.empty()) throw ContractError("cider_score needs at least one reference");
  if (stats.num_docs <= 0) throw ContractError("cider statistics are empty");
  const bool cider_d = config.variant == CiderVariant::kCiderD;
  const auto cand = vectorize(candidate, stats);
  double total = 0.0;
  for (const Document& ref : references) {
    if (ref.empty()) throw ContractError("cider_score references must be non-empty");
    const auto rv = vectorize(ref, stats);
    const double delta = static_cast<double>(candidate.size()) - static_cast<double>(ref.size());
    const double penalty =
        cider_d ? std::exp(-(delta * delta) / (2.0 * config.sigma * config.sigma)) : 1.0;
    double per_ref = 0.0;
    for (int n = 0; n < kMaxNgram; ++n) per_ref += similarity(cand[n], rv[n], cider_d) * penalty;
    total += per_ref / kMaxNgram;
  }
  return 10.0 * total / static_cast<double>(references.size());
}

Document strip_special(std::span<const int> tokens) {
  Document out;
  for (int id : tokens) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    out.push_back(id);
  }
  return out;
}

double self_critical_advantage(const policies::Rollout& sampled, const policies::Rollout& greedy,
                               std::span<const Document> references, const CiderStats& stats,
                               const CiderConfig& config) {
  if (sampled.token_ids.empty() || greedy.token_ids.empty()) {
    throw ContractError("self-critical advantage needs non-empty rollouts");
  }
  auto score = [&](const policies::Rollout& r) {
    const Document words = strip_special(r.token_ids);
    return words.empty() ? 0.0 : cider_score(words, references, stats, config);
  };
  return score(sampled) - score(greedy);
}

}  // namespace offpolicy::rewards
