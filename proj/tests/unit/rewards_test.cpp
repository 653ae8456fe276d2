#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "offpolicy/errors.hpp"
#include "offpolicy/policies/vocabulary.hpp"
#include "offpolicy/random.hpp"
#include "offpolicy/rewards/cider.hpp"

using namespace offpolicy;
using namespace offpolicy::rewards;
using policies::Rollout;
using policies::Vocabulary;

namespace {

// Hand corpus shared with tests/oracles/cider_values.py.
struct HandCorpus {
  Vocabulary vocab;
  std::vector<Document> docs;

  HandCorpus() {
    for (const char* text : {"a red dog runs on the grass", "a small cat sleeps on the red mat",
                             "the dog and the cat play", "two birds sit on a wire"}) {
      for (const auto& w : policies::split_whitespace(text)) vocab.add(w);
      docs.push_back(vocab.encode(text));
    }
  }
  Document words(const char* text) const { return vocab.encode(text); }
};

std::vector<Document> all_sequences(int first, int count, std::size_t max_len) {
  std::vector<Document> out;
  std::vector<Document> frontier = {{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Document> next;
    for (const auto& prefix : frontier) {
      for (int t = first; t < first + count; ++t) {
        Document d = prefix;
        d.push_back(t);
        next.push_back(d);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

Rollout as_rollout(Document ids) {
  ids.push_back(Vocabulary::kEos);
  return {ids, std::vector<double>(ids.size(), -1.0), policies::DecodeMode::kMultinomial};
}

}  // namespace

TEST_CASE("n-gram counting") {
  const Document d = {4, 5, 4, 5};
  const auto bi = ngram_counts(d, 2);
  CHECK(bi.at({4, 5}) == 2);
  CHECK(bi.at({5, 4}) == 1);
  CHECK(ngram_counts(d, 4).size() == 1);
  CHECK(ngram_counts(d, 5).empty());
}

TEST_CASE("document frequencies") {
  SUBCASE("single document has zero idf") {
    const std::vector<Document> corpus = {{4, 5, 6, 4}};
    const auto stats = build_idf(corpus);
    CHECK(stats.num_docs == 1);
    for (const auto& [g, df] : stats.doc_freq) {
      CHECK(df == 1);
      CHECK(stats.idf(g) == 0.0);
    }
    CHECK(stats.doc_freq.size() == 3 + 3 + 2 + 1);
  }
  SUBCASE("disjoint documents have idf log 2") {
    const std::vector<Document> corpus = {{4, 5, 6}, {7, 8}};
    const auto stats = build_idf(corpus);
    CHECK(stats.doc_freq.size() == 6 + 3);
    for (const auto& entry : stats.doc_freq) {
      CHECK(stats.idf(entry.first) == doctest::Approx(0.69314718055994530942).epsilon(1e-15));
    }
  }
  SUBCASE("unseen n-grams count as df 1") {
    const std::vector<Document> corpus = {{4}, {4}, {5}};
    const auto stats = build_idf(corpus);
    CHECK(stats.idf({9, 9}) == doctest::Approx(std::log(3.0)));
    CHECK(stats.idf({4}) == doctest::Approx(std::log(1.5)));
  }
  SUBCASE("document order does not matter") {
    HandCorpus hc;
    auto shuffled = hc.docs;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto a = build_idf(hc.docs);
    const auto b = build_idf(shuffled);
    CHECK(a.doc_freq == b.doc_freq);
    const auto cand = hc.words("the red cat runs");
    CHECK(cider_score(cand, hc.docs, a) == cider_score(cand, hc.docs, b));
  }
  CHECK_THROWS_AS(build_idf(std::span<const Document>{}), ContractError);
}

TEST_CASE("cider values against the reference implementation") {
  HandCorpus hc;
  const auto stats = build_idf(hc.docs);
  const CiderConfig vanilla{CiderVariant::kVanilla};
  struct Case {
    const char* text;
    std::vector<std::size_t> refs;
    double cider_d, cider;
  };
  // Values from tests/oracles/cider_values.py; the single-reference ones
  // also agree with pycocoevalcap 1.2.
  const Case cases[] = {
      {"a red dog runs on the red grass", {0}, 7.4585151642752020673, 7.7725109852494807381},
      {"the cat sleeps on the mat", {1, 2}, 2.7045606993249728033, 2.8498236891469342684},
      {"a dog a dog a dog", {0, 2}, 0.25490010644273649245, 0.77045651003828698944},
      {"birds on a wire", {3}, 3.747114179812143681, 3.9611783622639146203},
  };
  for (const auto& c : cases) {
    std::vector<Document> refs;
    for (auto i : c.refs) refs.push_back(hc.docs[i]);
    INFO(c.text);
    CHECK(cider_score(hc.words(c.text), refs, stats) == doctest::Approx(c.cider_d).epsilon(1e-12));
    CHECK(cider_score(hc.words(c.text), refs, stats, vanilla) == doctest::Approx(c.cider).epsilon(1e-12));
  }
  const std::vector<Document> self = {hc.docs[0]};
  CHECK(cider_score(hc.docs[0], self, stats) == doctest::Approx(10.0).epsilon(1e-14));
}

TEST_CASE("cider properties") {
  HandCorpus hc;
  const auto stats = build_idf(hc.docs);
  SUBCASE("no shared n-gram scores zero") {
    const std::vector<Document> refs = {hc.docs[3]};
    CHECK(cider_score(hc.words("the dog and cat play"), refs, stats) == 0.0);
  }
  SUBCASE("the reference itself is the best candidate") {
    // Vocabulary {4, 5, 6}, lengths 1..3, every sequence as the sole reference.
    const auto space = all_sequences(4, 3, 3);
    std::vector<Document> corpus = {{4, 5}, {6, 6, 4}, {5}, {4, 6, 5}, {7, 8}};
    for (const auto& ref : space) {
      auto with_ref = corpus;
      with_ref.push_back(ref);
      const auto st = build_idf(with_ref);
      const std::vector<Document> refs = {ref};
      for (auto variant : {CiderVariant::kCiderD, CiderVariant::kVanilla}) {
        const CiderConfig cfg{variant};
        const double best = cider_score(ref, refs, st, cfg);
        for (const auto& cand : space) {
          const double s = cider_score(cand, refs, st, cfg);
          CHECK(s >= 0.0);
          CHECK(s <= best + 1e-12);
        }
      }
    }
  }
  SUBCASE("relabeling ids leaves the score unchanged") {
    Rng rng(4);
    std::vector<int> perm(hc.vocab.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    auto relabel = [&](Document d) {
      for (int& t : d) t = perm[static_cast<std::size_t>(t)];
      return d;
    };
    std::vector<Document> mapped;
    for (const auto& d : hc.docs) mapped.push_back(relabel(d));
    const auto mapped_stats = build_idf(mapped);
    const auto cand = hc.words("a small dog sleeps on the red grass");
    const std::vector<Document> refs = {hc.docs[0], hc.docs[1]};
    const std::vector<Document> mapped_refs = {mapped[0], mapped[1]};
    CHECK(cider_score(relabel(cand), mapped_refs, mapped_stats) ==
          doctest::Approx(cider_score(cand, refs, stats)).epsilon(1e-13));
  }
  SUBCASE("length penalty") {
    const std::vector<Document> refs = {hc.docs[0]};
    const auto longer = hc.words("a red dog runs on the grass a red dog runs on the grass");
    const CiderConfig vanilla{CiderVariant::kVanilla};
    CHECK(cider_score(longer, refs, stats) < cider_score(longer, refs, stats, vanilla));
  }
  SUBCASE("preconditions") {
    const std::vector<Document> refs = {hc.docs[0]};
    CHECK_THROWS_AS(cider_score(Document{}, refs, stats), ContractError);
    CHECK_THROWS_AS(cider_score(hc.docs[0], std::span<const Document>{}, stats), ContractError);
  }
}

TEST_CASE("self-critical advantage") {
  HandCorpus hc;
  const auto stats = build_idf(hc.docs);
  const std::vector<Document> refs = {hc.docs[0]};
  const Rollout ref = as_rollout(hc.docs[0]);
  const Rollout disjoint = as_rollout(hc.words("two birds sit"));
  const Rollout partial = as_rollout(hc.words("a red cat runs"));
  CHECK(self_critical_advantage(partial, partial, refs, stats) == 0.0);
  CHECK(self_critical_advantage(ref, disjoint, refs, stats) ==
        doctest::Approx(cider_score(hc.docs[0], refs, stats)).epsilon(1e-15));
  CHECK(self_critical_advantage(partial, ref, refs, stats) ==
        -self_critical_advantage(ref, partial, refs, stats));
  const Rollout eos_only{{Vocabulary::kEos}, {-0.1}, policies::DecodeMode::kGreedy};
  CHECK(self_critical_advantage(partial, eos_only, refs, stats) ==
        doctest::Approx(cider_score(hc.words("a red cat runs"), refs, stats)));
  CHECK(strip_special(std::vector<int>{Vocabulary::kBos, 5, Vocabulary::kPad, 6, Vocabulary::kEos, 7}) ==
        Document{5, 6});
  CHECK_THROWS_AS(self_critical_advantage(Rollout{}, ref, refs, stats), ContractError);
}
