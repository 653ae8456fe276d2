#ifndef OFFPOLICY_DATAIO_CORPUS_HPP_
#define OFFPOLICY_DATAIO_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "offpolicy/policies/policy.hpp"
#include "offpolicy/policies/vocabulary.hpp"
#include "offpolicy/trainer/trainer.hpp"

namespace offpolicy::dataio {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& text);  // ValidationError on unknown names

struct CorpusRecord {
  std::string id;
  Split split = Split::kTrain;
  policies::RegionFeatures features;
  std::string paragraph;
};

struct ToyCorpusConfig {
  std::size_t n_records = 500;  // training records; val and test get n/10 each
  std::uint64_t grammar_seed = 1;
  std::uint64_t feature_seed = 2;
  std::size_t regions = 8;        // K
  std::size_t feature_dim = 64;   // N
  double noise = 0.1;
};

// The 60 content words the toy grammar can emit.
const std::vector<std::string>& toy_lexicon();

// Each image has K regions with latent attributes (size, colour, noun, verb,
// preposition, place). Two or three of them are described, one sentence
// each, in a random template; the paragraph is cut at whole sentences so it
// has 8..24 tokens. A region's features are the sum of fixed random
// embeddings of its attributes and of its position in the paragraph (or a
// "not described" embedding), plus Gaussian noise. Records are written in
// split order train, val, test.
std::vector<CorpusRecord> generate_toy_corpus(const ToyCorpusConfig& config);

// One JSON object per line: {"id", "split", "features": [[...]], "paragraph"}.
void write_corpus(std::ostream& out, const std::vector<CorpusRecord>& records);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);

struct Corpus {
  std::vector<CorpusRecord> records;  // file order
  policies::Vocabulary vocabulary;    // training split, first-appearance order
  std::size_t regions = 0;
  std::size_t feature_dim = 0;

  std::vector<const CorpusRecord*> split(Split s) const;
  // Records of one split as trainer examples; unseen words map to UNK.
  std::vector<trainer::Example> examples(Split s) const;
};

// IoError when the file cannot be read; ValidationError naming the line for
// malformed records, inconsistent shapes or an empty file.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in);

}  // namespace offpolicy::dataio

#endif  // OFFPOLICY_DATAIO_CORPUS_HPP_
