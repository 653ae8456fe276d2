#include "offpolicy/dataio/corpus.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "offpolicy/errors.hpp"
#include "offpolicy/random.hpp"

namespace offpolicy::dataio {

namespace {

const std::vector<std::string> kSizes = {"small", "large", "tiny", "huge"};
const std::vector<std::string> kColours = {"red", "blue", "green", "yellow", "white",
                                           "black", "brown", "gray", "orange", "pink"};
const std::vector<std::string> kNouns = {"dog", "cat", "bird", "horse", "man", "woman",
                                         "boy", "girl", "car", "bike", "cow", "sheep"};
const std::vector<std::string> kVerbs = {"sits", "stands", "runs", "walks", "sleeps", "waits", "plays", "rests"};
const std::vector<std::string> kPreps = {"near", "on", "in", "under", "beside"};
const std::vector<std::string> kPlaces = {"grass", "road", "table", "bench", "tree", "wall",
                                          "field", "beach", "river", "hill", "fence", "house"};
const std::vector<std::string> kFunction = {"a", "the", "is", "and", "there", "it", "also", "another", "."};

constexpr std::size_t kMaxTokens = 24;
constexpr std::size_t kAttributes = 6;

struct Region {
  std::array<std::size_t, kAttributes> attr{};  // size, colour, noun, verb, prep, place
  int order = -1;                               // sentence index, -1 when not described
};

const std::array<const std::vector<std::string>*, kAttributes> kAttributeLists = {&kSizes, &kColours, &kNouns,
                                                                                  &kVerbs, &kPreps, &kPlaces};

std::vector<std::string> sentence(const Region& r, std::size_t template_id) {
  const std::string& size = kSizes[r.attr[0]];
  const std::string& colour = kColours[r.attr[1]];
  const std::string& noun = kNouns[r.attr[2]];
  const std::string& verb = kVerbs[r.attr[3]];
  const std::string& prep = kPreps[r.attr[4]];
  const std::string& place = kPlaces[r.attr[5]];
  switch (template_id) {
    case 0: return {"a", size, colour, noun, verb, prep, "the", place, "."};
    case 1: return {"the", noun, "is", colour, "and", size, "."};
    case 2: return {"there", "is", "a", colour, noun, prep, "the", place, "."};
    case 3: return {"the", size, noun, "also", verb, prep, "the", place, "."};
    case 4: return {"another", colour, noun, "is", size, "."};
    default: return {"there", "is", "a", colour, noun, ".", "it", verb, prep, "the", place, "."};
  }
}

std::size_t pick_template(Rng& rng) {
  static constexpr double kWeights[] = {0.3, 0.2, 0.2, 0.1, 0.1, 0.1};
  double u = rng.uniform();
  for (std::size_t i = 0; i < 6; ++i) {
    if (u < kWeights[i]) return i;
    u -= kWeights[i];
  }
  return 5;
}

double rounded(double x) { return std::round(x * 1e6) / 1e6; }

[[noreturn]] void fail_line(std::size_t line, const std::string& message) {
  throw ValidationError("corpus line " + std::to_string(line) + ": " + message);
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw ValidationError("unknown split '" + text + "' (expected train, val or test)");
}

const std::vector<std::string>& toy_lexicon() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> all;
    for (const auto* list : kAttributeLists) all.insert(all.end(), list->begin(), list->end());
    all.insert(all.end(), kFunction.begin(), kFunction.end());
    return all;
  }();
  return words;
}

std::vector<CorpusRecord> generate_toy_corpus(const ToyCorpusConfig& config) {
  if (config.n_records == 0) throw ContractError("n_records must be at least 1");
  if (config.regions < 3 || config.feature_dim == 0) {
    throw ContractError("toy corpus needs at least 3 regions and a positive feature width");
  }
  Rng grammar(config.grammar_seed);
  Rng feature_rng(config.feature_seed);
  const std::size_t n = config.feature_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));

  // Embedding tables: one per attribute value, plus sentence positions 0..2
  // and the "not described" slot.
  auto table = [&](std::size_t rows) {
    std::vector<std::vector<double>> t(rows, std::vector<double>(n));
    for (auto& row : t) {
      for (double& x : row) x = scale * feature_rng.normal();
    }
    return t;
  };
  std::array<std::vector<std::vector<double>>, kAttributes> attribute_tables;
  for (std::size_t a = 0; a < kAttributes; ++a) attribute_tables[a] = table(kAttributeLists[a]->size());
  const auto position_table = table(4);

  const std::size_t n_val = config.n_records / 10;
  const std::size_t total = config.n_records + 2 * n_val;
  std::vector<CorpusRecord> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    std::vector<Region> regions(config.regions);
    for (auto& r : regions) {
      for (std::size_t a = 0; a < kAttributes; ++a) r.attr[a] = grammar.below(kAttributeLists[a]->size());
    }
    const std::size_t described = 2 + grammar.below(2);
    // Random distinct regions, in sentence order.
    std::vector<std::size_t> order(config.regions);
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[grammar.below(k)]);

    std::vector<std::string> words;
    for (std::size_t s = 0; s < described; ++s) {
      Region& r = regions[order[s]];
      const auto sent = sentence(r, pick_template(grammar));
      if (words.size() + sent.size() > kMaxTokens) break;
      r.order = static_cast<int>(s);
      words.insert(words.end(), sent.begin(), sent.end());
    }

    CorpusRecord rec;
    rec.split = i < config.n_records ? Split::kTrain : (i < config.n_records + n_val ? Split::kVal : Split::kTest);
    rec.id = "toy-" + std::to_string(i);
    std::ostringstream paragraph;
    for (std::size_t w = 0; w < words.size(); ++w) paragraph << (w ? " " : "") << words[w];
    rec.paragraph = paragraph.str();
    std::vector<double> f(config.regions * n);
    for (std::size_t k = 0; k < config.regions; ++k) {
      const Region& r = regions[k];
      const auto& pos = position_table[r.order < 0 ? 3 : static_cast<std::size_t>(r.order)];
      for (std::size_t j = 0; j < n; ++j) {
        double x = pos[j] + config.noise * feature_rng.normal();
        for (std::size_t a = 0; a < kAttributes; ++a) x += attribute_tables[a][r.attr[a]][j];
        f[k * n + j] = rounded(x);
      }
    }
    rec.features.features = numkit::Tensor({config.regions, n}, std::move(f));
    rec.features.image_id = rec.id;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_corpus(std::ostream& out, const std::vector<CorpusRecord>& records) {
  for (const auto& r : records) {
    nlohmann::json features = nlohmann::json::array();
    const auto& t = r.features.features;
    for (std::size_t k = 0; k < t.rows(); ++k) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t.at(k, j));
      features.push_back(std::move(row));
    }
    const nlohmann::json line = {
        {"id", r.id}, {"split", to_string(r.split)}, {"features", std::move(features)}, {"paragraph", r.paragraph}};
    out << line.dump() << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  write_corpus(out, records);
  if (!out) throw IoError("failed while writing corpus file " + path.string());
}

std::vector<const CorpusRecord*> Corpus::split(Split s) const {
  std::vector<const CorpusRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

std::vector<trainer::Example> Corpus::examples(Split s) const {
  std::vector<trainer::Example> out;
  for (const CorpusRecord* r : split(s)) {
    trainer::Example ex;
    ex.features = r->features;
    ex.words = vocabulary.encode(r->paragraph);
    out.push_back(std::move(ex));
  }
  return out;
}

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      fail_line(line_no, std::string("malformed JSON: ") + e.what());
    }
    CorpusRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.paragraph = j.at("paragraph").get<std::string>();
      const auto& rows = j.at("features");
      if (!rows.is_array() || rows.empty()) fail_line(line_no, "features must be a non-empty K x N array");
      const std::size_t k = rows.size();
      const std::size_t n = rows.front().size();
      std::vector<double> values;
      values.reserve(k * n);
      for (const auto& row : rows) {
        if (!row.is_array() || row.size() != n || n == 0) fail_line(line_no, "feature rows must share one non-zero width");
        for (const auto& x : row) values.push_back(x.get<double>());
      }
      r.features.features = numkit::Tensor({k, n}, std::move(values));
      r.features.image_id = r.id;
    } catch (const nlohmann::json::exception& e) {
      fail_line(line_no, std::string("bad record: ") + e.what());
    } catch (const ValidationError& e) {
      fail_line(line_no, e.what());
    }
    if (policies::split_whitespace(r.paragraph).empty()) fail_line(line_no, "empty paragraph");
    try {
      r.features.validate();
    } catch (const ValidationError& e) {
      fail_line(line_no, e.what());
    }
    if (corpus.records.empty()) {
      corpus.regions = r.features.num_regions();
      corpus.feature_dim = r.features.width();
    } else if (r.features.num_regions() != corpus.regions || r.features.width() != corpus.feature_dim) {
      fail_line(line_no, "features are " + std::to_string(r.features.num_regions()) + " x " +
                             std::to_string(r.features.width()) + " but the corpus uses " +
                             std::to_string(corpus.regions) + " x " + std::to_string(corpus.feature_dim));
    }
    corpus.records.push_back(std::move(r));
  }
  if (corpus.records.empty()) throw ValidationError("corpus has no records");
  for (const auto& r : corpus.records) {
    if (r.split != Split::kTrain) continue;
    for (const auto& w : policies::split_whitespace(r.paragraph)) corpus.vocabulary.add(w);
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file " + path.string());
  return parse_corpus(in);
}

}  // namespace offpolicy::dataio
