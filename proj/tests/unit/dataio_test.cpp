#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "offpolicy/dataio/checkpoint.hpp"
#include "offpolicy/dataio/corpus.hpp"
#include "offpolicy/dataio/csv.hpp"
#include "offpolicy/errors.hpp"
#include "offpolicy/policies/behaviour_policy.hpp"
#include "offpolicy/policies/target_policy.hpp"
#include "test_support.hpp"

using namespace offpolicy;
using namespace offpolicy::dataio;

namespace {

std::string serialize(const std::vector<CorpusRecord>& records) {
  std::ostringstream out;
  write_corpus(out, records);
  return out.str();
}

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

ToyCorpusConfig small_corpus(std::size_t n) {
  ToyCorpusConfig c;
  c.n_records = n;
  c.feature_dim = 16;
  return c;
}

std::string validation_message(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("toy corpus generation is deterministic and well formed") {
  const auto a = generate_toy_corpus(small_corpus(40));
  CHECK(serialize(a) == serialize(generate_toy_corpus(small_corpus(40))));
  auto other = small_corpus(40);
  other.feature_seed = 99;
  CHECK(serialize(generate_toy_corpus(other)) != serialize(a));

  REQUIRE(a.size() == 48);
  CHECK(a[39].split == Split::kTrain);
  CHECK(a[40].split == Split::kVal);
  CHECK(a[47].split == Split::kTest);
  const auto& lexicon = toy_lexicon();
  CHECK(lexicon.size() == 60);
  const std::set<std::string> words(lexicon.begin(), lexicon.end());
  CHECK(words.size() == 60);
  for (const auto& r : a) {
    const auto tokens = policies::split_whitespace(r.paragraph);
    CHECK(tokens.size() >= 8);
    CHECK(tokens.size() <= 24);
    for (const auto& t : tokens) CHECK(words.count(t) == 1);
    CHECK(r.features.num_regions() == 8);
    CHECK(r.features.width() == 16);
  }
  CHECK(generate_toy_corpus(small_corpus(1)).size() == 1);
  CHECK_THROWS_AS(generate_toy_corpus(small_corpus(0)), ContractError);
}

TEST_CASE("corpus round trip preserves every token and feature") {
  const auto records = generate_toy_corpus(small_corpus(30));
  const Corpus corpus = parse(serialize(records));
  REQUIRE(corpus.records.size() == records.size());
  CHECK(corpus.regions == 8);
  CHECK(corpus.feature_dim == 16);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(corpus.records[i].id == records[i].id);
    CHECK(corpus.records[i].split == records[i].split);
    CHECK(corpus.records[i].paragraph == records[i].paragraph);
    const auto x = corpus.records[i].features.features.data();
    const auto y = records[i].features.features.data();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  const auto train = corpus.examples(Split::kTrain);
  CHECK(train.size() == 30);
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(corpus.vocabulary.decode(train[i].words) == records[i].paragraph);
  }
  CHECK(serialize(corpus.records) == serialize(records));
}

TEST_CASE("vocabulary comes from the training split only") {
  const std::string text =
      R"({"id":"a","split":"train","features":[[1,2],[3,4]],"paragraph":"the red dog"})" "\n"
      R"({"id":"b","split":"train","features":[[0,0],[0,1]],"paragraph":"a dog runs the"})" "\n"
      "\n"
      R"({"id":"c","split":"val","features":[[0,0],[0,1]],"paragraph":"a cat sleeps"})" "\n";
  const Corpus corpus = parse(text);
  // Distinct training tokens: the red dog a runs, plus four reserved ids.
  CHECK(corpus.vocabulary.size() == 5 + 4);
  CHECK(corpus.vocabulary.content_tokens() == std::vector<std::string>{"the", "red", "dog", "a", "runs"});
  const auto val = corpus.examples(Split::kVal);
  REQUIRE(val.size() == 1);
  CHECK(val[0].words == std::vector<int>{corpus.vocabulary.id("a"), policies::Vocabulary::kUnk,
                                         policies::Vocabulary::kUnk});
  CHECK(corpus.split(Split::kTest).empty());
}

TEST_CASE("malformed corpora are rejected with line numbers") {
  const std::string good = R"({"id":"a","split":"train","features":[[1,2]],"paragraph":"x y"})";
  CHECK_THROWS_AS(parse(""), ValidationError);
  CHECK(validation_message(good + "\n{not json\n").find("line 2") != std::string::npos);
  CHECK(validation_message(good + "\n" + R"({"id":"b","split":"train","features":[[1,2,3]],"paragraph":"x"})")
            .find("line 2") != std::string::npos);
  CHECK(validation_message(R"({"id":"b","split":"dev","features":[[1,2]],"paragraph":"x"})").find("line 1") !=
        std::string::npos);
  CHECK(validation_message(R"({"id":"b","split":"train","features":[[1,2]],"paragraph":"  "})").find("empty paragraph") !=
        std::string::npos);
  CHECK(validation_message(R"({"id":"b","split":"train","features":[[1],[2,3]],"paragraph":"x"})").find("line 1") !=
        std::string::npos);
  CHECK(validation_message(R"({"split":"train","features":[[1,2]],"paragraph":"x"})").find("line 1") !=
        std::string::npos);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), IoError);
}

TEST_CASE("checkpoints round-trip bit for bit and detect damage") {
  const auto corpus = parse(serialize(generate_toy_corpus(small_corpus(12))));
  policies::TargetPolicy target(corpus.vocabulary, {16, 2, 1, 32, 16, 12}, 4);
  Rng rng(9);
  rng.uniform();
  const auto dir = testing::scratch_dir("dataio");
  save_policy(dir / "t.ckpt", target, {{"note", "x"}}, rng.state());

  const Checkpoint loaded = load_checkpoint(dir / "t.ckpt");
  CHECK(loaded.config.at("note") == "x");
  Rng restored;
  restored.restore(loaded.rng_state);
  CHECK(restored.next_u64() == rng.next_u64());
  save_checkpoint(dir / "u.ckpt", loaded);
  std::ifstream a(dir / "t.ckpt", std::ios::binary), b(dir / "u.ckpt", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string again((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(bytes == again);

  const auto copy = policy_from_checkpoint(loaded);
  CHECK(copy->parameters().values_equal(target.parameters()));
  const auto val = corpus.examples(Split::kTrain);
  const auto m1 = trainer::evaluate(target, val);
  const auto m2 = trainer::evaluate(*copy, val);
  CHECK(m1.cider == m2.cider);
  CHECK(m1.bleu == m2.bleu);

  policies::BehaviourPolicy behaviour(corpus.vocabulary, {8, 8, 16, 12}, 2);
  save_policy(dir / "b.ckpt", behaviour);
  const auto b2 = load_policy(dir / "b.ckpt");
  CHECK(b2->kind() == "behaviour");
  CHECK(b2->parameters().values_equal(behaviour.parameters()));

  SUBCASE("tampered length prefix") {
    std::string bad = bytes;
    bad[8] = static_cast<char>(bad[8] + 1);  // low byte of the config length
    CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("integrity"), ValidationError);
  }
  SUBCASE("truncation") {
    CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), doctest::Contains("integrity"),
                         ValidationError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 6)), ValidationError);
  }
  SUBCASE("version and magic") {
    std::string bad = bytes;
    bad[4] = 7;
    CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("version"), ValidationError);
    bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("magic"), ValidationError);
  }
  SUBCASE("parameter mismatch") {
    policies::TargetPolicy wider(corpus.vocabulary, {32, 2, 1, 32, 16, 12}, 4);
    CHECK_THROWS_AS(restore_parameters(wider.parameters(), loaded), ValidationError);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("training with a fixed seed gives bit-identical checkpoints") {
  const auto corpus = parse(serialize(generate_toy_corpus(small_corpus(10))));
  const auto train = corpus.examples(Split::kTrain);
  trainer::TrainConfig config;
  config.behaviour_epochs = 1;
  config.batch_size = 4;
  std::string first;
  for (int run = 0; run < 2; ++run) {
    policies::BehaviourPolicy behaviour(corpus.vocabulary, {8, 8, 16, 30}, 5);
    trainer::train_behaviour(behaviour, train, {}, config);
    const auto bytes = encode_checkpoint(make_checkpoint(behaviour.parameters(), behaviour.config_json(), ""));
    if (run == 0) {
      first = bytes;
    } else {
      CHECK(bytes == first);
    }
  }
}

TEST_CASE("MLE on a 500-record toy corpus beats an untrained target on validation perplexity") {
  ToyCorpusConfig c;
  c.n_records = 500;
  const auto corpus = parse(serialize(generate_toy_corpus(c)));
  const auto train = corpus.examples(Split::kTrain);
  const auto val = corpus.examples(Split::kVal);
  policies::TargetPolicy target(corpus.vocabulary, {}, 3);
  const double untrained = trainer::perplexity(target, val);
  trainer::TrainConfig config;
  config.mle_epochs = 1;
  trainer::pretrain_mle(target, train, {}, config);
  CHECK(trainer::perplexity(target, val) < untrained);
}

TEST_CASE("CSV writers use fixed headers") {
  std::ostringstream log;
  const std::vector<trainer::LogRow> rows = {{3, 1.5, 0.25, -0.5, 1.0, 0.0, 0.125}};
  write_train_log(log, rows);
  CHECK(log.str() == "iteration,loss_total,loss_mle,advantage_mean,ratio_mean,ratio_var,kl_mean\n3,1.5,0.25,-0.5,1,0,0.125\n");
  std::ostringstream metrics;
  trainer::Metrics m;
  m.bleu = {1.0, 0.5, 0.25, 0.125};
  m.cider = 2.0;
  m.count = 4;
  const std::vector<MetricsRow> mrows = {{"test", m}};
  write_metrics(metrics, mrows);
  CHECK(metrics.str() == "split,count,bleu1,bleu2,bleu3,bleu4,cider\ntest,4,1,0.5,0.25,0.125,2\n");
  std::ostringstream epochs;
  const std::vector<trainer::EpochSummary> erows = {{0, 2.5, 0.75}};
  write_epochs(epochs, erows);
  CHECK(epochs.str() == "epoch,train_loss,val_score\n0,2.5,0.75\n");
  CHECK_THROWS_AS(write_file("/nonexistent/dir/x.csv", [](std::ostream&) {}), IoError);
}
