#include <cmath>
#include <functional>
#include <numeric>

#include "doctest.h"
#include "offpolicy/errors.hpp"
#include "offpolicy/numkit/gradcheck.hpp"
#include "offpolicy/numkit/ops.hpp"
#include "offpolicy/policies/behaviour_policy.hpp"
#include "offpolicy/policies/factory.hpp"
#include "offpolicy/policies/target_policy.hpp"
#include "test_support.hpp"

using namespace offpolicy;
using namespace offpolicy::policies;
using numkit::Tape;
using numkit::Tensor;
using testing::random_tensor;

namespace {

using Vec = std::vector<double>;

Vocabulary toy_vocab(std::size_t content) {
  Vocabulary v;
  for (std::size_t i = 0; i < content; ++i) v.add("w" + std::to_string(i));
  return v;
}

RegionFeatures random_features(Rng& rng, std::size_t k, std::size_t n) {
  return {random_tensor(rng, k, n, false), "img"};
}

void fill_parameters(numkit::ParameterSet& params, const std::function<double()>& value) {
  for (const auto& entry : params.entries()) {
    Tensor t = entry.tensor;
    for (double& x : t.mutable_data()) x = value();
  }
}

void randomize(numkit::ParameterSet& params, Rng& rng, double scale = 0.5) {
  fill_parameters(params, [&] { return rng.uniform(-scale, scale); });
}

BehaviourConfig small_behaviour() { return {3, 4, 2, 6}; }
TargetConfig small_target() { return {4, 2, 2, 5, 3, 6}; }

std::vector<int> random_actions(Rng& rng, const Vocabulary& vocab, std::size_t len) {
  std::vector<int> out;
  for (std::size_t i = 0; i < len; ++i) {
    // Content tokens and UNK only, so EOS cannot appear mid-sequence.
    out.push_back(Vocabulary::kUnk + static_cast<int>(rng.below(vocab.size() - Vocabulary::kUnk)));
  }
  return out;
}

// Plain-loop reference forward passes, independent of the tape ops.

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec row_of(const Tensor& t, std::size_t r) {
  Vec out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

Vec vecmat(const Vec& x, const Tensor& w) {
  Vec out(w.cols(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[i] * w.at(i, j);
  }
  return out;
}

Vec affine_ref(const Vec& x, const Tensor& w, const Tensor& b) {
  Vec out = vecmat(x, w);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += b[j];
  return out;
}

Vec concat(Vec a, const Vec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Vec ref_gru(const Vec& x, const Vec& h, const numkit::GruParams& p) {
  const std::size_t hd = h.size();
  const Vec xw = affine_ref(x, p.w_x, p.b_x);
  const Vec hu = vecmat(h, p.u_zr);
  Vec z(hd), rh(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    z[j] = sigmoid(xw[j] + hu[j]);
    rh[j] = sigmoid(xw[hd + j] + hu[hd + j]) * h[j];
  }
  const Vec cu = vecmat(rh, p.u_c);
  Vec out(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    out[j] = (1.0 - z[j]) * h[j] + z[j] * std::tanh(xw[2 * hd + j] + cu[j]);
  }
  return out;
}

Vec ref_softmax(const Vec& x) {
  const double m = *std::max_element(x.begin(), x.end());
  Vec out(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += out[i] = std::exp(x[i] - m);
  for (double& v : out) v /= s;
  return out;
}

Vec ref_encode(const BehaviourPolicy& b, std::span<const int> tokens) {
  Vec h(b.config().hidden_dim, 0.0);
  for (int t : tokens) h = ref_gru(row_of(b.embedding(), t), h, b.encoder());
  return h;
}

Vec ref_attend(const Tensor& f, const Vec& h_e, const Vec& h, const Tensor& w) {
  const std::size_t k = f.rows(), n = f.cols();
  Vec scores(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const Vec joint = concat(concat(row_of(f, i), h_e), h);
    for (std::size_t j = 0; j < joint.size(); ++j) scores[i] += joint[j] * w[j];
  }
  const Vec alpha = ref_softmax(scores);
  Vec out(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += alpha[i] * f.at(i, j);
  }
  return out;
}

// Logit rows of the behaviour policy teacher-forced on `tokens`.
std::vector<Vec> ref_behaviour_logits(const BehaviourPolicy& b, const RegionFeatures& f,
                                      std::span<const int> guide, std::span<const int> tokens) {
  const Vec h_e = ref_encode(b, guide);
  Vec h = h_e;
  int prev = Vocabulary::kBos;
  std::vector<Vec> rows;
  for (int tok : tokens) {
    const Vec x = concat(ref_attend(f.features, h_e, h, b.w_alpha()), row_of(b.embedding(), prev));
    h = ref_gru(x, h, b.decoder());
    rows.push_back(affine_ref(h, b.output().weight, b.output().bias));
    prev = tok;
  }
  return rows;
}

using Rows = std::vector<Vec>;

Rows ref_linear(const Rows& x, const numkit::ParameterSet& ps, const std::string& prefix) {
  Rows out;
  for (const auto& r : x) out.push_back(affine_ref(r, ps.get(prefix + ".weight"), ps.get(prefix + ".bias")));
  return out;
}

Rows ref_attention(const Rows& queries, const Rows& memory, const numkit::ParameterSet& ps,
                   const std::string& prefix, std::size_t heads, bool causal) {
  const Rows q = ref_linear(queries, ps, prefix + ".query");
  const Rows k = ref_linear(memory, ps, prefix + ".key");
  const Rows v = ref_linear(memory, ps, prefix + ".value");
  const std::size_t d = q[0].size(), w = d / heads;
  Rows merged(q.size(), Vec(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const std::size_t visible = causal ? i + 1 : k.size();
      Vec scores(visible, 0.0);
      for (std::size_t j = 0; j < visible; ++j) {
        for (std::size_t c = h * w; c < (h + 1) * w; ++c) scores[j] += q[i][c] * k[j][c];
        scores[j] /= std::sqrt(static_cast<double>(w));
      }
      const Vec a = ref_softmax(scores);
      for (std::size_t j = 0; j < visible; ++j) {
        for (std::size_t c = h * w; c < (h + 1) * w; ++c) merged[i][c] += a[j] * v[j][c];
      }
    }
  }
  return ref_linear(merged, ps, prefix + ".output");
}

Rows ref_add_norm(const Rows& x, const Rows& y, const numkit::ParameterSet& ps,
                  const std::string& prefix) {
  const Tensor& g = ps.get(prefix + ".gain");
  const Tensor& b = ps.get(prefix + ".bias");
  Rows out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec s(x[i].size());
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = x[i][c] + y[i][c];
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= s.size();
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = (s[c] - mean) / std::sqrt(var + 1e-5) * g[c] + b[c];
    out.push_back(s);
  }
  return out;
}

Rows ref_target_logits(const TargetPolicy& p, const RegionFeatures& f, std::span<const int> tokens) {
  const auto& ps = p.parameters();
  const auto& cfg = p.config();
  Rows memory;
  for (std::size_t i = 0; i < f.num_regions(); ++i) memory.push_back(row_of(f.features, i));
  memory = ref_linear(memory, ps, "target.memory");
  for (auto& r : memory) for (double& v : r) v = std::max(v, 0.0);
  Rows x;
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Vec e = row_of(ps.get("target.token_embedding"), prev);
    const Vec pos = row_of(ps.get("target.position_embedding"), t);
    for (std::size_t c = 0; c < e.size(); ++c) e[c] += pos[c];
    x.push_back(e);
    prev = tokens[t];
  }
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "target.layer" + std::to_string(l);
    x = ref_add_norm(x, ref_attention(x, x, ps, pre + ".self", cfg.heads, true), ps, pre + ".norm_self");
    x = ref_add_norm(x, ref_attention(x, memory, ps, pre + ".cross", cfg.heads, false), ps,
                     pre + ".norm_cross");
    Rows inner = ref_linear(x, ps, pre + ".ff.inner");
    for (auto& r : inner) for (double& v : r) v = std::max(v, 0.0);
    x = ref_add_norm(x, ref_linear(inner, ps, pre + ".ff.outer"), ps, pre + ".norm_ff");
  }
  return ref_linear(x, ps, "target.output");
}

void check_rows_match(const Tensor& logits, const Rows& expected, const Vocabulary& vocab) {
  REQUIRE(logits.rows() == expected.size());
  for (std::size_t t = 0; t < expected.size(); ++t) {
    for (std::size_t a = 0; a < vocab.size(); ++a) {
      if (a == Vocabulary::kPad || a == Vocabulary::kBos) {
        CHECK(logits.at(t, a) < -1e29);
      } else {
        CHECK(logits.at(t, a) == doctest::Approx(expected[t][a]).epsilon(1e-12));
      }
    }
  }
}

// Policy with fixed logits, for rollout contracts.
class FixedPolicy final : public Policy {
 public:
  FixedPolicy(Vocabulary vocab, Vec logits) : vocab_(std::move(vocab)), logits_(std::move(logits)) {}
  std::string kind() const override { return "fixed"; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t max_length() const override { return 8; }
  numkit::ParameterSet& parameters() override { return params_; }
  const numkit::ParameterSet& parameters() const override { return params_; }
  nlohmann::json config_json() const override { return {}; }
  PolicyState initial_state(Tape&, const Observation& obs) const override {
    return {&obs.features, {Vocabulary::kBos}, nullptr};
  }
  Tensor step_logits(Tape&, PolicyState&) const override { return Tensor::row(logits_); }
  Tensor sequence_logits(Tape& tape, const Observation&, std::span<const int> tokens) const override {
    return numkit::repeat_rows(tape, Tensor::row(logits_), tokens.size());
  }

 private:
  Vocabulary vocab_;
  Vec logits_;
  numkit::ParameterSet params_;
};

// Applies a strictly increasing map to another policy's logits.
class MonotonePolicy final : public Policy {
 public:
  MonotonePolicy(const Policy& inner, std::function<double(double)> f) : inner_(inner), f_(std::move(f)) {}
  std::string kind() const override { return "monotone"; }
  const Vocabulary& vocabulary() const override { return inner_.vocabulary(); }
  std::size_t max_length() const override { return inner_.max_length(); }
  numkit::ParameterSet& parameters() override { return params_; }
  const numkit::ParameterSet& parameters() const override { return params_; }
  nlohmann::json config_json() const override { return {}; }
  PolicyState initial_state(Tape& tape, const Observation& obs) const override {
    return inner_.initial_state(tape, obs);
  }
  Tensor step_logits(Tape& tape, PolicyState& state) const override {
    const Tensor inner = inner_.step_logits(tape, state);
    Vec v(inner.data().begin(), inner.data().end());
    for (double& x : v) x = f_(x);
    return Tensor::row(std::move(v));
  }
  Tensor sequence_logits(Tape& tape, const Observation& obs, std::span<const int> tokens) const override {
    return inner_.sequence_logits(tape, obs, tokens);
  }

 private:
  const Policy& inner_;
  std::function<double(double)> f_;
  numkit::ParameterSet params_;
};

}  // namespace

TEST_CASE("vocabulary") {
  Vocabulary v({"a", "dog", "a"});
  CHECK(v.size() == 6);
  CHECK(v.token(v.id("dog")) == "dog");
  CHECK(v.id("cat") == v.unk_id());
  CHECK(v.is_reserved(v.eos_id()));
  CHECK_FALSE(v.is_reserved(v.id("a")));
  CHECK(v.decode(v.encode("  a dog\tdog ")) == "a dog dog");
  const int ids[] = {Vocabulary::kBos, 4, Vocabulary::kPad, 5, Vocabulary::kEos, 4};
  CHECK(v.decode(ids) == "a dog");
  CHECK_THROWS_AS(v.token(99), ContractError);
  CHECK_THROWS_AS(TargetPolicy(Vocabulary(), small_target(), 1), ContractError);
  CHECK_THROWS_AS(BehaviourPolicy(Vocabulary(), small_behaviour(), 1), ContractError);
}

TEST_CASE("visual attention") {
  Tape tape(false);
  Rng rng(3);
  SUBCASE("single region returns that region") {
    const Tensor f = random_tensor(rng, 1, 5, false);
    const Tensor out = visual_attend(tape, f, random_tensor(rng, 1, 2, false),
                                     random_tensor(rng, 1, 2, false), random_tensor(rng, 9, 1, false));
    for (std::size_t j = 0; j < 5; ++j) CHECK(out[j] == f[j]);
  }
  SUBCASE("zero weights average the regions") {
    const Tensor f = random_tensor(rng, 4, 3, false);
    const Tensor out = visual_attend(tape, f, random_tensor(rng, 1, 2, false),
                                     random_tensor(rng, 1, 2, false), Tensor::zeros({7, 1}));
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out[j] == doctest::Approx((f.at(0, j) + f.at(1, j) + f.at(2, j) + f.at(3, j)) / 4).epsilon(1e-14));
    }
  }
  SUBCASE("two regions by hand") {
    // Scores -0.2 and 0.2, so alpha_2 = sigmoid(0.4).
    const Tensor f({2, 1}, {1.0, 3.0});
    const Tensor w({3, 1}, {0.2, 0.4, 0.6});
    const Tensor alpha = visual_attention_weights(tape, f, Tensor::row({0.5}), Tensor::row({-1.0}), w);
    CHECK(alpha[1] == doctest::Approx(0.598687660112452000369).epsilon(1e-14));
    const Tensor out = visual_attend(tape, f, Tensor::row({0.5}), Tensor::row({-1.0}), w);
    CHECK(out.item() == doctest::Approx(2.19737532022490400074).epsilon(1e-14));
  }
  SUBCASE("weights sum to one") {
    for (int i = 0; i < 20; ++i) {
      const std::size_t k = testing::random_dim(rng), n = testing::random_dim(rng), m = testing::random_dim(rng);
      const Tensor a = visual_attention_weights(tape, random_tensor(rng, k, n, false, 3.0),
                                                random_tensor(rng, 1, m, false), random_tensor(rng, 1, m, false),
                                                random_tensor(rng, n + 2 * m, 1, false, 3.0));
      double s = 0.0;
      for (double x : a.data()) s += x;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("dimension mismatch names L, N and M") {
    const Tensor f = random_tensor(rng, 3, 4, false);
    try {
      visual_attend(tape, f, random_tensor(rng, 1, 2, false), random_tensor(rng, 1, 2, false),
                    random_tensor(rng, 7, 1, false));
      FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("L = 7") != std::string::npos);
      CHECK(msg.find("N = 4") != std::string::npos);
      CHECK(msg.find("M = 2") != std::string::npos);
    }
  }
}

TEST_CASE("behaviour encoder") {
  Rng rng(5);
  BehaviourPolicy b(toy_vocab(4), small_behaviour(), 11);
  Tape tape(false);
  SUBCASE("zero weights give a zero encoding") {
    fill_parameters(b.parameters(), [] { return 0.0; });
    const int toks[] = {4, 5, 6};
    const Tensor h = b.encode_paragraph(tape, toks);
    for (double x : h.data()) CHECK(x == 0.0);
  }
  SUBCASE("one and three tokens match the unrolled cell") {
    randomize(b.parameters(), rng);
    for (std::vector<int> toks : {std::vector<int>{5}, std::vector<int>{4, 7, 3}}) {
      const Tensor h = b.encode_paragraph(tape, toks);
      const Vec expected = ref_encode(b, toks);
      for (std::size_t j = 0; j < expected.size(); ++j) CHECK(h[j] == doctest::Approx(expected[j]).epsilon(1e-13));
    }
  }
  SUBCASE("unknown ids are rejected") {
    const int toks[] = {4, 42};
    CHECK_THROWS_AS(b.encode_paragraph(tape, toks), ContractError);
    CHECK_THROWS_AS(b.encode_paragraph(tape, std::span<const int>{}), ContractError);
  }
}

TEST_CASE("behaviour decoder") {
  Rng rng(8);
  BehaviourPolicy b(toy_vocab(4), small_behaviour(), 12);
  randomize(b.parameters(), rng);
  const RegionFeatures f = random_features(rng, 3, 2);
  const std::vector<int> guide = {5, 4, 7, Vocabulary::kEos};
  const Observation obs{f, guide};

  SUBCASE("decoder starts from the encoding") {
    Tape tape(false);
    PolicyState s = b.initial_state(tape, obs);
    CHECK(b.last_hidden(s).same_storage(b.encoding(s)));
    const Vec h_e = ref_encode(b, guide);
    for (std::size_t j = 0; j < h_e.size(); ++j) CHECK(b.last_hidden(s)[j] == doctest::Approx(h_e[j]).epsilon(1e-13));
  }
  SUBCASE("teacher-forced and stepwise logits match the unroll") {
    const std::vector<int> toks = {6, 4, Vocabulary::kEos};
    const Rows expected = ref_behaviour_logits(b, f, guide, toks);
    Tape tape(false);
    check_rows_match(b.sequence_logits(tape, obs, toks), expected, b.vocabulary());
    PolicyState s = b.initial_state(tape, obs);
    for (std::size_t t = 0; t < toks.size(); ++t) {
      check_rows_match(policy_step_logits(tape, b, s), {expected[t]}, b.vocabulary());
      s.prefix.push_back(toks[t]);
    }
  }
}

TEST_CASE("target forward matches a plain-loop reference") {
  Rng rng(21);
  for (std::size_t heads : {1u, 2u}) {
    TargetConfig cfg = small_target();
    cfg.heads = heads;
    TargetPolicy p(toy_vocab(3), cfg, 4);
    randomize(p.parameters(), rng);
    const RegionFeatures f = random_features(rng, 4, 3);
    const std::vector<int> toks = {5, 3, 6, 4};
    Tape tape(false);
    const Rows expected = ref_target_logits(p, f, toks);
    check_rows_match(p.sequence_logits(tape, {f}, toks), expected, p.vocabulary());
    PolicyState s = p.initial_state(tape, {f});
    for (std::size_t t = 0; t < toks.size(); ++t) {
      check_rows_match(policy_step_logits(tape, p, s), {expected[t]}, p.vocabulary());
      s.prefix.push_back(toks[t]);
    }
  }
}

TEST_CASE("zero parameters give the uniform policy") {
  Rng rng(2);
  const RegionFeatures f = random_features(rng, 3, 3);
  const std::vector<int> guide = {4, 5};
  BehaviourPolicy b(toy_vocab(5), {3, 4, 3, 6}, 1);
  TargetPolicy p(toy_vocab(5), small_target(), 1);
  for (Policy* policy : std::initializer_list<Policy*>{&b, &p}) {
    fill_parameters(policy->parameters(), [] { return 0.0; });
    const double actions = static_cast<double>(policy->vocabulary().size() - 2);
    Tape tape(false);
    PolicyState s = policy->initial_state(tape, {f, guide});
    const auto probs = numkit::softmax_values(policy_step_logits(tape, *policy, s).data());
    for (std::size_t a = Vocabulary::kEos; a < probs.size(); ++a) CHECK(probs[a] == doctest::Approx(1.0 / actions).epsilon(1e-15));
    const std::vector<int> toks = {4, 8, 3, Vocabulary::kEos};
    const Tensor lps = sequence_log_probs(tape, *policy, {f, guide}, toks);
    for (double lp : lps.data()) {
      CHECK(lp == doctest::Approx(-std::log(actions)).epsilon(1e-14));
    }
  }
}

TEST_CASE("distribution properties") {
  Rng rng(9);
  const RegionFeatures f = random_features(rng, 4, 3);
  const std::vector<int> guide = {4, 6, 5};
  BehaviourPolicy b(toy_vocab(5), {3, 4, 3, 6}, 2);
  TargetPolicy p(toy_vocab(5), small_target(), 2);
  for (Policy* policy : std::initializer_list<Policy*>{&b, &p}) {
    randomize(policy->parameters(), rng, 1.0);
    const Observation obs{f, guide};
    Tape tape(false);
    SUBCASE("deterministic logits") {
      PolicyState s1 = policy->initial_state(tape, obs);
      PolicyState s2 = policy->initial_state(tape, obs);
      s1.prefix = s2.prefix = {Vocabulary::kBos, 5, 7};
      const Tensor a = policy_step_logits(tape, *policy, s1);
      const Tensor c = policy_step_logits(tape, *policy, s2);
      CHECK(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
    }
    SUBCASE("step distributions normalize") {
      PolicyState s = policy->initial_state(tape, obs);
      for (int tok : {4, 8, 3, 6, 5}) {
        const auto probs = numkit::softmax_values(policy_step_logits(tape, *policy, s).data());
        double total = 0.0;
        for (std::size_t a = 0; a < probs.size(); ++a) {
          total += probs[a];
          if (a != Vocabulary::kPad && a != Vocabulary::kBos) CHECK(probs[a] > 0.0);
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
        s.prefix.push_back(tok);
      }
    }
    SUBCASE("length-one sequences carry all the mass") {
      double total = 0.0;
      for (int a = Vocabulary::kEos; a < static_cast<int>(policy->vocabulary().size()); ++a) {
        const int seq[] = {a};
        total += std::exp(sequence_log_probs(tape, *policy, obs, seq).item());
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    SUBCASE("rollout log-probs match teacher forcing") {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Rollout r = rollout(*policy, obs, DecodeMode::kMultinomial, 6, seed);
        CHECK(r.token_ids.size() == r.step_log_probs.size());
        const Tensor lp = sequence_log_probs(tape, *policy, obs, r.token_ids);
        for (std::size_t t = 0; t < r.token_ids.size(); ++t) {
          CHECK(r.step_log_probs[t] <= 0.0);
          CHECK(std::abs(lp[t] - r.step_log_probs[t]) <= 1e-10);
        }
      }
    }
    SUBCASE("greedy decoding ignores monotone logit maps") {
      const MonotonePolicy warped(*policy, [](double x) { return 7.0 * std::atan(x) - 3.0; });
      for (int i = 0; i < 5; ++i) {
        randomize(policy->parameters(), rng, 1.5);
        CHECK(rollout(*policy, obs, DecodeMode::kGreedy, 6).token_ids ==
              rollout(warped, obs, DecodeMode::kGreedy, 6).token_ids);
      }
    }
  }
}

TEST_CASE("rollout contracts") {
  Rng rng(1);
  const RegionFeatures f = random_features(rng, 2, 2);
  const Observation obs{f};
  SUBCASE("a dominant logit wins in both modes") {
    Vec logits(7, 0.0);
    logits[5] = 1e6;
    const FixedPolicy p(toy_vocab(3), logits);
    for (auto mode : {DecodeMode::kGreedy, DecodeMode::kMultinomial}) {
      const Rollout r = rollout(p, obs, mode, 3, 17);
      CHECK(r.token_ids == std::vector<int>{5, 5, 5});
      CHECK(r.mode == mode);
    }
  }
  SUBCASE("greedy ties go to the lowest id") {
    const FixedPolicy p(toy_vocab(3), {0, 0, 1, 0, 3, 3, 3});
    CHECK(rollout(p, obs, DecodeMode::kGreedy, 2).token_ids == std::vector<int>{4, 4});
  }
  SUBCASE("same seed, same sample") {
    TargetPolicy p(toy_vocab(6), small_target(), 3);
    const RegionFeatures g = random_features(rng, 2, 3);
    const Rollout a = rollout(p, {g}, DecodeMode::kMultinomial, 6, 99);
    const Rollout b = rollout(p, {g}, DecodeMode::kMultinomial, 6, 99);
    CHECK(a.token_ids == b.token_ids);
    CHECK(a.step_log_probs == b.step_log_probs);
  }
  SUBCASE("uniform policy golden samples") {
    // Four actions (EOS, UNK and two words); expected tokens come from an
    // independent MT19937-64 implementation in tests/oracles.
    TargetPolicy p(toy_vocab(2), small_target(), 3);
    fill_parameters(p.parameters(), [] { return 0.0; });
    const RegionFeatures g = random_features(rng, 2, 3);
    CHECK(rollout(p, {g}, DecodeMode::kMultinomial, 2, 0).token_ids == std::vector<int>{2});
    CHECK(rollout(p, {g}, DecodeMode::kMultinomial, 2, 7).token_ids == std::vector<int>{5, 5});
    CHECK(rollout(p, {g}, DecodeMode::kMultinomial, 2, 2024).token_ids == std::vector<int>{4, 5});
    for (double lp : rollout(p, {g}, DecodeMode::kMultinomial, 2, 7).step_log_probs) {
      CHECK(lp == doctest::Approx(-std::log(4.0)).epsilon(1e-15));
    }
  }
  SUBCASE("T_max bounds the length") {
    const FixedPolicy p(toy_vocab(3), Vec(7, 0.0));
    CHECK(rollout(p, obs, DecodeMode::kMultinomial, 1, 5).token_ids.size() == 1);
    CHECK_THROWS_AS(rollout(p, obs, DecodeMode::kGreedy, 0), ContractError);
  }
}

TEST_CASE("malformed inputs") {
  Rng rng(4);
  TargetPolicy p(toy_vocab(3), small_target(), 3);
  const RegionFeatures f = random_features(rng, 2, 3);
  Tape tape(false);
  SUBCASE("prefix longer than T_max") {
    PolicyState s = p.initial_state(tape, {f});
    s.prefix.assign(p.max_length() + 1, 4);
    s.prefix.front() = Vocabulary::kBos;
    CHECK_THROWS_AS(policy_step_logits(tape, p, s), ContractError);
    s.prefix.resize(p.max_length());
    CHECK_NOTHROW(policy_step_logits(tape, p, s));
  }
  SUBCASE("bad prefixes") {
    PolicyState s = p.initial_state(tape, {f});
    s.prefix = {4, 5};
    CHECK_THROWS_AS(policy_step_logits(tape, p, s), ContractError);
    s.prefix = {Vocabulary::kBos, Vocabulary::kPad};
    CHECK_THROWS_AS(policy_step_logits(tape, p, s), ContractError);
  }
  SUBCASE("bad sequences") {
    for (std::vector<int> toks : {std::vector<int>{}, std::vector<int>{4, Vocabulary::kPad},
                                  std::vector<int>{Vocabulary::kEos, 4}, std::vector<int>{4, 77},
                                  std::vector<int>(p.max_length() + 1, 4)}) {
      CHECK_THROWS_AS(sequence_log_probs(tape, p, {f}, toks), ContractError);
    }
  }
  SUBCASE("feature width") {
    const RegionFeatures wrong = random_features(rng, 2, 5);
    CHECK_THROWS_AS(p.initial_state(tape, {wrong}), DimensionError);
    BehaviourPolicy b(toy_vocab(3), small_behaviour(), 1);
    const int guide[] = {4};
    CHECK_THROWS_AS(b.initial_state(tape, {wrong, guide}), DimensionError);
  }
  SUBCASE("behaviour needs a guide") {
    BehaviourPolicy b(toy_vocab(3), small_behaviour(), 1);
    const RegionFeatures g = random_features(rng, 2, 2);
    CHECK_THROWS_AS(b.initial_state(tape, {g}), ContractError);
  }
  SUBCASE("non-finite features") {
    RegionFeatures bad = random_features(rng, 2, 3);
    bad.features.mutable_data()[1] = std::nan("");
    CHECK_THROWS_AS(p.initial_state(tape, {bad}), ValidationError);
  }
}

TEST_CASE("policies rebuild from their config") {
  Rng rng(6);
  BehaviourPolicy b(toy_vocab(4), small_behaviour(), 5);
  TargetPolicy t(toy_vocab(4), small_target(), 5);
  const RegionFeatures f2 = random_features(rng, 3, 2);
  const RegionFeatures f3 = random_features(rng, 3, 3);
  const std::vector<int> guide = {4, 5}, toks = {6, 3, Vocabulary::kEos};
  for (auto [policy, features] : {std::pair<Policy*, const RegionFeatures*>{&b, &f2}, {&t, &f3}}) {
    randomize(policy->parameters(), rng);
    auto copy = make_policy(policy->config_json());
    CHECK(copy->kind() == policy->kind());
    CHECK(copy->vocabulary().content_tokens() == policy->vocabulary().content_tokens());
    copy->parameters().copy_values_from(policy->parameters());
    Tape tape(false);
    const Tensor a = sequence_log_probs(tape, *policy, {*features, guide}, toks);
    const Tensor c = sequence_log_probs(tape, *copy, {*features, guide}, toks);
    CHECK(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
  }
  CHECK_THROWS_AS(make_policy({{"kind", "lstm"}}), ValidationError);
}

TEST_CASE("policy gradients match finite differences") {
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-4;
  Rng rng(31);
  auto check_policy = [&](Policy& policy, std::size_t width) {
    for (int i = 0; i < kInstances; ++i) {
      randomize(policy.parameters(), rng);
      const RegionFeatures f = random_features(rng, 3, width);
      const std::vector<int> guide = random_actions(rng, policy.vocabulary(), 3);
      std::vector<int> toks = random_actions(rng, policy.vocabulary(), 3);
      toks.push_back(Vocabulary::kEos);
      const Vec w = testing::random_weights(rng, toks.size());
      auto loss = [&](Tape& tape) {
        return numkit::dot_const(tape, sequence_log_probs(tape, policy, {f, guide}, toks), w);
      };
      const auto report = numkit::gradcheck(loss, policy.parameters().entries(), 1e-5, 6, i);
      INFO(policy.kind() << " instance " << i << " worst entry " << report.worst_entry);
      CHECK(report.max_rel_error < kTol);
    }
  };
  SUBCASE("behaviour") {
    BehaviourPolicy b(toy_vocab(3), small_behaviour(), 7);
    check_policy(b, 2);
  }
  SUBCASE("target") {
    TargetPolicy t(toy_vocab(3), small_target(), 7);
    check_policy(t, 3);
  }
}
