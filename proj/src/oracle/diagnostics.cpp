#include "offpolicy/oracle/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

#include "offpolicy/estimators/estimators.hpp"
#include "offpolicy/numkit/gradcheck.hpp"
#include "offpolicy/numkit/layers.hpp"
#include "offpolicy/policies/behaviour_policy.hpp"
#include "offpolicy/policies/target_policy.hpp"
#include "offpolicy/random.hpp"

namespace offpolicy::oracle {

using numkit::NamedTensor;
using numkit::Tape;
using numkit::Tensor;

namespace {

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0,
                     bool requires_grad = true) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor({rows, cols}, std::move(v), requires_grad);
}

// Values bounded away from zero so relu's kink never sits inside a difference step.
Tensor off_kink_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = random_tensor(rng, rows, cols);
  for (double& x : t.mutable_data()) x = std::copysign(0.05 + std::abs(x), x);
  return t;
}

std::size_t dim(Rng& rng, std::size_t max_dim = 6) { return 1 + static_cast<std::size_t>(rng.below(max_dim)); }

std::vector<int> ids(Rng& rng, std::size_t n, std::size_t range) {
  std::vector<int> out(n);
  for (int& id : out) id = static_cast<int>(rng.below(range));
  return out;
}

void randomize(numkit::ParameterSet& params, Rng& rng, double scale = 0.5) {
  for (const auto& entry : params.entries()) {
    Tensor t = entry.tensor;
    for (double& x : t.mutable_data()) x = rng.uniform(-scale, scale);
  }
}

std::vector<NamedTensor> leaves_of(const numkit::ParameterSet& params, std::vector<NamedTensor> extra = {}) {
  extra.insert(extra.end(), params.entries().begin(), params.entries().end());
  return extra;
}

struct Instance {
  std::vector<NamedTensor> leaves;
  std::function<Tensor(Tape&)> op;
  std::shared_ptr<void> keep_alive;  // owns parameter sets or policies the op reads
};

using Builder = std::function<Instance(Rng&)>;

GradcheckCase run_case(const std::string& name, std::size_t instances, std::uint64_t seed,
                       const Builder& build) {
  GradcheckCase result{name, instances, 0.0, ""};
  Rng rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    Instance inst = build(rng);
    std::vector<double> w;
    {
      Tape warm(false);
      const Tensor out = inst.op(warm);
      // Small projection weights keep central-difference round-off far below the error floor.
      w.resize(out.size());
      for (double& x : w) x = rng.uniform(-1e-3, 1e-3);
    }
    auto loss = [&](Tape& tape) { return numkit::dot_const(tape, inst.op(tape), w); };
    const auto report = numkit::gradcheck(loss, inst.leaves, 1e-5, 0, mix_seed(seed, i));
    if (report.max_rel_error >= result.max_rel_error) {
      result.max_rel_error = report.max_rel_error;
      result.worst_entry = "instance " + std::to_string(i) + " " + report.worst_entry;
    }
  }
  return result;
}

policies::Vocabulary small_vocab(std::size_t content) {
  policies::Vocabulary v;
  for (std::size_t i = 0; i < content; ++i) v.add("w" + std::to_string(i));
  return v;
}

std::vector<int> content_actions(Rng& rng, const policies::Vocabulary& vocab, std::size_t len) {
  std::vector<int> out;
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(policies::Vocabulary::kUnk +
                  static_cast<int>(rng.below(vocab.size() - policies::Vocabulary::kUnk)));
  }
  return out;
}

Instance policy_instance(Rng& rng, std::shared_ptr<policies::Policy> policy, std::size_t width) {
  randomize(policy->parameters(), rng);
  auto features = std::make_shared<policies::RegionFeatures>();
  features->features = random_tensor(rng, 3, width, 1.0, false);
  const auto guide = content_actions(rng, policy->vocabulary(), 3);
  auto tokens = content_actions(rng, policy->vocabulary(), 3);
  tokens.push_back(policies::Vocabulary::kEos);
  const policies::Policy* p = policy.get();
  auto op = [p, features, guide, tokens](Tape& tape) {
    return policies::sequence_log_probs(tape, *p, {*features, guide}, tokens);
  };
  auto owner = std::make_shared<std::pair<std::shared_ptr<policies::Policy>,
                                          std::shared_ptr<policies::RegionFeatures>>>(policy, features);
  return {policy->parameters().entries(), op, owner};
}

}  // namespace

std::vector<GradcheckCase> gradcheck_suite(std::size_t instances, std::uint64_t seed) {
  std::vector<std::pair<std::string, Builder>> builders;
  auto unary = [&](const std::string& name, Tensor (*f)(Tape&, const Tensor&), bool off_kink = false) {
    builders.emplace_back(name, [f, off_kink](Rng& rng) {
      const Tensor x = off_kink ? off_kink_tensor(rng, dim(rng), dim(rng)) : random_tensor(rng, dim(rng), dim(rng));
      return Instance{{{"x", x}}, [f, x](Tape& t) { return f(t, x); }, nullptr};
    });
  };
  builders.emplace_back("matmul", [](Rng& rng) {
    const Tensor a = random_tensor(rng, dim(rng), dim(rng));
    const Tensor b = random_tensor(rng, a.cols(), dim(rng));
    return Instance{{{"a", a}, {"b", b}}, [a, b](Tape& t) { return numkit::matmul(t, a, b); }, nullptr};
  });
  unary("transpose", numkit::transpose);
  for (auto [name, f] : {std::pair{"add", &numkit::add}, {"sub", &numkit::sub}, {"mul", &numkit::mul}}) {
    builders.emplace_back(name, [f = f](Rng& rng) {
      const Tensor a = random_tensor(rng, dim(rng), dim(rng));
      const Tensor b = random_tensor(rng, a.rows(), a.cols());
      return Instance{{{"a", a}, {"b", b}}, [f, a, b](Tape& t) { return f(t, a, b); }, nullptr};
    });
  }
  builders.emplace_back("add_row", [](Rng& rng) {
    const Tensor a = random_tensor(rng, dim(rng), dim(rng));
    const Tensor r = random_tensor(rng, 1, a.cols());
    return Instance{{{"a", a}, {"row", r}}, [a, r](Tape& t) { return numkit::add_row(t, a, r); }, nullptr};
  });
  builders.emplace_back("scale", [](Rng& rng) {
    const Tensor a = random_tensor(rng, dim(rng), dim(rng));
    const double k = rng.uniform(-2.0, 2.0);
    return Instance{{{"a", a}}, [a, k](Tape& t) { return numkit::scale(t, a, k); }, nullptr};
  });
  builders.emplace_back("affine", [](Rng& rng) {
    const Tensor a = random_tensor(rng, dim(rng), dim(rng));
    const double k = rng.uniform(-2.0, 2.0), b = rng.uniform(-1.0, 1.0);
    return Instance{{{"a", a}}, [a, k, b](Tape& t) { return numkit::affine(t, a, k, b); }, nullptr};
  });
  unary("sigmoid", numkit::sigmoid);
  unary("tanh", numkit::tanh);
  unary("relu", numkit::relu, true);
  unary("exp", numkit::exp);
  for (int axis : {0, 1}) {
    builders.emplace_back("softmax_axis" + std::to_string(axis), [axis](Rng& rng) {
      const Tensor x = random_tensor(rng, dim(rng), dim(rng), 3.0);
      return Instance{{{"x", x}}, [x, axis](Tape& t) { return numkit::softmax(t, x, axis); }, nullptr};
    });
  }
  builders.emplace_back("log_softmax", [](Rng& rng) {
    const Tensor x = random_tensor(rng, dim(rng), dim(rng), 3.0);
    return Instance{{{"x", x}}, [x](Tape& t) { return numkit::log_softmax(t, x); }, nullptr};
  });
  builders.emplace_back("causal_softmax", [](Rng& rng) {
    const std::size_t n = dim(rng);
    const Tensor x = random_tensor(rng, n, n, 3.0);
    return Instance{{{"x", x}}, [x](Tape& t) { return numkit::causal_softmax(t, x); }, nullptr};
  });
  builders.emplace_back("layer_norm", [](Rng& rng) {
    const std::size_t cols = 2 + rng.below(5);
    const Tensor x = random_tensor(rng, dim(rng), cols);
    const Tensor g = random_tensor(rng, 1, cols), b = random_tensor(rng, 1, cols);
    return Instance{{{"x", x}, {"gain", g}, {"bias", b}},
                    [x, g, b](Tape& t) { return numkit::layer_norm(t, x, g, b); }, nullptr};
  });
  builders.emplace_back("embedding", [](Rng& rng) {
    const Tensor table = random_tensor(rng, dim(rng), dim(rng));
    const auto rows = ids(rng, dim(rng), table.rows());
    return Instance{{{"table", table}}, [table, rows](Tape& t) { return numkit::embedding(t, table, rows); }, nullptr};
  });
  builders.emplace_back("concat_cols", [](Rng& rng) {
    const std::size_t rows = dim(rng);
    const Tensor a = random_tensor(rng, rows, dim(rng)), b = random_tensor(rng, rows, dim(rng));
    return Instance{{{"a", a}, {"b", b}}, [a, b](Tape& t) { return numkit::concat_cols(t, {a, b}); }, nullptr};
  });
  builders.emplace_back("concat_rows", [](Rng& rng) {
    const std::size_t cols = dim(rng);
    const Tensor a = random_tensor(rng, dim(rng), cols), b = random_tensor(rng, dim(rng), cols);
    return Instance{{{"a", a}, {"b", b}}, [a, b](Tape& t) { return numkit::concat_rows(t, {a, b}); }, nullptr};
  });
  builders.emplace_back("slice_cols", [](Rng& rng) {
    const Tensor a = random_tensor(rng, dim(rng), 1 + dim(rng));
    const std::size_t begin = rng.below(a.cols());
    const std::size_t end = begin + 1 + rng.below(a.cols() - begin);
    return Instance{{{"a", a}}, [a, begin, end](Tape& t) { return numkit::slice_cols(t, a, begin, end); }, nullptr};
  });
  builders.emplace_back("slice_rows", [](Rng& rng) {
    const Tensor a = random_tensor(rng, 1 + dim(rng), dim(rng));
    const std::size_t begin = rng.below(a.rows());
    const std::size_t end = begin + 1 + rng.below(a.rows() - begin);
    return Instance{{{"a", a}}, [a, begin, end](Tape& t) { return numkit::slice_rows(t, a, begin, end); }, nullptr};
  });
  builders.emplace_back("repeat_rows", [](Rng& rng) {
    const Tensor r = random_tensor(rng, 1, dim(rng));
    const std::size_t n = dim(rng);
    return Instance{{{"row", r}}, [r, n](Tape& t) { return numkit::repeat_rows(t, r, n); }, nullptr};
  });
  builders.emplace_back("pick", [](Rng& rng) {
    const Tensor a = random_tensor(rng, dim(rng), dim(rng));
    const auto cols = ids(rng, a.rows(), a.cols());
    return Instance{{{"a", a}}, [a, cols](Tape& t) { return numkit::pick(t, a, cols); }, nullptr};
  });
  unary("sum", numkit::sum);
  unary("mean", numkit::mean);
  builders.emplace_back("cross_entropy", [](Rng& rng) {
    const Tensor logits = random_tensor(rng, dim(rng), 1 + dim(rng), 3.0);
    const auto targets = ids(rng, logits.rows(), logits.cols());
    return Instance{{{"logits", logits}},
                    [logits, targets](Tape& t) { return numkit::cross_entropy(t, logits, targets); }, nullptr};
  });
  builders.emplace_back("gru_cell", [](Rng& rng) {
    auto params = std::make_shared<numkit::ParameterSet>();
    const std::size_t in = dim(rng), hidden = dim(rng), batch = dim(rng, 3);
    const auto gru = numkit::make_gru(*params, "gru", in, hidden, rng);
    randomize(*params, rng);
    const Tensor x = random_tensor(rng, batch, in), h = random_tensor(rng, batch, hidden);
    return Instance{leaves_of(*params, {{"x", x}, {"h", h}}),
                    [gru, x, h](Tape& t) { return numkit::gru_cell(t, x, h, gru); }, params};
  });
  builders.emplace_back("linear", [](Rng& rng) {
    auto params = std::make_shared<numkit::ParameterSet>();
    const auto layer = numkit::make_linear(*params, "linear", dim(rng), dim(rng), rng);
    const Tensor x = random_tensor(rng, dim(rng), layer.weight.rows());
    return Instance{leaves_of(*params, {{"x", x}}), [layer, x](Tape& t) { return numkit::linear(t, x, layer); },
                    params};
  });
  for (bool causal : {false, true}) {
    builders.emplace_back(causal ? "causal_attention" : "attention", [causal](Rng& rng) {
      const std::size_t tq = dim(rng), d = dim(rng);
      const std::size_t tk = causal ? tq : dim(rng);
      const Tensor q = random_tensor(rng, tq, d), k = random_tensor(rng, tk, d), v = random_tensor(rng, tk, dim(rng));
      return Instance{{{"q", q}, {"k", k}, {"v", v}},
                      [q, k, v, causal](Tape& t) { return numkit::scaled_dot_product_attention(t, q, k, v, causal); },
                      nullptr};
    });
  }
  builders.emplace_back("multi_head_attention", [](Rng& rng) {
    auto params = std::make_shared<numkit::ParameterSet>();
    const std::size_t heads = 1 + rng.below(2);
    const std::size_t d = heads * dim(rng, 3);
    const auto attn = numkit::make_attention(*params, "attn", d, heads, rng);
    const bool causal = rng.below(2) == 1;
    const std::size_t tq = dim(rng, 4);
    const Tensor q = random_tensor(rng, tq, d), m = random_tensor(rng, causal ? tq : dim(rng, 4), d);
    return Instance{leaves_of(*params, {{"queries", q}, {"memory", m}}),
                    [attn, q, m, causal](Tape& t) { return numkit::multi_head_attention(t, q, m, attn, causal); },
                    params};
  });
  builders.emplace_back("layer_norm_layer", [](Rng& rng) {
    auto params = std::make_shared<numkit::ParameterSet>();
    const std::size_t cols = 2 + rng.below(5);
    const auto ln = numkit::make_layer_norm(*params, "ln", cols);
    randomize(*params, rng);
    const Tensor x = random_tensor(rng, dim(rng), cols);
    return Instance{leaves_of(*params, {{"x", x}}), [ln, x](Tape& t) { return numkit::layer_norm(t, x, ln); }, params};
  });
  builders.emplace_back("feed_forward", [](Rng& rng) {
    auto params = std::make_shared<numkit::ParameterSet>();
    const std::size_t d = dim(rng);
    const auto ff = numkit::make_feed_forward(*params, "ff", d, dim(rng), rng);
    const Tensor x = random_tensor(rng, dim(rng), d);
    return Instance{leaves_of(*params, {{"x", x}}), [ff, x](Tape& t) { return numkit::feed_forward(t, x, ff); },
                    params};
  });
  builders.emplace_back("visual_attention", [](Rng& rng) {
    const std::size_t k = dim(rng), n = dim(rng), m = dim(rng);
    const Tensor f = random_tensor(rng, k, n), he = random_tensor(rng, 1, m), ht = random_tensor(rng, 1, m);
    const Tensor w = random_tensor(rng, n + 2 * m, 1);
    return Instance{{{"features", f}, {"h_e", he}, {"h_t", ht}, {"w_alpha", w}},
                    [f, he, ht, w](Tape& t) { return policies::visual_attend(t, f, he, ht, w); }, nullptr};
  });
  builders.emplace_back("behaviour_policy", [](Rng& rng) {
    auto policy = std::make_shared<policies::BehaviourPolicy>(small_vocab(3), policies::BehaviourConfig{3, 4, 2, 6},
                                                              rng.next_u64());
    return policy_instance(rng, policy, 2);
  });
  builders.emplace_back("target_policy", [](Rng& rng) {
    auto policy = std::make_shared<policies::TargetPolicy>(small_vocab(3), policies::TargetConfig{4, 2, 2, 5, 3, 6},
                                                           rng.next_u64());
    return policy_instance(rng, policy, 3);
  });

  std::vector<GradcheckCase> cases;
  for (std::size_t i = 0; i < builders.size(); ++i) {
    cases.push_back(run_case(builders[i].first, instances, mix_seed(seed, i), builders[i].second));
  }
  return cases;
}

void write_gradcheck_csv(std::ostream& out, const std::vector<GradcheckCase>& cases) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "name,instances,max_rel_error,worst_entry\n";
  for (const auto& c : cases) {
    out << c.name << ',' << c.instances << ',' << c.max_rel_error << ',' << c.worst_entry << '\n';
  }
}

RisBoundReport ris_bound_check(std::size_t samples, std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  auto probability = [&](bool log_uniform) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    return log_uniform ? std::pow(10.0, -12.0 * (1.0 - u)) : u;
  };
  RisBoundReport report;
  report.samples = samples;
  report.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples; ++i) {
    const bool log_uniform = (i % 2) == 1;
    const double pi = probability(log_uniform);
    const double pi_b = probability(log_uniform);
    const double lambda = 1.0 - rng.uniform();
    const double excess = estimators::ris_ratio(pi, pi_b, lambda) - 1.0 / lambda;
    report.max_excess = std::max(report.max_excess, excess);
    if (excess > tolerance) ++report.violations;
  }
  return report;
}

}  // namespace offpolicy::oracle
