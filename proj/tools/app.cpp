#include "app.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "offpolicy/dataio/checkpoint.hpp"
#include "offpolicy/dataio/corpus.hpp"
#include "offpolicy/dataio/csv.hpp"
#include "offpolicy/errors.hpp"
#include "offpolicy/oracle/diagnostics.hpp"
#include "offpolicy/oracle/oracle.hpp"
#include "offpolicy/policies/behaviour_policy.hpp"
#include "offpolicy/policies/target_policy.hpp"
#include "offpolicy/trainer/trainer.hpp"

namespace offpolicy::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestFormat = 1;
constexpr std::uint64_t kInitStream = 3;

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string file_hash(const fs::path& path) { return hex64(dataio::fnv1a(read_bytes(path))); }

std::string values_hash(const numkit::ParameterSet& params) {
  const std::vector<double> values = params.flat_values();
  std::string bytes(values.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return hex64(dataio::fnv1a(bytes));
}

std::string absolute(const std::string& path) { return fs::absolute(path).lexically_normal().string(); }

// Everything needed to execute, or re-execute, one command.
struct Run {
  std::string command;
  json config;
  fs::path out;
  json inputs = json::object();     // role -> {path, fnv1a}
  json artifacts = json::object();  // file name -> fnv1a
  std::ostream* log = nullptr;
  std::ostringstream run_log;

  fs::path path(const std::string& name) const { return out / name; }

  void add_input(const std::string& role, const std::string& file) {
    inputs[role] = {{"path", file}, {"fnv1a", file_hash(file)}};
  }

  json manifest(const std::string& status) const {
    return {{"format", kManifestFormat}, {"command", command}, {"config", config},
            {"seeds", seeds()},          {"inputs", inputs},   {"out", out.string()},
            {"artifacts", artifacts},    {"status", status}};
  }

  json seeds() const {
    if (!config.contains("seed")) return json::object();
    const auto seed = config.at("seed").get<std::uint64_t>();
    return {{"seed", seed},
            {"shuffle", mix_seed(seed, 1)},
            {"rollout", mix_seed(seed, 2)},
            {"init", mix_seed(seed, kInitStream)}};
  }

  void write_manifest(const std::string& status) const {
    dataio::write_file(path("manifest.json"), [&](std::ostream& o) { o << manifest(status).dump(2) << '\n'; });
  }

  void record(const std::string& name) { artifacts[name] = file_hash(path(name)); }

  void note(const std::string& line) {
    run_log << line << '\n';
    if (log != nullptr) *log << line << '\n';
  }
};

// Corpus inputs are re-hashed on rerun; a changed file makes the manifest stale.
void check_inputs(const json& recorded) {
  for (const auto& [role, entry] : recorded.items()) {
    const std::string path = entry.at("path").get<std::string>();
    if (file_hash(path) != entry.at("fnv1a").get<std::string>()) {
      throw ValidationError("input '" + role + "' (" + path + ") changed since the manifest was written");
    }
  }
}

void write_metrics_file(Run& run, const std::vector<dataio::MetricsRow>& rows) {
  dataio::write_file(run.path("metrics.csv"), [&](std::ostream& o) { dataio::write_metrics(o, rows); });
  run.record("metrics.csv");
}

std::vector<dataio::MetricsRow> split_metrics(const policies::Policy& policy, const dataio::Corpus& corpus,
                                              const trainer::TrainConfig& config) {
  std::vector<dataio::MetricsRow> rows;
  for (auto split : {dataio::Split::kVal, dataio::Split::kTest}) {
    const auto examples = corpus.examples(split);
    if (examples.empty()) continue;
    rows.push_back({dataio::to_string(split), trainer::evaluate(policy, examples, config.cider)});
  }
  return rows;
}

void write_training_outputs(Run& run, const trainer::TrainResult& result) {
  dataio::write_file(run.path("train_log.csv"), [&](std::ostream& o) { dataio::write_train_log(o, result.log); });
  dataio::write_file(run.path("epochs.csv"), [&](std::ostream& o) { dataio::write_epochs(o, result.epochs); });
  run.record("train_log.csv");
  run.record("epochs.csv");
  std::ostringstream line;
  line.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& e : result.epochs) {
    line.str("");
    line << "epoch=" << e.epoch << " train_loss=" << e.train_loss << " val_score=" << e.val_score;
    run.note(line.str());
  }
  run.note("best_epoch=" + std::to_string(result.best_epoch) +
           " stopped_early=" + (result.stopped_early ? "true" : "false"));
}

// Records a hash of every parameter value after each update.
struct ParamTrace {
  std::vector<std::pair<std::size_t, std::string>> rows;
  trainer::IterationHook hook() {
    return [this](std::size_t iteration, const numkit::ParameterSet& params) {
      rows.emplace_back(iteration, values_hash(params));
    };
  }
  void write(Run& run) const {
    dataio::write_file(run.path("param_trace.csv"), [&](std::ostream& o) {
      o << "iteration,fnv1a\n";
      for (const auto& [i, h] : rows) o << i << ',' << h << '\n';
    });
    run.record("param_trace.csv");
  }
};

std::unique_ptr<policies::Policy> load_kind(const std::string& path, const std::string& kind) {
  auto policy = dataio::load_policy(path);
  if (policy->kind() != kind) {
    throw ValidationError(path + " holds a " + policy->kind() + " policy, expected " + kind);
  }
  return policy;
}

void check_compatible(const policies::Policy& policy, const dataio::Corpus& corpus, const std::string& what) {
  if (policy.vocabulary().content_tokens() != corpus.vocabulary.content_tokens()) {
    throw ValidationError(what + " vocabulary does not match the corpus training vocabulary");
  }
  const json c = policy.config_json();
  if (c.at("feature_dim").get<std::size_t>() != corpus.feature_dim) {
    throw ValidationError(what + " expects feature width " + c.at("feature_dim").dump() + " but the corpus has " +
                          std::to_string(corpus.feature_dim));
  }
}

template <typename P>
P& as(policies::Policy& policy) {
  return dynamic_cast<P&>(policy);
}

void save_output_policy(Run& run, const std::string& name, const policies::Policy& policy) {
  dataio::save_policy(run.path(name), policy, {{"command", run.command}, {"seed", run.config.value("seed", 0)}});
  run.record(name);
}

// ---- commands -------------------------------------------------------------

void exec_gen_data(Run& run) {
  const json& c = run.config;
  dataio::ToyCorpusConfig config;
  config.n_records = c.at("n").get<std::size_t>();
  config.grammar_seed = c.at("grammar_seed").get<std::uint64_t>();
  config.feature_seed = c.at("feature_seed").get<std::uint64_t>();
  config.regions = c.at("regions").get<std::size_t>();
  config.feature_dim = c.at("feature_dim").get<std::size_t>();
  config.noise = c.at("noise").get<double>();
  if (config.n_records == 0) throw ValidationError("--n must be at least 1");
  run.write_manifest("running");
  const auto records = dataio::generate_toy_corpus(config);
  dataio::write_corpus(run.path("corpus.jsonl"), records);
  run.record("corpus.jsonl");
  run.note("records=" + std::to_string(records.size()));
}

dataio::Corpus load_input_corpus(Run& run) {
  const std::string path = run.config.at("corpus").get<std::string>();
  dataio::Corpus corpus = dataio::load_corpus(path);
  run.add_input("corpus", path);
  return corpus;
}

void exec_train_behaviour(Run& run) {
  const json& c = run.config;
  const auto config = trainer::train_config_from_json(c.at("train"));
  config.validate();
  const dataio::Corpus corpus = load_input_corpus(run);
  const json& m = c.at("model");
  policies::BehaviourPolicy behaviour(
      corpus.vocabulary,
      {m.at("embed_dim").get<std::size_t>(), m.at("hidden_dim").get<std::size_t>(), corpus.feature_dim,
       m.at("max_length").get<std::size_t>()},
      mix_seed(config.seed, kInitStream));
  run.write_manifest("running");
  const auto train = corpus.examples(dataio::Split::kTrain);
  const auto val = corpus.examples(dataio::Split::kVal);
  const auto result = trainer::train_behaviour(behaviour, train, val, config);
  write_training_outputs(run, result);
  save_output_policy(run, "behaviour.ckpt", behaviour);
  write_metrics_file(run, split_metrics(behaviour, corpus, config));
}

void exec_pretrain_mle(Run& run) {
  const json& c = run.config;
  const auto config = trainer::train_config_from_json(c.at("train"));
  config.validate();
  const dataio::Corpus corpus = load_input_corpus(run);
  std::unique_ptr<policies::Policy> target;
  const std::string init = c.value("init_ckpt", std::string());
  if (!init.empty()) {
    target = load_kind(init, "target");
    run.add_input("init_ckpt", init);
    check_compatible(*target, corpus, "initial target");
  } else {
    const json& m = c.at("model");
    target = std::make_unique<policies::TargetPolicy>(
        corpus.vocabulary,
        policies::TargetConfig{m.at("model_dim").get<std::size_t>(), m.at("heads").get<std::size_t>(),
                               m.at("layers").get<std::size_t>(), m.at("ff_dim").get<std::size_t>(),
                               corpus.feature_dim, m.at("max_length").get<std::size_t>()},
        mix_seed(config.seed, kInitStream));
  }
  run.write_manifest("running");
  ParamTrace trace;
  const auto result = trainer::pretrain_mle(as<policies::TargetPolicy>(*target), corpus.examples(dataio::Split::kTrain),
                                            corpus.examples(dataio::Split::kVal), config, trace.hook());
  write_training_outputs(run, result);
  trace.write(run);
  save_output_policy(run, "target.ckpt", *target);
  write_metrics_file(run, split_metrics(*target, corpus, config));
}

void exec_train_rl(Run& run) {
  const json& c = run.config;
  const auto config = trainer::train_config_from_json(c.at("train"));
  const auto est = estimators::estimator_config_from_json(c.at("estimator"));
  config.validate();
  est.validate();
  const dataio::Corpus corpus = load_input_corpus(run);
  const std::string target_path = c.at("target_ckpt").get<std::string>();
  const std::string behaviour_path = c.at("behaviour_ckpt").get<std::string>();
  auto target = load_kind(target_path, "target");
  auto behaviour = load_kind(behaviour_path, "behaviour");
  run.add_input("target_ckpt", target_path);
  run.add_input("behaviour_ckpt", behaviour_path);
  check_compatible(*target, corpus, "target checkpoint");
  check_compatible(*behaviour, corpus, "behaviour checkpoint");
  run.write_manifest("running");

  ParamTrace trace;
  const auto result = trainer::train_rl(as<policies::TargetPolicy>(*target), as<policies::BehaviourPolicy>(*behaviour),
                                        corpus.examples(dataio::Split::kTrain), corpus.examples(dataio::Split::kVal),
                                        est, config, trace.hook());
  write_training_outputs(run, result);
  trace.write(run);
  dataio::write_file(run.path("ratios.csv"), [&](std::ostream& o) { result.step_ratios.write_csv(o); });
  dataio::write_file(run.path("seq_ratios.csv"), [&](std::ostream& o) { result.sequence_ratios.write_csv(o); });
  run.record("ratios.csv");
  run.record("seq_ratios.csv");
  save_output_policy(run, "target.ckpt", *target);
  write_metrics_file(run, split_metrics(*target, corpus, config));
}

void exec_eval(Run& run, std::ostream& out) {
  const json& c = run.config;
  const std::string ckpt = c.at("ckpt").get<std::string>();
  const auto split = dataio::parse_split(c.at("split").get<std::string>());
  const dataio::Corpus corpus = load_input_corpus(run);
  auto policy = dataio::load_policy(ckpt);
  run.add_input("ckpt", ckpt);
  check_compatible(*policy, corpus, "checkpoint");
  const auto examples = corpus.examples(split);
  if (examples.empty()) throw ValidationError("split '" + dataio::to_string(split) + "' has no records");
  const std::vector<dataio::MetricsRow> rows = {{dataio::to_string(split), trainer::evaluate(*policy, examples)}};
  dataio::write_metrics(out, rows);
  if (!run.out.empty()) {
    run.write_manifest("running");
    write_metrics_file(run, rows);
  }
}

std::string mode_name(estimators::RatioMode mode) { return estimators::to_string(mode); }

void exec_diagnose(Run& run, std::ostream& out) {
  const json& c = run.config;
  const std::string suite = c.at("suite").get<std::string>();
  const auto seed = c.at("seed").get<std::uint64_t>();
  fs::create_directories(run.path("diagnostics"));
  run.write_manifest("running");
  out.precision(std::numeric_limits<double>::max_digits10);
  bool failed = false;
  std::string failure;

  if (suite == "ratios") {
    const auto samples = c.at("samples").get<std::size_t>();
    const auto report = oracle::ris_bound_check(samples, seed);
    dataio::write_file(run.path("diagnostics/ris_bound.csv"), [&](std::ostream& o) {
      o.precision(std::numeric_limits<double>::max_digits10);
      o << "samples,violations,max_excess\n" << report.samples << ',' << report.violations << ','
        << report.max_excess << '\n';
    });
    const estimators::EstimatorConfig est;
    dataio::write_file(run.path("diagnostics/ratio_table.csv"), [&](std::ostream& o) {
      o.precision(std::numeric_limits<double>::max_digits10);
      o << "pi,pi_b,is,ris,tris\n";
      for (double pi : {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
        for (double pb : {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
          const double ris = estimators::ris_ratio(pi, pb, est.lambda);
          o << pi << ',' << pb << ',' << estimators::is_ratio(pi, pb) << ',' << ris << ','
            << estimators::tris_ratio(ris, est.c, est.clamp_mode, est.c_high) << '\n';
        }
      }
    });
    run.record("diagnostics/ris_bound.csv");
    run.record("diagnostics/ratio_table.csv");
    out << "suite=ratios samples=" << report.samples << " violations=" << report.violations
        << " max_excess=" << report.max_excess << '\n';
    failed = report.violations > 0;
    failure = "RIS ratio exceeded 1/lambda";
  } else if (suite == "bias-variance") {
    const auto samples = c.at("samples").get<std::size_t>();
    const std::vector<std::pair<std::string, oracle::ToyMDP>> fixtures = {
        {"vocab3_horizon2", oracle::fixture_vocab3_horizon2()},
        {"divergent", oracle::fixture_divergent()},
        {"discounted", oracle::fixture_discounted()}};
    std::ostringstream table, boot;
    table.precision(std::numeric_limits<double>::max_digits10);
    boot.precision(std::numeric_limits<double>::max_digits10);
    table << "fixture,mode,samples,max_z,bias_norm,variance,exact_variance,max_product\n";
    boot << "fixture,var_is_gt_var_ris_confidence\n";
    for (std::size_t f = 0; f < fixtures.size(); ++f) {
      const auto& [name, mdp] = fixtures[f];
      std::map<estimators::RatioMode, std::vector<double>> draws;
      for (auto mode : {estimators::RatioMode::kIS, estimators::RatioMode::kRIS, estimators::RatioMode::kTRIS}) {
        estimators::EstimatorConfig est;
        est.ratio_mode = mode;
        est.beta = 0.0;
        const auto bv = oracle::estimator_bias_variance(mdp, est, samples, mix_seed(seed, f));
        table << name << ',' << mode_name(mode) << ',' << bv.n_samples << ',' << bv.max_z() << ',' << bv.bias_norm
              << ',' << bv.variance << ',' << oracle::exact_weighted_return_variance(mdp, est) << ','
              << bv.max_product << '\n';
        out << "suite=bias-variance fixture=" << name << " mode=" << mode_name(mode) << " max_z=" << bv.max_z()
            << " variance=" << bv.variance << '\n';
        draws[mode] = bv.weighted_returns;
      }
      boot << name << ','
           << oracle::bootstrap_variance_confidence(draws[estimators::RatioMode::kIS],
                                                    draws[estimators::RatioMode::kRIS], 1000, mix_seed(seed, 100 + f))
           << '\n';
    }
    dataio::write_file(run.path("diagnostics/bias_variance.csv"), [&](std::ostream& o) { o << table.str(); });
    dataio::write_file(run.path("diagnostics/bootstrap.csv"), [&](std::ostream& o) { o << boot.str(); });
    run.record("diagnostics/bias_variance.csv");
    run.record("diagnostics/bootstrap.csv");
  } else if (suite == "wexler") {
    const auto inst = oracle::wexler_instance();
    const auto report = oracle::wexler_variance_check(inst.pi, inst.b1, inst.b2, inst.c);
    dataio::write_file(run.path("diagnostics/wexler.txt"), [&](std::ostream& o) { oracle::write_report(o, report); });
    run.record("diagnostics/wexler.txt");
    oracle::write_report(out, report);
    failed = !report.satisfied;
    failure = "variance ratio below the bound";
  } else if (suite == "gradcheck") {
    const auto cases = oracle::gradcheck_suite(c.at("instances").get<std::size_t>(), seed);
    dataio::write_file(run.path("diagnostics/gradcheck.csv"),
                       [&](std::ostream& o) { oracle::write_gradcheck_csv(o, cases); });
    run.record("diagnostics/gradcheck.csv");
    double worst = 0.0;
    for (const auto& gc : cases) worst = std::max(worst, gc.max_rel_error);
    out << "suite=gradcheck cases=" << cases.size() << " max_rel_error=" << worst << '\n';
    failed = !(worst < 1e-4);
    failure = "gradient check max relative error " + std::to_string(worst) + " >= 1e-4";
  } else {
    throw ValidationError("unknown diagnose suite '" + suite + "'");
  }
  if (failed) throw NumericalError(failure);
}

void execute(Run& run, std::ostream& out) {
  if (!run.out.empty()) fs::create_directories(run.out);
  run.log = &out;
  if (run.command == "gen-data") {
    exec_gen_data(run);
  } else if (run.command == "train-behaviour") {
    exec_train_behaviour(run);
  } else if (run.command == "pretrain-mle") {
    exec_pretrain_mle(run);
  } else if (run.command == "train-rl") {
    exec_train_rl(run);
  } else if (run.command == "eval") {
    run.log = nullptr;  // stdout carries the metrics table
    exec_eval(run, out);
  } else if (run.command == "diagnose") {
    exec_diagnose(run, out);
  } else {
    throw ValidationError("unknown command '" + run.command + "'");
  }
  if (!run.out.empty()) {
    dataio::write_file(run.path("run.log"), [&](std::ostream& o) { o << run.run_log.str(); });
    run.write_manifest("complete");
  }
}

Run rerun_from_manifest(const std::string& manifest_path, const std::string& out_override) {
  json m;
  try {
    m = json::parse(read_bytes(manifest_path));
  } catch (const json::parse_error& e) {
    throw ValidationError("manifest " + manifest_path + " is not valid JSON: " + e.what());
  }
  if (m.value("format", 0) != kManifestFormat) throw ValidationError("unsupported manifest format");
  check_inputs(m.at("inputs"));
  Run run;
  run.command = m.at("command").get<std::string>();
  run.config = m.at("config");
  run.out = out_override.empty() ? fs::path(m.at("out").get<std::string>()) : fs::path(absolute(out_override));
  return run;
}

// ---- command line ---------------------------------------------------------

struct Flags {
  std::string out, corpus, target_ckpt, behaviour_ckpt, init_ckpt, ckpt, split = "test", suite, manifest;
  std::size_t n = 500, epochs = 0, batch = 20, patience = 3, samples = 0, instances = 20;
  std::size_t embed_dim = 32, hidden_dim = 64, model_dim = 64, heads = 2, layers = 2, ff_dim = 128, max_length = 30;
  std::uint64_t seed = 1;
  double lr = 0.0, clip_norm = 5.0;
  estimators::EstimatorConfig est;
  std::string ratio_mode = "tris", clamp_mode = "lower", reduction = "mean", baseline = "behaviour";
};

json train_json(const Flags& f, std::size_t trainer::TrainConfig::*epochs, double trainer::TrainConfig::*lr) {
  trainer::TrainConfig c;
  c.batch_size = f.batch;
  c.patience = f.patience;
  c.seed = f.seed;
  c.clip_norm = f.clip_norm;
  c.reduction = estimators::parse_step_reduction(f.reduction);
  if (f.epochs > 0) c.*epochs = f.epochs;
  if (f.lr > 0.0) c.*lr = f.lr;
  json j = trainer::to_json(c);
  j["baseline"] = f.baseline;
  return j;
}

void add_training_flags(CLI::App* sub, Flags& f, const std::string& epochs_help, const std::string& lr_help) {
  sub->add_option("--corpus", f.corpus, "Corpus JSONL file")->required();
  sub->add_option("--epochs", f.epochs, epochs_help);
  sub->add_option("--lr", f.lr, lr_help);
  sub->add_option("--seed", f.seed, "Run seed (shuffling, sampling, initialisation)")->capture_default_str();
  sub->add_option("--batch", f.batch, "Batch size")->capture_default_str();
  sub->add_option("--patience", f.patience, "Early-stopping patience in epochs")->capture_default_str();
  sub->add_option("--clip-norm", f.clip_norm, "Global gradient-norm clip, <= 0 disables")->capture_default_str();
  sub->add_option("--reduction", f.reduction, "Per-sequence token loss reduction: mean or sum")->capture_default_str();
  sub->add_option("--out", f.out, "Output directory")->required();
}

void print_error(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Off-policy self-critical sequence training on region features"};
  app.name("opsc");
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic toy corpus");
  gen->add_option("--n", f.n, "Training records; val and test get n/10 each")->capture_default_str();
  gen->add_option("--seed", f.seed, "Corpus seed")->capture_default_str();
  gen->add_option("--out", f.out, "Output directory")->required();

  auto* beh = app.add_subcommand("train-behaviour", "Train the GRU auto-encoder behaviour policy");
  add_training_flags(beh, f, "Maximum epochs (default 20)", "Adam learning rate (default 5e-3)");
  beh->add_option("--embed-dim", f.embed_dim, "Word embedding width")->capture_default_str();
  beh->add_option("--hidden-dim", f.hidden_dim, "GRU hidden width")->capture_default_str();
  beh->add_option("--max-length", f.max_length, "Maximum decoded length")->capture_default_str();

  auto* mle = app.add_subcommand("pretrain-mle", "MLE pretraining of the transformer target policy");
  add_training_flags(mle, f, "Maximum epochs (default 10)", "Adam learning rate (default 4e-4)");
  mle->add_option("--init-ckpt", f.init_ckpt, "Start from this target checkpoint instead of a fresh model");
  mle->add_option("--model-dim", f.model_dim, "Transformer width")->capture_default_str();
  mle->add_option("--heads", f.heads, "Attention heads")->capture_default_str();
  mle->add_option("--layers", f.layers, "Decoder layers")->capture_default_str();
  mle->add_option("--ff-dim", f.ff_dim, "Feed-forward width")->capture_default_str();
  mle->add_option("--max-length", f.max_length, "Maximum decoded length")->capture_default_str();

  auto* rl = app.add_subcommand("train-rl", "Off-policy self-critical training of the target");
  add_training_flags(rl, f, "Maximum epochs (default 4)", "Adam learning rate (default 4e-5)");
  rl->add_option("--target-ckpt", f.target_ckpt, "Pretrained target checkpoint")->required();
  rl->add_option("--behaviour-ckpt", f.behaviour_ckpt, "Trained behaviour checkpoint")->required();
  rl->add_option("--lambda", f.est.lambda, "RIS mixing weight in (0, 1]")->capture_default_str();
  rl->add_option("--c", f.est.c, "TRIS truncation threshold (0.96 is the alternative default)")
      ->capture_default_str();
  rl->add_option("--c-high", f.est.c_high, "Upper TRIS bound for --clamp-mode both")->capture_default_str();
  rl->add_option("--beta", f.est.beta, "KL penalty weight")->capture_default_str();
  rl->add_option("--alpha", f.est.alpha, "Weight of the RL term; 1 - alpha weighs the MLE term")
      ->capture_default_str();
  rl->add_option("--gamma", f.est.gamma, "Discount applied to the advantage")->capture_default_str();
  rl->add_option("--ratio-mode", f.ratio_mode, "is, ris or tris")->capture_default_str();
  rl->add_option("--clamp-mode", f.clamp_mode, "lower, upper or both")->capture_default_str();
  rl->add_option("--baseline", f.baseline, "Greedy baseline decoder: behaviour or target")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Score a checkpoint with BLEU and CIDEr-D");
  ev->add_option("--ckpt", f.ckpt, "Policy checkpoint")->required();
  ev->add_option("--corpus", f.corpus, "Corpus JSONL file")->required();
  ev->add_option("--split", f.split, "train, val or test")->capture_default_str();
  ev->add_option("--out", f.out, "Optional output directory for metrics.csv and a manifest");

  auto* diag = app.add_subcommand("diagnose", "Estimator and autodiff diagnostics");
  diag->add_option("--suite", f.suite, "ratios, bias-variance, wexler or gradcheck")->required();
  diag->add_option("--out", f.out, "Output directory")->required();
  diag->add_option("--seed", f.seed, "Diagnostic seed")->capture_default_str();
  diag->add_option("--samples", f.samples, "Draws (ratios: 1000000, bias-variance: 100000)");
  diag->add_option("--instances", f.instances, "Random instances per gradcheck case")->capture_default_str();

  auto* re = app.add_subcommand("rerun", "Repeat a run from its manifest.json");
  re->add_option("--manifest", f.manifest, "Manifest of the run to repeat")->required();
  re->add_option("--out", f.out, "Output directory (default: the manifest's)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, kUsage, "usage", e.what());
    return kUsage;
  }

  try {
    Run run;
    if (re->parsed()) {
      run = rerun_from_manifest(f.manifest, f.out);
    } else {
      run.out = f.out.empty() ? fs::path() : fs::path(absolute(f.out));
      json& c = run.config;
      if (gen->parsed()) {
        run.command = "gen-data";
        const dataio::ToyCorpusConfig toy;
        c = {{"n", f.n},
             {"seed", f.seed},
             {"grammar_seed", mix_seed(f.seed, 1)},
             {"feature_seed", mix_seed(f.seed, 2)},
             {"regions", toy.regions},
             {"feature_dim", toy.feature_dim},
             {"noise", toy.noise}};
      } else if (beh->parsed()) {
        run.command = "train-behaviour";
        c = {{"corpus", absolute(f.corpus)},
             {"seed", f.seed},
             {"train", train_json(f, &trainer::TrainConfig::behaviour_epochs, &trainer::TrainConfig::behaviour_lr)},
             {"model", {{"embed_dim", f.embed_dim}, {"hidden_dim", f.hidden_dim}, {"max_length", f.max_length}}}};
      } else if (mle->parsed()) {
        run.command = "pretrain-mle";
        c = {{"corpus", absolute(f.corpus)},
             {"seed", f.seed},
             {"init_ckpt", f.init_ckpt.empty() ? "" : absolute(f.init_ckpt)},
             {"train", train_json(f, &trainer::TrainConfig::mle_epochs, &trainer::TrainConfig::mle_lr)},
             {"model",
              {{"model_dim", f.model_dim},
               {"heads", f.heads},
               {"layers", f.layers},
               {"ff_dim", f.ff_dim},
               {"max_length", f.max_length}}}};
      } else if (rl->parsed()) {
        run.command = "train-rl";
        f.est.ratio_mode = estimators::parse_ratio_mode(f.ratio_mode);
        f.est.clamp_mode = estimators::parse_clamp_mode(f.clamp_mode);
        f.est.reduction = estimators::parse_step_reduction(f.reduction);
        c = {{"corpus", absolute(f.corpus)},
             {"seed", f.seed},
             {"target_ckpt", absolute(f.target_ckpt)},
             {"behaviour_ckpt", absolute(f.behaviour_ckpt)},
             {"train", train_json(f, &trainer::TrainConfig::rl_epochs, &trainer::TrainConfig::rl_lr)},
             {"estimator", estimators::to_json(f.est)}};
      } else if (ev->parsed()) {
        run.command = "eval";
        c = {{"ckpt", absolute(f.ckpt)}, {"corpus", absolute(f.corpus)}, {"split", f.split}};
      } else {
        run.command = "diagnose";
        std::size_t samples = f.samples;
        if (samples == 0) samples = f.suite == "ratios" ? 1000000 : 100000;
        c = {{"suite", f.suite}, {"seed", f.seed}, {"samples", samples}, {"instances", f.instances}};
        if (f.suite != "ratios" && f.suite != "bias-variance" && f.suite != "wexler" && f.suite != "gradcheck") {
          throw ValidationError("unknown diagnose suite '" + f.suite + "'");
        }
      }
    }
    execute(run, out);
    return kOk;
  } catch (const IoError& e) {
    print_error(err, kIo, "io", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    print_error(err, kIo, "io", e.what());
    return kIo;
  } catch (const ValidationError& e) {
    print_error(err, kValidation, "validation", e.what());
    return kValidation;
  } catch (const ContractError& e) {
    print_error(err, kValidation, "validation", e.what());
    return kValidation;
  } catch (const DimensionError& e) {
    print_error(err, kValidation, "validation", e.what());
    return kValidation;
  } catch (const json::exception& e) {
    print_error(err, kValidation, "validation", e.what());
    return kValidation;
  } catch (const NumericalError& e) {
    print_error(err, kNumerical, "numerical", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    print_error(err, kInternal, "internal", e.what());
    return kInternal;
  }
}

}  // namespace offpolicy::cli
