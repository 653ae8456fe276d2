#include <filesystem>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using offpolicy::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// A small corpus plus trained behaviour and MLE checkpoints, built once.
struct Pipeline {
  fs::path dir = offpolicy::testing::scratch_dir("cli");
  std::string corpus = (dir / "data" / "corpus.jsonl").string();
  std::string behaviour = (dir / "beh" / "behaviour.ckpt").string();
  std::string target = (dir / "mle" / "target.ckpt").string();

  Pipeline() {
    REQUIRE(cli({"gen-data", "--n", "30", "--seed", "4", "--out", (dir / "data").string()}).code == 0);
    REQUIRE(cli({"train-behaviour", "--corpus", corpus, "--epochs", "2", "--out", (dir / "beh").string()}).code == 0);
    REQUIRE(cli({"pretrain-mle", "--corpus", corpus, "--epochs", "1", "--out", (dir / "mle").string()}).code == 0);
  }

  std::vector<std::string> rl(const std::string& out) const {
    return {"train-rl", "--corpus", corpus, "--target-ckpt", target, "--behaviour-ckpt", behaviour,
            "--epochs", "1", "--out", (dir / out).string()};
  }
};

const Pipeline& pipeline() {
  static const Pipeline p;
  return p;
}

std::vector<double> column(const std::string& csv, std::size_t index) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> values;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    for (std::size_t i = 0; i <= index; ++i) std::getline(row, cell, ',');
    values.push_back(std::stod(cell));
  }
  return values;
}

}  // namespace

TEST_CASE("usage errors, missing files and bad ranges have distinct exit codes") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"gen-data", "--n", "3", "--out", "x", "--unknown-flag"}).code == 2);
  const auto missing = cli({"eval", "--ckpt", "/nonexistent.ckpt", "--corpus", "/nonexistent.jsonl"});
  CHECK(missing.code == 3);
  const auto parsed = nlohmann::json::parse(missing.err);
  CHECK(parsed.at("error") == "io");
  CHECK(parsed.at("exit_code") == 3);
  CHECK(missing.err.find('\n') == missing.err.size() - 1);

  const auto& p = pipeline();
  auto args = p.rl("bad");
  args.insert(args.end(), {"--lambda", "0"});
  CHECK(cli(args).code == 4);
  args = p.rl("bad");
  args.insert(args.end(), {"--ratio-mode", "vtrace"});
  CHECK(cli(args).code == 4);
  CHECK(cli({"diagnose", "--suite", "everything", "--out", (p.dir / "bad").string()}).code == 4);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"train-rl", "--help"}).out.find("0.96") != std::string::npos);
}

TEST_CASE("diagnose gradcheck exits 0 under the tolerance") {
  const auto dir = offpolicy::testing::scratch_dir("cli_diag");
  const auto r = cli({"diagnose", "--suite", "gradcheck", "--instances", "2", "--out", dir.string()});
  CHECK(r.code == 0);
  const auto pos = r.out.find("max_rel_error=");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 14)) < 1e-4);
  CHECK(fs::exists(dir / "diagnostics" / "gradcheck.csv"));
  CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("train-rl with defaults keeps every per-step ratio at or above c") {
  const auto& p = pipeline();
  REQUIRE(cli(p.rl("rl")).code == 0);
  const std::string ratios = slurp(p.dir / "rl" / "ratios.csv");
  CHECK(ratios.rfind("iteration,min,max,mean,variance\n", 0) == 0);
  const auto mins = column(ratios, 1);
  const auto maxs = column(ratios, 2);
  REQUIRE_FALSE(mins.empty());
  for (double m : mins) CHECK(m >= 0.95);
  for (double m : maxs) CHECK(m <= 2.0);
  for (const char* name : {"manifest.json", "train_log.csv", "ratios.csv", "metrics.csv", "seq_ratios.csv",
                           "target.ckpt", "run.log"}) {
    CHECK(fs::exists(p.dir / "rl" / name));
  }
  const auto manifest = nlohmann::json::parse(slurp(p.dir / "rl" / "manifest.json"));
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("config").at("estimator").at("c") == 0.95);
  CHECK(manifest.at("config").at("train").at("rl_lr") == 4e-5);
  CHECK(manifest.at("inputs").contains("behaviour_ckpt"));
}

TEST_CASE("every command reruns from its manifest with identical CSV outputs") {
  const auto& p = pipeline();
  REQUIRE(cli(p.rl("rl_a")).code == 0);
  REQUIRE(cli({"rerun", "--manifest", (p.dir / "rl_a" / "manifest.json").string(), "--out",
               (p.dir / "rl_b").string()})
              .code == 0);
  for (const char* name : {"ratios.csv", "metrics.csv", "seq_ratios.csv", "train_log.csv", "param_trace.csv"}) {
    CHECK(slurp(p.dir / "rl_a" / name) == slurp(p.dir / "rl_b" / name));
  }
  for (const char* sub : {"beh", "mle"}) {
    const std::string again = std::string(sub) + "_again";
    REQUIRE(cli({"rerun", "--manifest", (p.dir / sub / "manifest.json").string(), "--out", (p.dir / again).string()})
                .code == 0);
    CHECK(slurp(p.dir / sub / "metrics.csv") == slurp(p.dir / again / "metrics.csv"));
    CHECK(slurp(p.dir / sub / "train_log.csv") == slurp(p.dir / again / "train_log.csv"));
  }
  REQUIRE(cli({"rerun", "--manifest", (p.dir / "data" / "manifest.json").string(), "--out",
               (p.dir / "data_again").string()})
              .code == 0);
  CHECK(slurp(p.dir / "data" / "corpus.jsonl") == slurp(p.dir / "data_again" / "corpus.jsonl"));
}

TEST_CASE("rerun refuses a manifest whose inputs changed") {
  const auto& p = pipeline();
  const auto dir = offpolicy::testing::scratch_dir("cli_stale");
  const auto corpus = dir / "corpus.jsonl";
  fs::copy_file(p.corpus, corpus);
  REQUIRE(cli({"eval", "--ckpt", p.target, "--corpus", corpus.string(), "--split", "val", "--out",
               (dir / "eval").string()})
              .code == 0);
  std::ofstream(corpus, std::ios::app) << "\n";
  CHECK(cli({"rerun", "--manifest", (dir / "eval" / "manifest.json").string()}).code == 4);
}

TEST_CASE("train-rl with alpha 0 reproduces the pretrain-mle parameter trajectory") {
  const auto& p = pipeline();
  auto args = p.rl("alpha0");
  args.insert(args.end(), {"--alpha", "0"});
  REQUIRE(cli(args).code == 0);
  REQUIRE(cli({"pretrain-mle", "--corpus", p.corpus, "--init-ckpt", p.target, "--lr", "4e-5", "--epochs", "1",
               "--out", (p.dir / "mle_from_ckpt").string()})
              .code == 0);
  const std::string rl_trace = slurp(p.dir / "alpha0" / "param_trace.csv");
  CHECK(std::count(rl_trace.begin(), rl_trace.end(), '\n') > 1);
  CHECK(rl_trace == slurp(p.dir / "mle_from_ckpt" / "param_trace.csv"));
}
