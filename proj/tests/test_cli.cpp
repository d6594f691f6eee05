#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "l0opt/json_io.hpp"

#ifndef L0OPT_CLI
#error "L0OPT_CLI must point at the CLI binary"
#endif
#ifndef L0OPT_SAMPLES
#error "L0OPT_SAMPLES must point at the sample corpus"
#endif

namespace fs = std::filesystem;
using l0opt::io::json;

namespace {

struct RunResult {
  int exit_code;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const fs::path log = out_dir / "stdout.txt";
  const std::string cmd = std::string(L0OPT_CLI) + " " + args + " --out " + out_dir.string() +
                          " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(raw), ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path sample(const char* name) { return fs::path(L0OPT_SAMPLES) / name; }

fs::path fresh_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() / (std::string("l0opt_cli_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("solve on the conditional mean-variance sample") {
  const fs::path dir = fresh_dir("hansen");
  auto r = run_cli("solve " + sample("hansen_richard.json").string() + " --format both", dir);
  CHECK(r.exit_code == 0);
  const json result = json::parse(slurp(dir / "result.json"));
  CHECK(result.at("verdict") == "ok");
  // Worked instance: prices (0.9, 1.1) and unit conditional mean give the
  // riskless payoff (1, 1) with zero variance.
  const json& mini = result.at("result").at("minimizer").at("data");
  CHECK(mini[0][0].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mini[1][0].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(result.at("result").at("value").at("values")[0].get<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fs::exists(dir / "result.csv"));

  // Emitted results re-load through the decoders.
  l0opt::ProbSpace sp({0.5, 0.5});
  l0opt::SigmaAlgebra alg(sp, {{0, 1}});
  CHECK_NOTHROW(l0opt::io::decode_element(result.at("result").at("minimizer"), alg));
  CHECK_NOTHROW(l0opt::io::decode_rv(result.at("result").at("value"), alg));
}

TEST_CASE("certify verdicts and exit codes") {
  const fs::path dir = fresh_dir("certify");
  auto unbounded =
      run_cli("certify " + sample("certify_interval_unbounded.json").string(), dir);
  CHECK(unbounded.exit_code == 2);
  json result = json::parse(slurp(dir / "result.json"));
  CHECK(result.at("verdict") == "not_compact");
  CHECK(result.at("result").at("witness").at("atom") == 1);

  auto bounded = run_cli("certify " + sample("certify_box.json").string(), dir);
  CHECK(bounded.exit_code == 0);
  result = json::parse(slurp(dir / "result.json"));
  CHECK(result.at("result").at("compact") == true);

  auto james = run_cli("certify " + sample("james_box.json").string(), dir);
  CHECK(james.exit_code == 0);
  result = json::parse(slurp(dir / "result.json"));
  CHECK(result.at("result").at("compact_evidence") == true);
}

TEST_CASE("schema violations exit 1 with a pointer to the offending field") {
  const fs::path dir = fresh_dir("schema");
  const fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << R"({"version":"1","space":{"p":[0.5,0.5]},"algebra":{"atoms":[[0],[1]]},)"
        << R"("problem":{"kind":"minimize","objective":{"kind":"cond_variance","d":1},)"
        << R"("set":{"d":1,"atoms":[{"atom":0,"kind":"box","lo":[0],"hi":[1]},)"
        << R"({"atom":1,"kind":"box","lo":[0],"hi":[1]}]},"surprise":42}})";
  }
  auto r = run_cli("solve " + bad.string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(r.stdout_text.find("surprise") != std::string::npos);

  auto missing = run_cli("solve " + (dir / "missing.json").string(), dir);
  CHECK(missing.exit_code == 1);
}

TEST_CASE("repeated runs with a fixed seed emit byte-identical JSON") {
  for (const char* name : {"hansen_richard.json", "minimize_box.json", "vi_box.json",
                           "james_box.json", "bw_extract.json", "decompose.json"}) {
    const bool certify = std::string(name).find("james") != std::string::npos;
    const bool extract = std::string(name).find("bw_") != std::string::npos;
    const bool decompose = std::string(name).find("decompose") != std::string::npos;
    const std::string cmd = certify ? "certify" : extract ? "extract"
                                    : decompose          ? "decompose"
                                                         : "solve";
    const fs::path dir_a = fresh_dir("det_a");
    const fs::path dir_b = fresh_dir("det_b");
    auto ra = run_cli(cmd + " " + sample(name).string() + " --seed 7", dir_a);
    auto rb = run_cli(cmd + " " + sample(name).string() + " --seed 7", dir_b);
    CHECK(ra.exit_code == rb.exit_code);
    CHECK(slurp(dir_a / "result.json") == slurp(dir_b / "result.json"));
    CHECK(!slurp(dir_a / "result.json").empty());
  }
}

TEST_CASE("thread count does not change the output bytes") {
  const fs::path dir_a = fresh_dir("thr1");
  const fs::path dir_b = fresh_dir("thr4");
  run_cli("solve " + sample("minimize_box.json").string() + " --threads 1", dir_a);
  run_cli("solve " + sample("minimize_box.json").string() + " --threads 4", dir_b);
  CHECK(slurp(dir_a / "result.json") == slurp(dir_b / "result.json"));
}

TEST_CASE("selftest passes") {
  const fs::path dir = fresh_dir("selftest");
  auto r = run_cli("selftest", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("selftest passed") != std::string::npos);
}

TEST_CASE("vi problems with a phi payload and explicit method") {
  const fs::path dir = fresh_dir("viphi");
  const fs::path input = dir / "vi_phi.json";
  {
    std::ofstream out(input);
    out << R"({
      "version": "1",
      "space": {"p": [0.5, 0.5]},
      "algebra": {"atoms": [[0], [1]]},
      "problem": {
        "kind": "vi",
        "operator": {"kind": "linear", "d": 1, "matrices": [[[1.0]], [[2.0]]]},
        "f": {"d": 1, "data": [[3.0], [-0.5]]},
        "phi": {"kind": "cond_norm_p", "d": 1, "p": 1.0, "lambda": {"values": [1.0, 1.0]}},
        "v0": {"d": 1, "data": [[0.0], [0.0]]},
        "method": "forward_backward"
      }
    })";
  }
  auto r = run_cli("solve " + input.string(), dir);
  CHECK(r.exit_code == 0);
  const json result = json::parse(slurp(dir / "result.json"));
  CHECK(result.at("result").at("method") == "forward_backward");
  // The VI 0 in M(u) - f + d|u| solves per scenario atom:
  // u = soft-threshold(f)/diag: atom 0: (3 - 1)/1 = 2; atom 1: 0 since |f| <= 1.
  const json& u = result.at("result").at("u").at("data");
  CHECK(u[0][0].get<double>() == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(u[1][0].get<double>() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(result.at("result").at("hypotheses_verified") == true);
}
