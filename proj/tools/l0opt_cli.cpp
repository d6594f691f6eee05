// Batch front door: loads a problem file, dispatches to the solvers and
// certifiers, and writes machine-readable certificates plus per-atom CSV
// tables. Exit codes: 0 success, 2 certified infeasibility/non-compactness
// (a valid verdict), 1 errors.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "l0opt/json_io.hpp"
#include "l0opt/parallel.hpp"

namespace {

using l0opt::io::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitVerdict = 2;

struct CliConfig {
  std::string input;
  double tol = 1e-7;
  std::uint64_t seed = 42;
  std::string out = ".";
  std::string format = "json";
};

l0opt::SolveOptions solve_options(const CliConfig& cfg) {
  l0opt::SolveOptions opt;
  opt.cert_tol = cfg.tol;
  opt.seed = cfg.seed;
  return opt;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open input file: " + path);
  json j;
  in >> j;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string rv_csv(const l0opt::RandomVariable& rv, int atom) {
  return rv[atom].is_finite() ? csv_number(rv[atom].value()) : rv[atom].str();
}

struct Outcome {
  json result;
  std::string csv;
  int exit_code = kExitOk;
  std::string verdict = "ok";
};

// -- command handlers ---------------------------------------------------------

Outcome run_solve(const json& problem, const l0opt::SigmaAlgebra& alg, const CliConfig& cfg) {
  using namespace l0opt;
  const std::string kind = problem.at("kind").get<std::string>();
  const SolveOptions opts = solve_options(cfg);
  Outcome out;

  if (kind == "minimize") {
    io::expect_fields(problem, "problem(minimize)", {"kind", "objective", "set"});
    StableFunction f = io::decode_function(problem.at("objective"), alg);
    StableConvexSet G = io::decode_set(problem.at("set"), alg);
    MinimizationResult res = minimize(f, G, opts);
    out.result = io::encode(res);
    std::ostringstream csv;
    csv << "atom,value,residual_at_solution,residual_at_probe,iterations\n";
    for (int a = 0; a < alg.atom_count(); ++a)
      csv << a << ',' << rv_csv(res.value, a) << ',' << rv_csv(res.residual_at_solution, a)
          << ',' << rv_csv(res.residual_at_probe, a) << ','
          << res.iterations[static_cast<size_t>(a)] << '\n';
    out.csv = csv.str();
    return out;
  }
  if (kind == "hansen_richard") {
    io::expect_fields(problem, "problem(hansen_richard)", {"kind", "pi", "w", "set"});
    ModuleElement pi = io::decode_element(problem.at("pi"), alg);
    RandomVariable w = io::decode_rv(problem.at("w"), alg);
    StableConvexSet M = problem.contains("set") ? io::decode_set(problem.at("set"), alg)
                                                : StableConvexSet::whole_space(alg, 1);
    MinimizationResult res = hansen_richard(pi, w, M, opts);
    out.result = io::encode(res);
    std::ostringstream csv;
    csv << "atom,variance,residual_at_solution,degenerate\n";
    for (int a = 0; a < alg.atom_count(); ++a)
      csv << a << ',' << rv_csv(res.value, a) << ',' << rv_csv(res.residual_at_solution, a)
          << ',' << (res.degenerate ? 1 : 0) << '\n';
    out.csv = csv.str();
    return out;
  }
  if (kind == "vi") {
    io::expect_fields(problem, "problem(vi)",
                      {"kind", "operator", "f", "phi", "set", "v0", "method"});
    MonotoneOperator M = io::decode_operator(problem.at("operator"), alg);
    DualFunctional f(io::decode_element(problem.at("f"), alg));
    VIMethod method = VIMethod::Auto;
    if (problem.contains("method")) {
      const std::string m = problem.at("method").get<std::string>();
      if (m == "forward_backward")
        method = VIMethod::ForwardBackward;
      else if (m == "extragradient")
        method = VIMethod::Extragradient;
      else if (m == "fixed_point_step1")
        method = VIMethod::FixedPointStep1;
      else if (m != "auto")
        throw std::invalid_argument("problem(vi): unknown method '" + m + "'");
    }
    VISolution sol = [&] {
      if (problem.contains("set")) {
        if (problem.contains("phi") || problem.contains("v0"))
          throw std::invalid_argument("problem(vi): give either phi/v0 or set, not both");
        return solve_vi_over_set(M, f, io::decode_set(problem.at("set"), alg), opts, method);
      }
      StableFunction phi = io::decode_function(problem.at("phi"), alg);
      std::optional<ModuleElement> v0;
      if (problem.contains("v0")) v0 = io::decode_element(problem.at("v0"), alg);
      return solve_vi(M, f, phi, v0, opts, method);
    }();
    out.result = io::encode(sol);
    std::ostringstream csv;
    csv << "atom,direct_residual,minty_residual,fixed_point_gauge,iterations\n";
    for (int a = 0; a < alg.atom_count(); ++a)
      csv << a << ',' << rv_csv(sol.direct_residual, a) << ',' << rv_csv(sol.minty_residual, a)
          << ',' << rv_csv(sol.fixed_point_gauge, a) << ','
          << sol.iterations[static_cast<size_t>(a)] << '\n';
    out.csv = csv.str();
    return out;
  }
  if (kind == "project") {
    io::expect_fields(problem, "problem(project)", {"kind", "set", "x"});
    StableConvexSet G = io::decode_set(problem.at("set"), alg);
    ModuleElement x = io::decode_element(problem.at("x"), alg);
    ModuleElement u = project(G, x);
    out.result = json{{"projection", io::encode(u)}};
    RandomVariable dist = cond_norm(u - x, 2.0);
    std::ostringstream csv;
    csv << "atom,distance\n";
    for (int a = 0; a < alg.atom_count(); ++a) csv << a << ',' << rv_csv(dist, a) << '\n';
    out.csv = csv.str();
    return out;
  }
  throw std::invalid_argument("solve: unsupported problem kind '" + kind + "'");
}

Outcome run_certify(const json& problem, const l0opt::SigmaAlgebra& alg, const CliConfig& cfg) {
  using namespace l0opt;
  const std::string kind = problem.at("kind").get<std::string>();
  Outcome out;

  auto interval_of = [&](const json& j) {
    io::expect_fields(j, "interval", {"a", "b"});
    return RandomInterval(io::decode_rv(j.at("a"), alg), io::decode_rv(j.at("b"), alg));
  };

  if (kind == "certify_compact") {
    io::expect_fields(problem, "problem(certify_compact)", {"kind", "set", "interval"});
    CompactnessCertificate cert =
        problem.contains("interval")
            ? certify_order_bounded(interval_of(problem.at("interval")))
            : certify_order_bounded(io::decode_set(problem.at("set"), alg));
    out.result = io::encode(cert);
    if (!cert.compact) {
      out.exit_code = kExitVerdict;
      out.verdict = "not_compact";
    }
    std::ostringstream csv;
    csv << "atom,order_bound\n";
    for (int a = 0; a < alg.atom_count(); ++a)
      csv << a << ',' << rv_csv(cert.order_bound, a) << '\n';
    out.csv = csv.str();
    return out;
  }
  if (kind == "james") {
    io::expect_fields(problem, "problem(james)",
                      {"kind", "set", "interval", "duals", "dual_count"});
    JamesCertificate cert = [&] {
      if (problem.contains("interval")) {
        std::vector<RandomVariable> duals;
        if (problem.contains("duals")) {
          for (const auto& d : problem.at("duals")) duals.push_back(io::decode_rv(d, alg));
        } else {
          Rng rng(cfg.seed);
          const int count =
              problem.contains("dual_count") ? problem.at("dual_count").get<int>() : 20;
          for (int k = 0; k < count; ++k) {
            std::vector<double> vals(static_cast<size_t>(alg.atom_count()));
            for (double& v : vals) v = rng.normal();
            duals.push_back(RandomVariable::from_doubles(alg, vals));
          }
        }
        return james_certify(interval_of(problem.at("interval")), duals);
      }
      StableConvexSet G = io::decode_set(problem.at("set"), alg);
      std::vector<DualFunctional> duals;
      if (problem.contains("duals")) {
        for (const auto& d : problem.at("duals")) duals.emplace_back(io::decode_element(d, alg));
      } else {
        const int count =
            problem.contains("dual_count") ? problem.at("dual_count").get<int>() : 20;
        duals = default_james_duals(alg, G.dim(), count, cfg.seed);
      }
      return james_certify(G, duals);
    }();
    out.result = io::encode(cert);
    if (!cert.compact_evidence) {
      out.exit_code = kExitVerdict;
      out.verdict = "not_compact";
    }
    std::ostringstream csv;
    csv << "dual,attained,witness_atom\n";
    for (size_t i = 0; i < cert.per_dual.size(); ++i)
      csv << i << ',' << (cert.per_dual[i].attained ? 1 : 0) << ','
          << cert.per_dual[i].witness_atom << '\n';
    out.csv = csv.str();
    return out;
  }
  throw std::invalid_argument("certify: unsupported problem kind '" + kind + "'");
}

Outcome run_decompose(const json& problem, const l0opt::SigmaAlgebra& alg) {
  using namespace l0opt;
  io::expect_fields(problem, "problem(decompose)", {"kind", "generators"});
  std::vector<ModuleElement> generators;
  for (const auto& g : problem.at("generators")) generators.push_back(io::decode_element(g, alg));
  FinGenDecomposition dec = fin_gen_decompose(generators);
  Outcome out;
  out.result = io::encode(dec);
  std::ostringstream csv;
  csv << "atom,rank\n";
  for (int a = 0; a < alg.atom_count(); ++a)
    csv << a << ',' << dec.atom_rank[static_cast<size_t>(a)] << '\n';
  out.csv = csv.str();
  return out;
}

Outcome run_extract(const json& problem, const l0opt::SigmaAlgebra& alg) {
  using namespace l0opt;
  io::expect_fields(problem, "problem(bw_extract)", {"kind", "sequence", "bound", "depth"});
  std::vector<ModuleElement> xs;
  for (const auto& x : problem.at("sequence")) xs.push_back(io::decode_element(x, alg));
  RandomVariable bound = io::decode_rv(problem.at("bound"), alg);
  const int depth = problem.at("depth").get<int>();
  ForwardCombinationResult res = extract_forward_combinations(xs, bound, depth);
  Outcome out;
  out.result = io::encode(res);
  std::ostringstream csv;
  csv << "step,gauge\n";
  for (size_t k = 0; k < res.step_gauges.size(); ++k)
    csv << k << ',' << csv_number(res.step_gauges[k]) << '\n';
  out.csv = csv.str();
  return out;
}

int run_selftest(std::uint64_t seed);

int dispatch(const std::string& command, const CliConfig& cfg) {
  if (command == "selftest") return run_selftest(cfg.seed);

  const json file = load_json(cfg.input);
  l0opt::io::expect_fields(file, "problem file", {"version", "space", "algebra", "problem"});
  if (!file.contains("version") || file.at("version").get<std::string>() != "1")
    throw std::invalid_argument("problem file: unsupported or missing version (expected \"1\")");
  const l0opt::ProbSpace space = l0opt::io::decode_space(file.at("space"));
  const l0opt::SigmaAlgebra alg = l0opt::io::decode_algebra(file.at("algebra"), space);
  const json& problem = file.at("problem");
  if (!problem.is_object() || !problem.contains("kind"))
    throw std::invalid_argument("problem file: problem.kind required");

  Outcome out;
  try {
    if (command == "solve")
      out = run_solve(problem, alg, cfg);
    else if (command == "certify")
      out = run_certify(problem, alg, cfg);
    else if (command == "decompose")
      out = run_decompose(problem, alg);
    else if (command == "extract")
      out = run_extract(problem, alg);
    else
      throw std::invalid_argument("unknown command: " + command);
  } catch (const l0opt::InfeasibleProblem& e) {
    out.result = json{{"message", e.what()}};
    out.verdict = "infeasible";
    out.exit_code = kExitVerdict;
  }

  json envelope{{"version", "1"},
                {"command", command},
                {"kind", problem.at("kind").get<std::string>()},
                {"seed", cfg.seed},
                {"tol", cfg.tol},
                {"verdict", out.verdict},
                {"result", out.result}};

  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  if (cfg.format == "json" || cfg.format == "both")
    write_text(dir / "result.json", l0opt::io::dump_canonical(envelope));
  if ((cfg.format == "csv" || cfg.format == "both") && !out.csv.empty())
    write_text(dir / "result.csv", out.csv);
  std::cout << "verdict: " << out.verdict << "\n";
  return out.exit_code;
}

// ---------------------------------------------------------------------------
// Built-in selftest: seeded invariant batteries over the library surface.
// ---------------------------------------------------------------------------

int g_failures = 0;

void check(bool ok, const std::string& label) {
  if (ok) {
    std::cout << "[ok]   " << label << "\n";
  } else {
    std::cout << "[FAIL] " << label << "\n";
    ++g_failures;
  }
}

int run_selftest(std::uint64_t seed) {
  using namespace l0opt;
  Rng rng(seed);
  g_failures = 0;

  {  // extended-real conventions
    const XReal pi = XReal::pos_inf(), ni = XReal::neg_inf();
    check((pi + ni).is_pos_inf() && (0.0 * pi) == XReal::finite(0.0),
          "extended-real sum and product conventions");
  }

  {  // RN-module axioms on seeded instances
    bool ok = true;
    for (int trial = 0; trial < 60 && ok; ++trial) {
      std::vector<double> w(4);
      double sum = 0.0;
      for (double& v : w) sum += (v = 0.1 + rng.uniform());
      for (double& v : w) v /= sum;
      ProbSpace sp(w);
      SigmaAlgebra alg(sp, {{0, 1}, {2, 3}});
      Eigen::MatrixXd xd(4, 2), yd(4, 2);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) {
          xd(i, j) = rng.normal();
          yd(i, j) = rng.normal();
        }
      ModuleElement x(alg, xd), y(alg, yd);
      std::vector<double> xiv{rng.uniform(-2, 2), rng.uniform(-2, 2)};
      RandomVariable xi = RandomVariable::from_doubles(alg, xiv);
      for (double p : {1.0, 2.0, std::numeric_limits<double>::infinity()}) {
        RandomVariable h = cond_norm(xi * x, p);
        RandomVariable t = cond_norm(x + y, p);
        for (int a = 0; a < 2; ++a) {
          ok = ok && std::abs(h[a].value() -
                              std::abs(xi[a].value()) * cond_norm(x, p)[a].value()) <= 1e-12;
          ok = ok &&
               t[a].value() <= cond_norm(x, p)[a].value() + cond_norm(y, p)[a].value() + 1e-12;
        }
      }
    }
    check(ok, "conditional-norm homogeneity and triangle inequality");
  }

  {  // Ky Fan metric and gauge domination
    bool ok = true;
    SigmaAlgebra alg(ProbSpace::uniform(5), {{0, 1}, {2}, {3, 4}});
    auto rv = [&](Rng& r) {
      std::vector<double> v(3);
      for (double& t : v) t = r.uniform(-1, 1);
      return RandomVariable::from_doubles(alg, v);
    };
    for (int trial = 0; trial < 100 && ok; ++trial) {
      RandomVariable a = rv(rng), b = rv(rng), c = rv(rng);
      ok = ok && ky_fan_distance(a, b) <= ky_fan_distance(a, c) + ky_fan_distance(c, b) + 1e-12;
      ok = ok && ky_fan_distance(a, b) <= as_sup_distance(a, b).value() + 1e-12;
    }
    check(ok, "Ky Fan triangle inequality and uniform-gauge domination");
  }

  {  // projection + prox invariants
    bool ok = true;
    SigmaAlgebra alg(ProbSpace::uniform(4), {{0, 1}, {2, 3}});
    StableConvexSet box =
        StableConvexSet::box(alg, -Eigen::MatrixXd::Ones(4, 1), Eigen::MatrixXd::Ones(4, 1));
    StableFunction l1 =
        StableFunction::cond_pnorm_power(alg, 1, 1.0, RandomVariable::constant(alg, 0.4));
    for (int trial = 0; trial < 40 && ok; ++trial) {
      Eigen::MatrixXd xd(4, 1), yd(4, 1);
      for (int i = 0; i < 4; ++i) {
        xd(i, 0) = 2.0 * rng.normal();
        yd(i, 0) = 2.0 * rng.normal();
      }
      ModuleElement x(alg, xd), y(alg, yd);
      ModuleElement px = project(box, x);
      ok = ok && project(box, px) == px;
      RandomVariable le = cond_norm(project(box, x) - project(box, y), 2);
      RandomVariable ri = cond_norm(x - y, 2);
      for (int a = 0; a < 2; ++a) ok = ok && le[a].value() <= ri[a].value() + 1e-9;
      IndicatorSet A(alg, {0});
      ok = ok && l1.prox(restrict_glue(A, x, y)) == restrict_glue(A, l1.prox(x), l1.prox(y));
    }
    check(ok, "projection idempotence/nonexpansiveness and prox gluing stability");
  }

  {  // minimize certificate on a seeded instance
    SigmaAlgebra alg(ProbSpace::uniform(4), {{0, 1}, {2, 3}});
    Eigen::MatrixXd cd(4, 1);
    for (int i = 0; i < 4; ++i) cd(i, 0) = rng.normal();
    StableFunction f = StableFunction::half_sqdist(ModuleElement(alg, cd));
    StableConvexSet box =
        StableConvexSet::box(alg, Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Ones(4, 1));
    auto res = minimize(f, box);
    bool ok = true;
    for (int a = 0; a < 2; ++a)
      ok = ok && res.residual_at_solution[a].as_double() >= -1e-7 &&
           res.residual_at_probe[a].as_double() >= -1e-7;
    check(ok, "minimization optimality certificate");
  }

  {  // VI residuals at a solved instance
    SigmaAlgebra alg = SigmaAlgebra::full(ProbSpace::uniform(3));
    std::vector<Eigen::MatrixXd> mats;
    for (int a = 0; a < 3; ++a) mats.push_back(Eigen::MatrixXd::Identity(1, 1) * (1.0 + a));
    MonotoneOperator M = MonotoneOperator::linear(alg, 1, std::move(mats));
    Eigen::MatrixXd fd(3, 1);
    for (int i = 0; i < 3; ++i) fd(i, 0) = rng.normal();
    StableConvexSet box =
        StableConvexSet::box(alg, Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Ones(3, 1));
    auto sol = solve_vi_over_set(M, DualFunctional(ModuleElement(alg, fd)), box);
    bool ok = true;
    for (int a = 0; a < 3; ++a)
      ok = ok && sol.direct_residual[a].as_double() >= -1e-7 &&
           sol.minty_residual[a].as_double() >= -1e-7 &&
           sol.fixed_point_gauge[a].value() <= 1e-8;
    check(ok, "variational inequality residual certificates");
  }

  {  // compactness certifier agreement on seeded intervals
    bool ok = true;
    SigmaAlgebra alg(ProbSpace::uniform(4), {{0, 1}, {2, 3}});
    for (int trial = 0; trial < 40 && ok; ++trial) {
      std::vector<XReal> a(2), b(2);
      bool bounded = true;
      for (int i = 0; i < 2; ++i) {
        a[static_cast<size_t>(i)] = XReal::finite(-rng.uniform(0, 2));
        if (rng.uniform() < 0.25) {
          b[static_cast<size_t>(i)] = XReal::pos_inf();
          bounded = false;
        } else {
          b[static_cast<size_t>(i)] = XReal::finite(rng.uniform(0, 2));
        }
      }
      RandomInterval I(RandomVariable(alg, a), RandomVariable(alg, b));
      ok = ok && certify_order_bounded(I).compact == bounded;
    }
    check(ok, "order-boundedness certifier on random intervals");
  }

  std::cout << (g_failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return g_failures == 0 ? kExitOk : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenario-space convex optimization and variational inequality toolkit"};
  app.require_subcommand(1);

  CliConfig cfg;
  std::string threads;

  auto add_common = [&](CLI::App* cmd, bool needs_input) {
    if (needs_input) cmd->add_option("input", cfg.input, "problem JSON file")->required();
    cmd->add_option("--tol", cfg.tol, "certificate tolerance")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "seed for all sampled randomness")
        ->capture_default_str();
    cmd->add_option("--threads", threads, "worker threads (count or 'auto')");
    cmd->add_option("--out", cfg.out, "output directory")->capture_default_str();
    cmd->add_option("--format", cfg.format, "result format: json|csv|both")
        ->check(CLI::IsMember({"json", "csv", "both"}))
        ->capture_default_str();
  };

  add_common(app.add_subcommand("solve", "solve an optimization or VI problem"), true);
  add_common(app.add_subcommand("certify", "run a compactness certifier"), true);
  add_common(app.add_subcommand("decompose", "finitely generated submodule decomposition"),
             true);
  add_common(app.add_subcommand("extract", "forward-combination extraction"), true);
  add_common(app.add_subcommand("selftest", "run the built-in invariant suite"), false);

  CLI11_PARSE(app, argc, argv);

  if (!threads.empty()) {
    if (threads == "auto")
      l0opt::set_thread_count(0);
    else
      l0opt::set_thread_count(std::stoi(threads));
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
