#include "l0opt/json_io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace l0opt::io {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void dump_impl(const json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<size_t>(indent * depth), ' ');
  const std::string pad_in(static_cast<size_t>(indent * (depth + 1)), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        out += pad_in;
        out += json(it.key()).dump();
        out += ": ";
        dump_impl(it.value(), out, indent, depth + 1);
        if (i + 1 < j.size()) out += ",";
        out += "\n";
      }
      out += pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (size_t i = 0; i < j.size(); ++i) {
        out += pad_in;
        dump_impl(j[i], out, indent, depth + 1);
        if (i + 1 < j.size()) out += ",";
        out += "\n";
      }
      out += pad + "]";
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

double number_or_sentinel(const json& j, const std::string& where) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw std::invalid_argument(where + ": unknown sentinel '" + s + "'");
  }
  if (!j.is_number()) throw std::invalid_argument(where + ": expected a number");
  return j.get<double>();
}

json number_to_json(double v) {
  if (v == kInf) return json("inf");
  if (v == -kInf) return json("-inf");
  return json(v);
}

Eigen::MatrixXd decode_matrix(const json& j, const std::string& where) {
  if (!j.is_array()) throw std::invalid_argument(where + ": expected an array of rows");
  const int rows = static_cast<int>(j.size());
  int cols = -1;
  Eigen::MatrixXd M;
  for (int r = 0; r < rows; ++r) {
    if (!j[static_cast<size_t>(r)].is_array())
      throw std::invalid_argument(where + ": expected an array row");
    const int rc = static_cast<int>(j[static_cast<size_t>(r)].size());
    if (cols < 0) {
      cols = rc;
      M.resize(rows, cols);
    } else if (rc != cols) {
      throw std::invalid_argument(where + ": ragged rows");
    }
    for (int c = 0; c < cols; ++c)
      M(r, c) = number_or_sentinel(j[static_cast<size_t>(r)][static_cast<size_t>(c)], where);
  }
  if (rows == 0) throw std::invalid_argument(where + ": empty matrix");
  return M;
}

json encode_matrix(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(number_to_json(M(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd decode_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw std::invalid_argument(where + ": expected an array");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i)
    v[i] = number_or_sentinel(j[static_cast<size_t>(i)], where);
  return v;
}

json encode_vector(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(number_to_json(v[i]));
  return out;
}

const json& require(const json& j, const char* field, const std::string& where) {
  if (!j.is_object() || !j.contains(field))
    throw std::invalid_argument(where + ": missing field '" + field + "'");
  return j.at(field);
}

}  // namespace

std::string dump_canonical(const json& j, int indent) {
  std::string out;
  dump_impl(j, out, indent, 0);
  out += "\n";
  return out;
}

void expect_fields(const json& j, const std::string& where,
                   std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* f : allowed)
      if (it.key() == f) ok = true;
    if (!ok) throw std::invalid_argument(where + ": unknown field '" + it.key() + "'");
  }
}

// -- core types ---------------------------------------------------------------

json encode(const ProbSpace& space) {
  json p = json::array();
  for (double w : space.weights()) p.push_back(w);
  return json{{"p", std::move(p)}};
}

ProbSpace decode_space(const json& j) {
  expect_fields(j, "space", {"p"});
  const json& p = require(j, "p", "space");
  std::vector<double> w;
  for (const auto& v : p) w.push_back(number_or_sentinel(v, "space.p"));
  return ProbSpace(std::move(w));
}

json encode(const SigmaAlgebra& algebra) {
  json atoms = json::array();
  for (const auto& block : algebra.atoms()) atoms.push_back(block);
  return json{{"atoms", std::move(atoms)}};
}

SigmaAlgebra decode_algebra(const json& j, const ProbSpace& space) {
  expect_fields(j, "algebra", {"atoms"});
  const json& a = require(j, "atoms", "algebra");
  std::vector<std::vector<int>> blocks;
  for (const auto& blk : a) blocks.push_back(blk.get<std::vector<int>>());
  return SigmaAlgebra(space, std::move(blocks));
}

json encode(const RandomVariable& rv) {
  json values = json::array();
  for (int a = 0; a < rv.size(); ++a) {
    if (rv[a].is_pos_inf())
      values.push_back("inf");
    else if (rv[a].is_neg_inf())
      values.push_back("-inf");
    else
      values.push_back(rv[a].value());
  }
  return json{{"values", std::move(values)}};
}

RandomVariable decode_rv(const json& j, const SigmaAlgebra& algebra) {
  expect_fields(j, "random variable", {"values"});
  const json& values = require(j, "values", "random variable");
  std::vector<XReal> xs;
  for (const auto& v : values)
    xs.push_back(XReal::from_double(number_or_sentinel(v, "random variable")));
  return RandomVariable(algebra, std::move(xs));
}

json encode(const ModuleElement& x) {
  return json{{"d", x.dim()}, {"data", encode_matrix(x.data())}};
}

ModuleElement decode_element(const json& j, const SigmaAlgebra& algebra) {
  expect_fields(j, "module element", {"d", "data"});
  const int d = require(j, "d", "module element").get<int>();
  Eigen::MatrixXd data = decode_matrix(require(j, "data", "module element"), "module element");
  if (static_cast<int>(data.cols()) != d)
    throw std::invalid_argument("module element: d does not match data width");
  return ModuleElement(algebra, std::move(data));
}

json encode(const IndicatorSet& set) { return json{{"atoms", set.member_atoms()}}; }

IndicatorSet decode_indicator(const json& j, const SigmaAlgebra& algebra) {
  expect_fields(j, "indicator set", {"atoms"});
  return IndicatorSet(algebra, require(j, "atoms", "indicator set").get<std::vector<int>>());
}

// -- convex sets -----------------------------------------------------------------

namespace {

json encode_descriptor(const AtomDescriptor& desc) {
  if (const auto* box = std::get_if<BoxDesc>(&desc))
    return json{{"kind", "box"}, {"lo", encode_vector(box->lo)}, {"hi", encode_vector(box->hi)}};
  if (const auto* ball = std::get_if<BallDesc>(&desc))
    return json{{"kind", "ball"},
                {"center", encode_vector(ball->center)},
                {"radius", ball->radius}};
  if (const auto* aff = std::get_if<AffineDesc>(&desc))
    return json{{"kind", "affine"}, {"A", encode_matrix(aff->A)}, {"b", encode_vector(aff->b)}};
  if (const auto* hs = std::get_if<HalfspacesDesc>(&desc))
    return json{{"kind", "halfspaces"},
                {"A", encode_matrix(hs->A)},
                {"b", encode_vector(hs->b)}};
  const auto& inter = std::get<IntersectionDesc>(desc);
  json parts = json::array();
  for (const auto& part : inter.parts) parts.push_back(encode_descriptor(part));
  return json{{"kind", "intersection"}, {"parts", std::move(parts)}};
}

AtomDescriptor decode_descriptor(const json& j, const std::string& where) {
  const std::string kind = require(j, "kind", where).get<std::string>();
  if (kind == "box") {
    expect_fields(j, where, {"kind", "atom", "lo", "hi"});
    BoxDesc box;
    box.lo = decode_vector(require(j, "lo", where), where + ".lo");
    box.hi = decode_vector(require(j, "hi", where), where + ".hi");
    return box;
  }
  if (kind == "ball") {
    expect_fields(j, where, {"kind", "atom", "center", "radius"});
    BallDesc ball;
    ball.center = decode_vector(require(j, "center", where), where + ".center");
    ball.radius = number_or_sentinel(require(j, "radius", where), where + ".radius");
    return ball;
  }
  if (kind == "affine" || kind == "halfspaces") {
    expect_fields(j, where, {"kind", "atom", "A", "b"});
    Eigen::MatrixXd A = decode_matrix(require(j, "A", where), where + ".A");
    Eigen::VectorXd b = decode_vector(require(j, "b", where), where + ".b");
    if (kind == "affine") return AffineDesc{std::move(A), std::move(b)};
    return HalfspacesDesc{std::move(A), std::move(b)};
  }
  if (kind == "intersection") {
    expect_fields(j, where, {"kind", "atom", "parts"});
    IntersectionDesc inter;
    for (const auto& part : require(j, "parts", where))
      inter.parts.push_back(decode_descriptor(part, where + ".parts"));
    return inter;
  }
  throw std::invalid_argument(where + ": unknown descriptor kind '" + kind + "'");
}

}  // namespace

json encode(const StableConvexSet& G) {
  json atoms = json::array();
  for (int a = 0; a < G.base_algebra().atom_count(); ++a) {
    json desc = encode_descriptor(G.descriptor(a));
    desc["atom"] = a;
    atoms.push_back(std::move(desc));
  }
  return json{{"d", G.dim()}, {"atoms", std::move(atoms)},
              {"feasible", encode(G.feasible_point())}};
}

StableConvexSet decode_set(const json& j, const SigmaAlgebra& algebra) {
  expect_fields(j, "set", {"d", "atoms", "feasible"});
  const int d = require(j, "d", "set").get<int>();
  const json& atoms = require(j, "atoms", "set");
  if (static_cast<int>(atoms.size()) != algebra.atom_count())
    throw std::invalid_argument("set: one descriptor per atom required");
  std::vector<AtomDescriptor> descs(static_cast<size_t>(algebra.atom_count()),
                                    AtomDescriptor(BoxDesc{}));
  std::vector<bool> seen(static_cast<size_t>(algebra.atom_count()), false);
  for (size_t i = 0; i < atoms.size(); ++i) {
    const json& entry = atoms[i];
    int a = static_cast<int>(i);
    if (entry.is_object() && entry.contains("atom")) a = entry.at("atom").get<int>();
    if (a < 0 || a >= algebra.atom_count() || seen[static_cast<size_t>(a)])
      throw std::invalid_argument("set: atom indices must cover each atom exactly once");
    seen[static_cast<size_t>(a)] = true;
    descs[static_cast<size_t>(a)] = decode_descriptor(entry, "set.atoms");
  }
  std::optional<ModuleElement> feasible;
  if (j.contains("feasible")) feasible = decode_element(j.at("feasible"), algebra);
  return StableConvexSet(algebra, d, std::move(descs), std::move(feasible));
}

// -- functions -------------------------------------------------------------------

StableFunction decode_function(const json& j, const SigmaAlgebra& algebra) {
  const std::string kind = require(j, "kind", "function").get<std::string>();
  auto with_flags = [&](StableFunction f) {
    if (j.contains("coercive")) f = f.with_coercive(j.at("coercive").get<bool>());
    return f;
  };
  if (kind == "quadratic") {
    expect_fields(j, "function(quadratic)", {"kind", "d", "forms", "l", "constant", "coercive"});
    const int d = require(j, "d", "function").get<int>();
    std::vector<Eigen::MatrixXd> forms;
    for (const auto& m : require(j, "forms", "function"))
      forms.push_back(decode_matrix(m, "function.forms"));
    std::optional<DualFunctional> l;
    if (j.contains("l")) l = DualFunctional(decode_element(j.at("l"), algebra));
    std::optional<RandomVariable> constant;
    if (j.contains("constant")) constant = decode_rv(j.at("constant"), algebra);
    return with_flags(StableFunction::quadratic(algebra, d, std::move(forms), std::move(l),
                                                std::move(constant)));
  }
  if (kind == "conditional_square_norm") {
    expect_fields(j, "function(conditional_square_norm)", {"kind", "d", "coercive"});
    return with_flags(
        StableFunction::conditional_square_norm(algebra, require(j, "d", "function").get<int>()));
  }
  if (kind == "half_sqdist") {
    expect_fields(j, "function(half_sqdist)", {"kind", "x0", "coercive"});
    return with_flags(StableFunction::half_sqdist(decode_element(require(j, "x0", "function"),
                                                                 algebra)));
  }
  if (kind == "cond_norm_p") {
    expect_fields(j, "function(cond_norm_p)", {"kind", "d", "p", "lambda", "coercive"});
    return with_flags(StableFunction::cond_pnorm_power(
        algebra, require(j, "d", "function").get<int>(),
        number_or_sentinel(require(j, "p", "function"), "function.p"),
        decode_rv(require(j, "lambda", "function"), algebra)));
  }
  if (kind == "cond_variance") {
    expect_fields(j, "function(cond_variance)", {"kind", "d", "coercive"});
    return with_flags(
        StableFunction::cond_variance(algebra, require(j, "d", "function").get<int>()));
  }
  if (kind == "indicator") {
    expect_fields(j, "function(indicator)", {"kind", "set", "coercive"});
    return with_flags(
        StableFunction::indicator(decode_set(require(j, "set", "function"), algebra)));
  }
  if (kind == "separable") {
    expect_fields(j, "function(separable)", {"kind", "d", "breakpoints", "coeffs", "coercive"});
    std::vector<double> breaks;
    for (const auto& t : require(j, "breakpoints", "function"))
      breaks.push_back(number_or_sentinel(t, "function.breakpoints"));
    std::vector<Eigen::Vector3d> coeffs;
    for (const auto& c : require(j, "coeffs", "function")) {
      const Eigen::VectorXd v = decode_vector(c, "function.coeffs");
      if (v.size() != 3) throw std::invalid_argument("function.coeffs: need [a, b, c] triples");
      coeffs.emplace_back(v[0], v[1], v[2]);
    }
    return with_flags(StableFunction::separable(algebra, require(j, "d", "function").get<int>(),
                                                PlqFunction(std::move(breaks),
                                                            std::move(coeffs))));
  }
  if (kind == "linear") {
    expect_fields(j, "function(linear)", {"kind", "l", "coercive"});
    return with_flags(
        StableFunction::linear(DualFunctional(decode_element(require(j, "l", "function"),
                                                             algebra))));
  }
  if (kind == "scaled") {
    expect_fields(j, "function(scaled)", {"kind", "eta", "inner", "coercive"});
    return with_flags(StableFunction::scaled(decode_rv(require(j, "eta", "function"), algebra),
                                             decode_function(require(j, "inner", "function"),
                                                             algebra)));
  }
  if (kind == "sum") {
    expect_fields(j, "function(sum)", {"kind", "terms", "coercive"});
    std::vector<StableFunction> terms;
    for (const auto& t : require(j, "terms", "function"))
      terms.push_back(decode_function(t, algebra));
    return with_flags(StableFunction::sum(std::move(terms)));
  }
  throw std::invalid_argument("function: unknown kind '" + kind + "'");
}

// -- operators -------------------------------------------------------------------

MonotoneOperator decode_operator(const json& j, const SigmaAlgebra& algebra) {
  const std::string kind = require(j, "kind", "operator").get<std::string>();
  auto with_flags = [&](MonotoneOperator M) {
    if (j.contains("lipschitz")) M = M.with_lipschitz(decode_rv(j.at("lipschitz"), algebra));
    if (j.contains("alpha")) M = M.with_strong_modulus(decode_rv(j.at("alpha"), algebra));
    if (j.contains("coercive")) M = M.with_coercive(j.at("coercive").get<bool>());
    return M;
  };
  if (kind == "linear") {
    expect_fields(j, "operator(linear)", {"kind", "d", "matrices", "lipschitz", "alpha",
                                          "coercive"});
    std::vector<Eigen::MatrixXd> mats;
    for (const auto& m : require(j, "matrices", "operator"))
      mats.push_back(decode_matrix(m, "operator.matrices"));
    return with_flags(MonotoneOperator::linear(algebra, require(j, "d", "operator").get<int>(),
                                               std::move(mats)));
  }
  if (kind == "gradient") {
    expect_fields(j, "operator(gradient)", {"kind", "f", "lipschitz", "alpha", "coercive"});
    return with_flags(
        MonotoneOperator::gradient_of(decode_function(require(j, "f", "operator"), algebra)));
  }
  if (kind == "combination") {
    expect_fields(j, "operator(combination)", {"kind", "terms", "shift", "lipschitz", "alpha",
                                               "coercive"});
    std::vector<std::pair<RandomVariable, MonotoneOperator>> terms;
    for (const auto& t : require(j, "terms", "operator")) {
      expect_fields(t, "operator.terms", {"eta", "op"});
      terms.emplace_back(decode_rv(require(t, "eta", "operator.terms"), algebra),
                         decode_operator(require(t, "op", "operator.terms"), algebra));
    }
    std::optional<DualFunctional> shift;
    if (j.contains("shift")) shift = DualFunctional(decode_element(j.at("shift"), algebra));
    return with_flags(MonotoneOperator::combination(std::move(terms), std::move(shift)));
  }
  throw std::invalid_argument("operator: unknown kind '" + kind + "'");
}

// -- results ---------------------------------------------------------------------

json encode(const MinimizationResult& r) {
  return json{{"minimizer", encode(r.minimizer)},
              {"value", encode(r.value)},
              {"certificate",
               json{{"residual_at_solution", encode(r.residual_at_solution)},
                    {"residual_at_probe", encode(r.residual_at_probe)}}},
              {"iterations", r.iterations},
              {"unique_verified", r.unique_verified},
              {"degenerate", r.degenerate},
              {"hypotheses_verified", r.hypotheses_verified}};
}

json encode(const VISolution& s) {
  return json{{"u", encode(s.u)},
              {"direct_residual", encode(s.direct_residual)},
              {"minty_residual", encode(s.minty_residual)},
              {"fixed_point_gauge", encode(s.fixed_point_gauge)},
              {"iterations", s.iterations},
              {"method", s.method},
              {"hypotheses_verified", s.hypotheses_verified}};
}

json encode(const CompactnessCertificate& c) {
  json witness;
  if (!c.compact) {
    witness = json{{"atom", c.witness_atom},
                   {"coordinate", c.witness_coordinate},
                   {"sign", c.witness_sign}};
  }
  return json{{"compact", c.compact}, {"order_bound", encode(c.order_bound)},
              {"witness", std::move(witness)}};
}

json encode(const JamesCertificate& c) {
  json duals = json::array();
  for (const auto& pd : c.per_dual) {
    json entry{{"attained", pd.attained}};
    if (pd.attained) {
      entry["argmax"] = encode(*pd.argmax);
      entry["optimum"] = encode(*pd.optimum);
    } else {
      entry["witness_atom"] = pd.witness_atom;
    }
    duals.push_back(std::move(entry));
  }
  return json{{"compact_evidence", c.compact_evidence}, {"per_dual", std::move(duals)}};
}

json encode(const FinGenDecomposition& d) {
  json sets = json::array();
  for (const auto& rs : d.rank_sets) sets.push_back(rs.member_atoms());
  return json{{"atom_rank", d.atom_rank}, {"atom_basis", d.atom_basis},
              {"rank_sets", std::move(sets)}};
}

json encode(const ForwardCombinationResult& r) {
  json indices = json::array();
  for (int k = 0; k < r.indices.rows(); ++k) {
    json row = json::array();
    for (int s = 0; s < r.indices.cols(); ++s) row.push_back(r.indices(k, s));
    indices.push_back(std::move(row));
  }
  json ys = json::array();
  for (const auto& y : r.y) ys.push_back(encode(y));
  return json{{"indices", std::move(indices)},
              {"y", std::move(ys)},
              {"limit", encode(r.limit)},
              {"achieved_gauge", r.achieved_gauge},
              {"step_gauges", r.step_gauges}};
}

}  // namespace l0opt::io
