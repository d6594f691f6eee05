#include "l0opt/rn_module.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace l0opt {

namespace {

void require_same_base(const ModuleElement& a, const ModuleElement& b, const char* op) {
  if (a.base_algebra() != b.base_algebra() || a.dim() != b.dim())
    throw std::invalid_argument(std::string(op) + ": mismatched modules");
}

bool is_inf(double p) { return std::isinf(p) && p > 0; }

void check_exponent(double p, const char* op) {
  if (std::isnan(p) || p < 1.0)
    throw std::invalid_argument(std::string(op) + ": exponent must satisfy p >= 1");
}

}  // namespace

// ---------------------------------------------------------------------------
// ModuleElement
// ---------------------------------------------------------------------------

ModuleElement::ModuleElement(SigmaAlgebra base_algebra, Eigen::MatrixXd data)
    : algebra_(std::move(base_algebra)), data_(std::move(data)) {
  if (static_cast<int>(data_.rows()) != algebra_.space().size())
    throw std::invalid_argument("ModuleElement: one row per scenario required");
  if (data_.cols() < 1) throw std::invalid_argument("ModuleElement: dimension must be positive");
  if (!data_.allFinite()) throw std::invalid_argument("ModuleElement: entries must be finite");
}

ModuleElement ModuleElement::zero(const SigmaAlgebra& base_algebra, int d) {
  return ModuleElement(base_algebra,
                       Eigen::MatrixXd::Zero(base_algebra.space().size(), d));
}

ModuleElement ModuleElement::constant(const SigmaAlgebra& base_algebra, const Eigen::VectorXd& v) {
  Eigen::MatrixXd m(base_algebra.space().size(), v.size());
  for (int s = 0; s < m.rows(); ++s) m.row(s) = v.transpose();
  return ModuleElement(base_algebra, std::move(m));
}

bool ModuleElement::is_base_measurable(double tol) const {
  for (int a = 0; a < algebra_.atom_count(); ++a) {
    const auto& block = algebra_.atom(a);
    for (size_t i = 1; i < block.size(); ++i) {
      if ((data_.row(block[i]) - data_.row(block[0])).cwiseAbs().maxCoeff() > tol) return false;
    }
  }
  return true;
}

ModuleElement operator+(const ModuleElement& a, const ModuleElement& b) {
  require_same_base(a, b, "ModuleElement+");
  return ModuleElement(a.algebra_, a.data_ + b.data_);
}

ModuleElement operator-(const ModuleElement& a, const ModuleElement& b) {
  require_same_base(a, b, "ModuleElement-");
  return ModuleElement(a.algebra_, a.data_ - b.data_);
}

ModuleElement operator-(const ModuleElement& a) { return ModuleElement(a.algebra_, -a.data_); }

ModuleElement operator*(double c, const ModuleElement& a) {
  return ModuleElement(a.algebra_, c * a.data_);
}

ModuleElement operator*(const RandomVariable& xi, const ModuleElement& a) {
  if (xi.algebra() != a.algebra_)
    throw std::invalid_argument("ModuleElement scalar action: mismatched algebras");
  if (!xi.is_finite())
    throw std::invalid_argument("ModuleElement scalar action: scalar must be finite");
  Eigen::MatrixXd out = a.data_;
  for (int s = 0; s < out.rows(); ++s) out.row(s) *= xi[a.algebra_.atom_of(s)].value();
  return ModuleElement(a.algebra_, std::move(out));
}

RandomVariable DualFunctional::operator()(const ModuleElement& x) const {
  return pairing(rep_, x);
}

// ---------------------------------------------------------------------------
// AtomLayout
// ---------------------------------------------------------------------------

AtomLayout::AtomLayout(const SigmaAlgebra& algebra, int d) : algebra_(algebra), d_(d) {
  if (d < 1) throw std::invalid_argument("AtomLayout: dimension must be positive");
  const int m = algebra.atom_count();
  weights_.resize(static_cast<size_t>(m));
  scen_weights_.resize(static_cast<size_t>(m));
  for (int a = 0; a < m; ++a) {
    const auto& block = algebra.atom(a);
    const double pa = algebra.atom_prob(a);
    Eigen::VectorXd sw(static_cast<int>(block.size()));
    Eigen::VectorXd w(static_cast<int>(block.size()) * d);
    for (size_t i = 0; i < block.size(); ++i) {
      const double wi = algebra.space().weight(block[i]) / pa;
      sw[static_cast<int>(i)] = wi;
      for (int j = 0; j < d; ++j) w[static_cast<int>(i) * d + j] = wi;
    }
    scen_weights_[static_cast<size_t>(a)] = std::move(sw);
    weights_[static_cast<size_t>(a)] = std::move(w);
  }
}

Eigen::VectorXd AtomLayout::stack(const ModuleElement& x, int atom) const {
  if (x.base_algebra() != algebra_ || x.dim() != d_)
    throw std::invalid_argument("AtomLayout::stack: element does not match layout");
  const auto& block = algebra_.atom(atom);
  Eigen::VectorXd v(static_cast<int>(block.size()) * d_);
  for (size_t i = 0; i < block.size(); ++i)
    v.segment(static_cast<int>(i) * d_, d_) = x.data().row(block[i]).transpose();
  return v;
}

void AtomLayout::unstack(const Eigen::VectorXd& v, int atom, Eigen::MatrixXd& data) const {
  const auto& block = algebra_.atom(atom);
  for (size_t i = 0; i < block.size(); ++i)
    data.row(block[i]) = v.segment(static_cast<int>(i) * d_, d_).transpose();
}

ModuleElement AtomLayout::assemble(const std::vector<Eigen::VectorXd>& per_atom) const {
  Eigen::MatrixXd data(algebra_.space().size(), d_);
  for (int a = 0; a < atom_count(); ++a) unstack(per_atom[static_cast<size_t>(a)], a, data);
  return ModuleElement(algebra_, std::move(data));
}

double AtomLayout::inner(int atom, const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
  return (weights(atom).array() * u.array() * v.array()).sum();
}

double AtomLayout::norm(int atom, const Eigen::VectorXd& u) const {
  return std::sqrt(std::max(0.0, inner(atom, u, u)));
}

// ---------------------------------------------------------------------------
// Conditional expectation and norms
// ---------------------------------------------------------------------------

std::vector<Eigen::VectorXd> cond_expectation(const ModuleElement& x) {
  const SigmaAlgebra& alg = x.base_algebra();
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<size_t>(alg.atom_count()));
  for (int a = 0; a < alg.atom_count(); ++a) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.dim());
    for (int s : alg.atom(a)) acc += alg.space().weight(s) * x.data().row(s).transpose();
    out.push_back(acc / alg.atom_prob(a));
  }
  return out;
}

ModuleElement broadcast(const SigmaAlgebra& algebra,
                        const std::vector<Eigen::VectorXd>& per_atom) {
  if (static_cast<int>(per_atom.size()) != algebra.atom_count())
    throw std::invalid_argument("broadcast: one vector per atom required");
  const int d = static_cast<int>(per_atom.front().size());
  Eigen::MatrixXd data(algebra.space().size(), d);
  for (int a = 0; a < algebra.atom_count(); ++a)
    for (int s : algebra.atom(a)) data.row(s) = per_atom[static_cast<size_t>(a)].transpose();
  return ModuleElement(algebra, std::move(data));
}

RandomVariable cond_norm(const ModuleElement& x, double p) {
  check_exponent(p, "cond_norm");
  const SigmaAlgebra& alg = x.base_algebra();
  std::vector<XReal> out;
  out.reserve(static_cast<size_t>(alg.atom_count()));
  for (int a = 0; a < alg.atom_count(); ++a) {
    const auto& block = alg.atom(a);
    double v = 0.0;
    if (is_inf(p)) {
      for (int s : block) v = std::max(v, x.data().row(s).norm());
    } else {
      const double pa = alg.atom_prob(a);
      for (int s : block)
        v += alg.space().weight(s) / pa * std::pow(x.data().row(s).norm(), p);
      v = std::pow(v, 1.0 / p);
    }
    out.push_back(XReal::finite(v));
  }
  return RandomVariable(alg, std::move(out));
}

double global_norm(const ModuleElement& x, double inner_p, double outer_p) {
  check_exponent(inner_p, "global_norm");
  check_exponent(outer_p, "global_norm");
  const SigmaAlgebra& alg = x.base_algebra();
  const RandomVariable cn = cond_norm(x, inner_p);
  if (is_inf(outer_p)) {
    double v = 0.0;
    for (int a = 0; a < alg.atom_count(); ++a) v = std::max(v, cn[a].value());
    return v;
  }
  double acc = 0.0;
  for (int s = 0; s < alg.space().size(); ++s)
    acc += alg.space().weight(s) * std::pow(cn[alg.atom_of(s)].value(), outer_p);
  return std::pow(acc, 1.0 / outer_p);
}

// ---------------------------------------------------------------------------
// Combinations and gluing
// ---------------------------------------------------------------------------

ModuleElement l0_convex_combination(const RandomVariable& xi, const ModuleElement& x,
                                    const ModuleElement& y) {
  require_same_base(x, y, "l0_convex_combination");
  if (xi.algebra() != x.base_algebra())
    throw std::invalid_argument("l0_convex_combination: mismatched algebras");
  for (int a = 0; a < xi.size(); ++a) {
    if (!xi[a].is_finite() || xi[a].value() < 0.0 || xi[a].value() > 1.0)
      throw std::invalid_argument("l0_convex_combination: xi must lie in [0,1] per atom");
  }
  Eigen::MatrixXd data(x.scenario_count(), x.dim());
  const SigmaAlgebra& alg = x.base_algebra();
  for (int s = 0; s < x.scenario_count(); ++s) {
    const double t = xi[alg.atom_of(s)].value();
    data.row(s) = t * x.data().row(s) + (1.0 - t) * y.data().row(s);
  }
  return ModuleElement(alg, std::move(data));
}

ModuleElement concatenate(const std::vector<IndicatorSet>& partition,
                          const std::vector<ModuleElement>& xs) {
  if (partition.empty() || partition.size() != xs.size())
    throw std::invalid_argument("concatenate: need one element per partition block");
  const SigmaAlgebra& alg = xs.front().base_algebra();
  std::vector<int> owner(static_cast<size_t>(alg.atom_count()), -1);
  for (size_t k = 0; k < partition.size(); ++k) {
    if (partition[k].algebra() != alg)
      throw std::invalid_argument("concatenate: mismatched algebras");
    require_same_base(xs[k], xs.front(), "concatenate");
    for (int a : partition[k].member_atoms()) {
      if (owner[static_cast<size_t>(a)] != -1)
        throw std::invalid_argument("concatenate: partition blocks overlap");
      owner[static_cast<size_t>(a)] = static_cast<int>(k);
    }
  }
  for (int a = 0; a < alg.atom_count(); ++a)
    if (owner[static_cast<size_t>(a)] == -1)
      throw std::invalid_argument("concatenate: partition does not cover all atoms");

  Eigen::MatrixXd data(xs.front().scenario_count(), xs.front().dim());
  for (int s = 0; s < data.rows(); ++s)
    data.row(s) = xs[static_cast<size_t>(owner[static_cast<size_t>(alg.atom_of(s))])].data().row(s);
  return ModuleElement(alg, std::move(data));
}

ModuleElement restrict_glue(const IndicatorSet& A, const ModuleElement& x,
                            const ModuleElement& y) {
  require_same_base(x, y, "restrict_glue");
  if (A.algebra() != x.base_algebra())
    throw std::invalid_argument("restrict_glue: mismatched algebras");
  Eigen::MatrixXd data = y.data();
  for (int a : A.member_atoms())
    for (int s : x.base_algebra().atom(a)) data.row(s) = x.data().row(s);
  return ModuleElement(x.base_algebra(), std::move(data));
}

RandomVariable pairing(const ModuleElement& f_rep, const ModuleElement& x) {
  require_same_base(f_rep, x, "pairing");
  const SigmaAlgebra& alg = x.base_algebra();
  std::vector<XReal> out;
  out.reserve(static_cast<size_t>(alg.atom_count()));
  for (int a = 0; a < alg.atom_count(); ++a) {
    double acc = 0.0;
    for (int s : alg.atom(a))
      acc += alg.space().weight(s) * f_rep.data().row(s).dot(x.data().row(s));
    out.push_back(XReal::finite(acc / alg.atom_prob(a)));
  }
  return RandomVariable(alg, std::move(out));
}

RandomVariable pairing(const DualFunctional& f, const ModuleElement& x) {
  return pairing(f.representer(), x);
}

// ---------------------------------------------------------------------------
// Finitely generated decomposition
// ---------------------------------------------------------------------------

FinGenDecomposition fin_gen_decompose(const std::vector<ModuleElement>& generators,
                                      double rank_rtol) {
  if (generators.empty()) throw std::invalid_argument("fin_gen_decompose: empty generator list");
  const SigmaAlgebra& alg = generators.front().base_algebra();
  const int d = generators.front().dim();
  const int m = static_cast<int>(generators.size());
  for (const auto& g : generators) {
    require_same_base(g, generators.front(), "fin_gen_decompose");
    if (!g.is_base_measurable(1e-14))
      throw std::invalid_argument("fin_gen_decompose: generators must be F-measurable");
  }

  FinGenDecomposition out;
  out.atom_rank.resize(static_cast<size_t>(alg.atom_count()));
  out.atom_basis.resize(static_cast<size_t>(alg.atom_count()));
  std::vector<std::vector<int>> buckets(static_cast<size_t>(m) + 1);

  for (int a = 0; a < alg.atom_count(); ++a) {
    const int rep = alg.atom(a).front();
    Eigen::MatrixXd G(d, m);
    for (int k = 0; k < m; ++k) G.col(k) = generators[static_cast<size_t>(k)].data().row(rep);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    const auto& sv = svd.singularValues();
    int rank = 0;
    if (sv.size() > 0 && sv[0] > 0.0) {
      const double thresh = rank_rtol * sv[0];
      for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > thresh) ++rank;
    }

    std::vector<int> basis;
    if (rank > 0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(G);
      const auto& perm = qr.colsPermutation().indices();
      for (int i = 0; i < rank; ++i) basis.push_back(perm[i]);
      std::sort(basis.begin(), basis.end());
    }
    out.atom_rank[static_cast<size_t>(a)] = rank;
    out.atom_basis[static_cast<size_t>(a)] = std::move(basis);
    buckets[static_cast<size_t>(rank)].push_back(a);
  }

  out.rank_sets.reserve(buckets.size());
  for (auto& atoms : buckets) out.rank_sets.emplace_back(alg, std::move(atoms));
  return out;
}

}  // namespace l0opt
