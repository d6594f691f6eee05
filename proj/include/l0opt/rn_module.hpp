#pragma once

#include <Eigen/Dense>
#include <vector>

#include "l0opt/prob_core.hpp"

namespace l0opt {

/// An element of the RN module E = L0(full algebra, R^d) over L0(F):
/// one d-vector per scenario, all entries finite. The base algebra F
/// determines the conditional norms and which scalars act atomwise.
class ModuleElement {
 public:
  /// data: n x d, one row per scenario.
  ModuleElement(SigmaAlgebra base_algebra, Eigen::MatrixXd data);

  static ModuleElement zero(const SigmaAlgebra& base_algebra, int d);
  static ModuleElement constant(const SigmaAlgebra& base_algebra, const Eigen::VectorXd& v);

  const SigmaAlgebra& base_algebra() const { return algebra_; }
  const ProbSpace& space() const { return algebra_.space(); }
  int scenario_count() const { return static_cast<int>(data_.rows()); }
  int dim() const { return static_cast<int>(data_.cols()); }
  const Eigen::MatrixXd& data() const { return data_; }
  Eigen::RowVectorXd scenario(int s) const { return data_.row(s); }

  /// True when the scenario data is constant on every atom of F.
  bool is_base_measurable(double tol = 0.0) const;

  friend ModuleElement operator+(const ModuleElement& a, const ModuleElement& b);
  friend ModuleElement operator-(const ModuleElement& a, const ModuleElement& b);
  friend ModuleElement operator-(const ModuleElement& a);
  friend ModuleElement operator*(double c, const ModuleElement& a);
  /// Module action of a finite scalar in L0(F): multiplies every scenario
  /// in an atom by the atom's value.
  friend ModuleElement operator*(const RandomVariable& xi, const ModuleElement& a);

  friend bool operator==(const ModuleElement& a, const ModuleElement& b) {
    return a.algebra_ == b.algebra_ && a.data_ == b.data_;
  }

 private:
  SigmaAlgebra algebra_;
  Eigen::MatrixXd data_;
};

/// A continuous module functional on E, stored through its Riesz
/// representer (finite spaces are self-dual): f(x) = E[<f_rep, x> | F].
/// For p = 2 the dual norm equals cond_norm of the representer; for
/// other p dual-norm values are exposed only through the representer.
class DualFunctional {
 public:
  explicit DualFunctional(ModuleElement representer) : rep_(std::move(representer)) {}

  static DualFunctional zero(const SigmaAlgebra& base_algebra, int d) {
    return DualFunctional(ModuleElement::zero(base_algebra, d));
  }

  const ModuleElement& representer() const { return rep_; }
  /// The pairing f(x) as an element of L0(F).
  RandomVariable operator()(const ModuleElement& x) const;

  friend DualFunctional operator+(const DualFunctional& a, const DualFunctional& b) {
    return DualFunctional(a.rep_ + b.rep_);
  }
  friend DualFunctional operator*(double c, const DualFunctional& a) {
    return DualFunctional(c * a.rep_);
  }
  friend DualFunctional operator*(const RandomVariable& xi, const DualFunctional& a) {
    return DualFunctional(xi * a.rep_);
  }

 private:
  ModuleElement rep_;
};

/// Per-atom stacked view of the module: atom A with scenarios w_1..w_k and
/// dimension d maps to R^{k*d} (scenario-major), carrying the conditional
/// weights p_w / P(A). The conditional L2 geometry on an atom is the
/// weighted inner product sum_i wvec_i u_i v_i with each scenario weight
/// repeated d times.
class AtomLayout {
 public:
  AtomLayout(const SigmaAlgebra& algebra, int d);

  int atom_count() const { return algebra_.atom_count(); }
  int dim() const { return d_; }
  const SigmaAlgebra& algebra() const { return algebra_; }
  int stacked_dim(int atom) const {
    return static_cast<int>(algebra_.atom(atom).size()) * d_;
  }
  /// Conditional weights per stacked coordinate (scenario weight repeated d
  /// times); they sum to d within an atom.
  const Eigen::VectorXd& weights(int atom) const {
    return weights_[static_cast<size_t>(atom)];
  }
  /// Conditional scenario weights p_w / P(A) for the atom's scenarios.
  const Eigen::VectorXd& scenario_weights(int atom) const {
    return scen_weights_[static_cast<size_t>(atom)];
  }

  Eigen::VectorXd stack(const ModuleElement& x, int atom) const;
  void unstack(const Eigen::VectorXd& v, int atom, Eigen::MatrixXd& data) const;
  ModuleElement assemble(const std::vector<Eigen::VectorXd>& per_atom) const;

  double inner(int atom, const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
  double norm(int atom, const Eigen::VectorXd& u) const;

 private:
  SigmaAlgebra algebra_;
  int d_;
  std::vector<Eigen::VectorXd> weights_;
  std::vector<Eigen::VectorXd> scen_weights_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Generalized conditional expectation: per atom A,
/// (sum_{w in A} p_w x_w) / P(A).
std::vector<Eigen::VectorXd> cond_expectation(const ModuleElement& x);

/// Re-embeds per-atom vectors as an F-measurable module element.
ModuleElement broadcast(const SigmaAlgebra& algebra, const std::vector<Eigen::VectorXd>& per_atom);

/// Conditional p-norm |||x|||_p as an element of L0+(F). The scenario norm
/// |x_w| is Euclidean; p = inf gives the per-atom max.
RandomVariable cond_norm(const ModuleElement& x, double p);

/// ||x||_{inner_p, outer_p}: outer L^p average over scenarios of the
/// conditional-norm representative. With F the full algebra and
/// inner_p = outer_p this is the plain L^p norm.
double global_norm(const ModuleElement& x, double inner_p, double outer_p);

/// xi x + (1 - xi) y with xi in L0(F), 0 <= xi <= 1 per atom.
ModuleElement l0_convex_combination(const RandomVariable& xi, const ModuleElement& x,
                                    const ModuleElement& y);

/// The unique g with I_{A_k} g = I_{A_k} x_k for a partition {A_k} of the
/// atom set (countable concatenation, finite form).
ModuleElement concatenate(const std::vector<IndicatorSet>& partition,
                          const std::vector<ModuleElement>& xs);

/// Glue at module level: x on atoms of A, y elsewhere.
ModuleElement restrict_glue(const IndicatorSet& A, const ModuleElement& x,
                            const ModuleElement& y);

/// E[<f, x> | F] per atom.
RandomVariable pairing(const DualFunctional& f, const ModuleElement& x);
RandomVariable pairing(const ModuleElement& f_rep, const ModuleElement& x);

/// Decomposition of the submodule generated by F-measurable elements:
/// A_i is the union of atoms where the generator matrix has rank i, and
/// each atom carries a pivot basis of the span.
struct FinGenDecomposition {
  /// rank_sets[i] = atoms where the span has rank i, i = 0..#generators.
  std::vector<IndicatorSet> rank_sets;
  std::vector<int> atom_rank;                 // per atom
  std::vector<std::vector<int>> atom_basis;   // per atom: pivot generator indices
};
FinGenDecomposition fin_gen_decompose(const std::vector<ModuleElement>& generators,
                                      double rank_rtol = 1e-10);

}  // namespace l0opt
