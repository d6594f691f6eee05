#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "l0opt/xreal.hpp"

namespace l0opt {

/// Finite probability space: n scenarios with strictly positive weights.
///
/// Zero-probability scenarios are rejected at construction so that
/// equivalence classes of random variables are trivial. Weights must sum
/// to 1 within 1e-12 and are renormalized to sum exactly to 1.
class ProbSpace {
 public:
  explicit ProbSpace(std::vector<double> weights);

  int size() const { return static_cast<int>(data_->p.size()); }
  double weight(int scenario) const { return data_->p[static_cast<size_t>(scenario)]; }
  const std::vector<double>& weights() const { return data_->p; }

  static ProbSpace uniform(int n);

  friend bool operator==(const ProbSpace& a, const ProbSpace& b) {
    return a.data_ == b.data_ || a.data_->p == b.data_->p;
  }
  friend bool operator!=(const ProbSpace& a, const ProbSpace& b) { return !(a == b); }

 private:
  struct Data {
    std::vector<double> p;
  };
  std::shared_ptr<const Data> data_;
};

/// A sub-sigma-algebra of the full scenario algebra, represented as a
/// partition of {0..n-1} into atoms. Atoms are canonicalized (each block
/// sorted ascending, blocks ordered by least element) so equality is
/// structural.
class SigmaAlgebra {
 public:
  SigmaAlgebra(ProbSpace space, std::vector<std::vector<int>> atoms);

  /// The full algebra: one atom per scenario.
  static SigmaAlgebra full(const ProbSpace& space);
  /// The trivial algebra: a single atom.
  static SigmaAlgebra trivial(const ProbSpace& space);

  const ProbSpace& space() const { return data_->space; }
  int atom_count() const { return static_cast<int>(data_->atoms.size()); }
  const std::vector<int>& atom(int a) const { return data_->atoms[static_cast<size_t>(a)]; }
  const std::vector<std::vector<int>>& atoms() const { return data_->atoms; }
  /// Atom index containing the given scenario.
  int atom_of(int scenario) const { return data_->atom_of[static_cast<size_t>(scenario)]; }
  double atom_prob(int a) const { return data_->atom_prob[static_cast<size_t>(a)]; }

  /// True when every atom of this algebra is contained in one atom of
  /// `coarser` (i.e. this algebra is finer).
  bool refines(const SigmaAlgebra& coarser) const;

  friend bool operator==(const SigmaAlgebra& a, const SigmaAlgebra& b) {
    return a.data_ == b.data_ ||
           (a.data_->space == b.data_->space && a.data_->atoms == b.data_->atoms);
  }
  friend bool operator!=(const SigmaAlgebra& a, const SigmaAlgebra& b) { return !(a == b); }

 private:
  struct Data {
    ProbSpace space;
    std::vector<std::vector<int>> atoms;
    std::vector<int> atom_of;
    std::vector<double> atom_prob;
    Data(ProbSpace s, std::vector<std::vector<int>> a)
        : space(std::move(s)), atoms(std::move(a)) {}
  };
  std::shared_ptr<const Data> data_;
};

/// An element of L0(F) / extended L0(F): one extended real per atom.
class RandomVariable {
 public:
  RandomVariable(SigmaAlgebra algebra, std::vector<XReal> values);

  static RandomVariable constant(const SigmaAlgebra& algebra, double v);
  static RandomVariable from_doubles(const SigmaAlgebra& algebra, const std::vector<double>& v);

  const SigmaAlgebra& algebra() const { return algebra_; }
  int size() const { return static_cast<int>(values_.size()); }
  const XReal& operator[](int atom) const { return values_[static_cast<size_t>(atom)]; }
  const std::vector<XReal>& values() const { return values_; }

  bool is_finite() const;
  /// Per-atom doubles; throws when any entry is infinite.
  std::vector<double> finite_values() const;

  RandomVariable map(XReal (*fn)(const XReal&)) const;

  friend RandomVariable operator+(const RandomVariable& a, const RandomVariable& b);
  friend RandomVariable operator-(const RandomVariable& a, const RandomVariable& b);
  friend RandomVariable operator-(const RandomVariable& a);
  friend RandomVariable operator*(double c, const RandomVariable& a);

  friend bool operator==(const RandomVariable& a, const RandomVariable& b) {
    return a.algebra_ == b.algebra_ && a.values_ == b.values_;
  }

 private:
  SigmaAlgebra algebra_;
  std::vector<XReal> values_;
};

/// A measurable set A in F together with its indicator class: stored as
/// the subset of atom indices it comprises.
class IndicatorSet {
 public:
  IndicatorSet(SigmaAlgebra algebra, std::vector<int> member_atoms);

  static IndicatorSet all(const SigmaAlgebra& algebra);
  static IndicatorSet none(const SigmaAlgebra& algebra);

  const SigmaAlgebra& algebra() const { return algebra_; }
  const std::vector<int>& member_atoms() const { return atoms_; }
  bool contains(int atom) const;
  bool empty() const { return atoms_.empty(); }
  bool covers_all() const { return static_cast<int>(atoms_.size()) == algebra_.atom_count(); }
  double probability() const;

  IndicatorSet complement() const;
  friend IndicatorSet operator|(const IndicatorSet& a, const IndicatorSet& b);
  friend IndicatorSet operator&(const IndicatorSet& a, const IndicatorSet& b);

  /// The indicator as a 0/1 random variable.
  RandomVariable indicator() const;

  friend bool operator==(const IndicatorSet& a, const IndicatorSet& b) {
    return a.algebra_ == b.algebra_ && a.atoms_ == b.atoms_;
  }

 private:
  SigmaAlgebra algebra_;
  std::vector<int> atoms_;  // sorted, unique
};

// ---------------------------------------------------------------------------
// Lattice operations on extended random variables.
// ---------------------------------------------------------------------------

/// Per-atom pointwise supremum of a nonempty family on a shared algebra.
RandomVariable ess_sup(const std::vector<RandomVariable>& family);
RandomVariable ess_inf(const std::vector<RandomVariable>& family);

/// Supremum of a directed-upward family together with a nondecreasing
/// selection h_{k(1)} <= h_{k(2)} <= ... from the family attaining it.
/// Throws if the family is not directed upward.
struct DirectedSupResult {
  RandomVariable sup;
  std::vector<int> selection;  // indices into the family, nondecreasing values
};
DirectedSupResult ess_sup_directed(const std::vector<RandomVariable>& family);
DirectedSupResult ess_inf_directed(const std::vector<RandomVariable>& family);

/// I_A x + I_{A^c} y: equals x on atoms of A and y elsewhere.
RandomVariable restrict_glue(const IndicatorSet& A, const RandomVariable& x,
                             const RandomVariable& y);

/// Ky Fan metric inf{eps > 0 : P(|x-y| > eps) <= eps}, computed exactly by
/// scanning the jump points of the deviation distribution. Metrizes
/// convergence in probability. Requires finite inputs.
double ky_fan_distance(const RandomVariable& x, const RandomVariable& y);

/// Uniform gauge: max over atoms of |x-y| (extended real). Matching
/// infinities count as distance zero.
XReal as_sup_distance(const RandomVariable& x, const RandomVariable& y);

/// The atoms where a <= b (per-atom comparison of extended reals).
IndicatorSet atoms_where_le(const RandomVariable& a, const RandomVariable& b);

}  // namespace l0opt
