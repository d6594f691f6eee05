#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "l0opt/rn_module.hpp"
#include "l0opt/rng.hpp"

namespace l0opt {

// ---------------------------------------------------------------------------
// Per-atom convex descriptors over the atom's stacked coordinates.
//
// The ball is the conditional-L2 ball of the module norm: radius measured in
// the probability-weighted inner product of the atom (on single-scenario
// atoms this is the plain Euclidean ball). That choice keeps every primitive
// projection an exact formula and makes the James support point of the unit
// ball the normalized representer.
// ---------------------------------------------------------------------------

struct BoxDesc {
  Eigen::VectorXd lo;  // entries may be -inf
  Eigen::VectorXd hi;  // entries may be +inf
};
struct BallDesc {
  Eigen::VectorXd center;
  double radius = 0.0;
};
struct AffineDesc {  // { y : A y = b }
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};
struct HalfspacesDesc {  // { y : A y <= b }
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};
struct IntersectionDesc;

using AtomDescriptor =
    std::variant<BoxDesc, BallDesc, AffineDesc, HalfspacesDesc, IntersectionDesc>;

struct IntersectionDesc {
  std::vector<AtomDescriptor> parts;
};

/// A stable L0-convex set: one closed convex descriptor per atom of F, the
/// represented set being the atom product { x : x|_A in G_A for all A }.
/// Products of per-atom sets are automatically L0-convex, stable and closed
/// under countable concatenation. Nonemptiness is witnessed by a stored
/// feasible point per atom.
class StableConvexSet {
 public:
  StableConvexSet(SigmaAlgebra base_algebra, int d, std::vector<AtomDescriptor> per_atom,
                  std::optional<ModuleElement> feasible = std::nullopt);

  static StableConvexSet whole_space(const SigmaAlgebra& base_algebra, int d);
  /// Scenario-wise coordinate bounds, one row per scenario.
  static StableConvexSet box(const SigmaAlgebra& base_algebra, const Eigen::MatrixXd& lo,
                             const Eigen::MatrixXd& hi);
  /// Conditional-norm ball per atom around a module element.
  static StableConvexSet ball(const ModuleElement& center, const RandomVariable& radius);

  const SigmaAlgebra& base_algebra() const { return layout_.algebra(); }
  int dim() const { return layout_.dim(); }
  const AtomLayout& layout() const { return layout_; }
  const AtomDescriptor& descriptor(int atom) const {
    return per_atom_[static_cast<size_t>(atom)];
  }
  const ModuleElement& feasible_point() const { return feasible_; }

  /// Shifted set G - u0 (atomwise translation), used by the VI-over-set
  /// reduction when the null element is not in G.
  StableConvexSet translated(const ModuleElement& shift) const;

 private:
  AtomLayout layout_;
  std::vector<AtomDescriptor> per_atom_;
  ModuleElement feasible_;
};

/// A random closed interval [a, b] in extended L0(F), a <= b per atom.
struct RandomInterval {
  RandomVariable a;
  RandomVariable b;
  RandomInterval(RandomVariable lo, RandomVariable hi);
};

// ---------------------------------------------------------------------------
// Membership and projection
// ---------------------------------------------------------------------------

struct MembershipReport {
  bool member = true;
  std::vector<int> violating_atoms;
  std::vector<double> violations;  // worst constraint violation per listed atom
};

MembershipReport membership(const StableConvexSet& G, const ModuleElement& x, double tol = 1e-9);

/// Per-atom membership of a stacked vector (used internally and by tests).
bool atom_membership(const StableConvexSet& G, int atom, const Eigen::VectorXd& y, double tol);

/// S(x, G): the union of atoms A with I_A x in I_A G. Requires the null
/// element in G per atom.
IndicatorSet essential_membership(const StableConvexSet& G, const ModuleElement& x,
                                  double tol = 1e-9);

/// Conditional-L2 projection onto G, atom by atom: boxes clamp, balls
/// shrink radially, affine sets solve normal equations in the weighted
/// inner product, halfspace lists and intersections run Dykstra to 1e-9.
/// Throws on Dykstra non-convergence within the iteration cap.
ModuleElement project(const StableConvexSet& G, const ModuleElement& x);

/// Projection of one stacked atom vector.
Eigen::VectorXd project_atom(const StableConvexSet& G, int atom, const Eigen::VectorXd& y);

// ---------------------------------------------------------------------------
// Compactness certificates
// ---------------------------------------------------------------------------

struct CompactnessCertificate {
  bool compact = false;
  /// Per-atom bound on |coordinate| (or on |value| for intervals); +inf on
  /// unbounded atoms.
  RandomVariable order_bound;
  int witness_atom = -1;        // set when not compact
  int witness_coordinate = -1;  // stacked coordinate (sets only)
  int witness_sign = 0;         // +1 unbounded above, -1 below
  CompactnessCertificate(bool c, RandomVariable ob)
      : compact(c), order_bound(std::move(ob)) {}
};

/// Order-boundedness criterion: compact iff the per-atom support values of
/// all +-coordinate functionals are finite (for an interval: both ends
/// finite per atom).
CompactnessCertificate certify_order_bounded(const StableConvexSet& G);
CompactnessCertificate certify_order_bounded(const RandomInterval& I);

struct JamesPerDual {
  bool attained = false;
  int witness_atom = -1;                 // unbounded atom when not attained
  std::optional<ModuleElement> argmax;   // attaining g0 when attained
  std::optional<RandomVariable> optimum; // per-atom optimum when attained
};

struct JamesCertificate {
  /// True when every supplied functional attains its per-atom supremum.
  /// Finitely many duals are evidence for compactness, not a proof; a
  /// single non-attainment is a disproof.
  bool compact_evidence = false;
  std::vector<JamesPerDual> per_dual;
};

JamesCertificate james_certify(const StableConvexSet& G, const std::vector<DualFunctional>& duals);
/// Interval version: duals are multiplication functionals g -> eta * g.
JamesCertificate james_certify(const RandomInterval& I, const std::vector<RandomVariable>& duals);

/// Default dual family: coordinate functionals plus seeded Gaussian
/// representers.
std::vector<DualFunctional> default_james_duals(const SigmaAlgebra& base_algebra, int d,
                                                int count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward L0-convex combinations (randomized Bolzano-Weierstrass)
// ---------------------------------------------------------------------------

struct ForwardCombinationResult {
  /// y[k] agrees with xs[indices(k, s)] at scenario s; indices are strictly
  /// increasing in k and indices(k, s) > k, so y[k] is an L0-convex (glued)
  /// combination of { xs[j] : j > k }. This is the construction receipt.
  std::vector<ModuleElement> y;
  Eigen::MatrixXi indices;  // depth x scenarios
  ModuleElement limit;      // last extracted element
  double achieved_gauge;    // sup-gauge diameter of the final tail
  std::vector<double> step_gauges;
};

/// Extracts, per scenario, a convergent subsequence by nested-interval
/// bisection (cycling coordinates, preferring the lower half-cell), then
/// assembles the random indices n_k with n_k(w) > k and the glued sequence
/// y_k. Requires cond_norm(x_n, inf) <= bound per atom for all n.
ForwardCombinationResult extract_forward_combinations(const std::vector<ModuleElement>& xs,
                                                      const RandomVariable& bound, int depth);

}  // namespace l0opt
