#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "l0opt/convex_sets.hpp"
#include "l0opt/rn_module.hpp"

namespace l0opt {

/// Convex piecewise-linear-quadratic scalar function: pieces
/// q_i(t) = a_i t^2 + b_i t + c_i on consecutive intervals split by the
/// breakpoints. Continuity and a nondecreasing derivative are validated at
/// construction, so every instance is convex. Kinks are allowed; the prox
/// is solved exactly piece by piece.
class PlqFunction {
 public:
  /// coeffs has breakpoints.size() + 1 entries (a, b, c), left to right.
  PlqFunction(std::vector<double> breakpoints, std::vector<Eigen::Vector3d> coeffs);

  static PlqFunction abs_value() {
    return PlqFunction({0.0}, {Eigen::Vector3d(0, -1, 0), Eigen::Vector3d(0, 1, 0)});
  }
  static PlqFunction square() { return PlqFunction({}, {Eigen::Vector3d(1, 0, 0)}); }
  /// Huber-type: quadratic inside [-delta, delta], linear outside.
  static PlqFunction huber(double delta);

  double value(double t) const;
  double derivative_left(double t) const;
  double derivative_right(double t) const;
  /// argmin over u of  (1/2)(u - x)^2 + tau * g(u),  tau >= 0.
  double prox(double x, double tau) const;

  bool strictly_convex() const;
  bool smooth() const;  // derivative continuous at every breakpoint

  const std::vector<double>& breakpoints() const { return t_; }
  const std::vector<Eigen::Vector3d>& coefficients() const { return q_; }

 private:
  int piece_of(double t) const;
  std::vector<double> t_;
  std::vector<Eigen::Vector3d> q_;
};

/// A member of the closed catalog of proper stable L0-convex functions on
/// the module. Every kind is stable and L0-convex by construction (values
/// on an atom depend only on the atom's data), so theorem hypotheses are
/// carried by the type. Extended-real values follow the conventions
/// 0 * (+-inf) = 0 and (+inf) + (-inf) = +inf.
class StableFunction {
 public:
  // -- catalog -------------------------------------------------------------

  /// a(x,x) - 2 l(x) + const with a given per atom by a symmetric PSD form
  /// on the stacked coordinates.
  static StableFunction quadratic(const SigmaAlgebra& base_algebra, int d,
                                  std::vector<Eigen::MatrixXd> form_per_atom,
                                  std::optional<DualFunctional> l = std::nullopt,
                                  std::optional<RandomVariable> constant = std::nullopt);
  /// E[|x|^2 | F]  (the conditional squared norm; identity pairing form).
  static StableFunction conditional_square_norm(const SigmaAlgebra& base_algebra, int d);
  /// (1/2) E[|u - x0|^2 | F].
  static StableFunction half_sqdist(const ModuleElement& x0);
  /// lambda * |||x|||_p^p with lambda in L0+(F) and p in [1, inf).
  static StableFunction cond_pnorm_power(const SigmaAlgebra& base_algebra, int d, double p,
                                         RandomVariable lambda);
  /// Conditional variance E[|x|^2|F] - |E[x|F]|^2.
  static StableFunction cond_variance(const SigmaAlgebra& base_algebra, int d);
  /// Indicator of a stable convex set: 0 on feasible atoms, +inf elsewhere.
  static StableFunction indicator(StableConvexSet G);
  /// E[ sum_j g(x_j) | F ] for a convex scalar g applied coordinatewise.
  static StableFunction separable(const SigmaAlgebra& base_algebra, int d, PlqFunction g);
  /// The affine member l(x).
  static StableFunction linear(DualFunctional l);
  /// Raw-callback escape hatch: per-atom hooks supplied by the caller.
  /// Convexity and stability of the hooks cannot be verified, so results
  /// computed through a custom member carry hypotheses_verified() == false.
  struct CustomHooks {
    std::function<XReal(int atom, const Eigen::VectorXd&)> evaluate;
    std::function<Eigen::VectorXd(int atom, const Eigen::VectorXd&)> gradient;  // optional
    std::function<Eigen::VectorXd(int atom, const Eigen::VectorXd&, double tau)> prox;  // optional
  };
  static StableFunction custom(const SigmaAlgebra& base_algebra, int d, CustomHooks hooks);
  /// eta * f with eta in L0+(F).
  static StableFunction scaled(RandomVariable eta, StableFunction f);
  static StableFunction sum(std::vector<StableFunction> terms);

  // -- flags ---------------------------------------------------------------

  bool proper() const { return true; }  // catalog invariant
  bool strictly_convex() const;
  /// Declared coercivity (auto-set for the unambiguous kinds); undecidable
  /// in general, so solvers combine it with divergence guards.
  bool coercive() const;
  StableFunction with_coercive(bool flag) const;
  /// Gradient representers available everywhere on the domain.
  bool smooth() const;
  /// The indicator's set when the function is an indicator or contains one
  /// (the effective domain); nullopt when the domain is the whole module.
  std::optional<StableConvexSet> domain_set() const;

  const SigmaAlgebra& base_algebra() const;
  int dim() const;

  // -- operations ----------------------------------------------------------

  RandomVariable evaluate(const ModuleElement& x) const;

  /// Directional derivative f'(x; y) per atom: the monotone limit of the
  /// difference quotients. Analytic values are returned for every catalog
  /// kind; gateaux_quotient exposes the dyadic-step limit for cross-checks.
  RandomVariable gateaux(const ModuleElement& x, const ModuleElement& y) const;
  RandomVariable gateaux_quotient(const ModuleElement& x, const ModuleElement& y,
                                  double tol = 1e-9) const;

  /// Gradient representer at x (requires smooth()).
  DualFunctional gradient(const ModuleElement& x) const;

  /// Proximity mapping: the unique minimizer of (1/2)|||u - x|||_2^2 + f(u),
  /// computed per atom by closed forms (indicator -> projection, p-powers ->
  /// scenario-wise scalar solves, quadratics -> linear solves, separable ->
  /// exact piecewise solves) and by Dykstra splitting for sums.
  ModuleElement prox(const ModuleElement& x) const;
  ModuleElement prox(const ModuleElement& x, const RandomVariable& tau) const;

  // -- per-atom stacked access (solver plumbing) ----------------------------

  XReal evaluate_atom(int atom, const Eigen::VectorXd& y) const;
  XReal gateaux_atom(int atom, const Eigen::VectorXd& y, const Eigen::VectorXd& dir) const;
  Eigen::VectorXd gradient_atom(int atom, const Eigen::VectorXd& y) const;
  Eigen::VectorXd prox_atom(int atom, const Eigen::VectorXd& y, double tau) const;
  /// Stacked quadratic data when the function is quadratic-like (quadratic,
  /// variance, linear, and nonnegative combinations): f(y) = y'S y - 2 r'W y
  /// + c. Returns false when the function has a non-quadratic member.
  bool quadratic_atom(int atom, Eigen::MatrixXd& S, Eigen::VectorXd& r, double& c) const;
  /// Conservative hint: true only when the function is nonnegative
  /// everywhere (used by the coercivity rule for sums).
  bool evaluate_nonnegative_hint() const;
  /// The flattened members of a sum, or the function itself.
  std::vector<StableFunction> addends() const;
  /// True for indicators and nonnegative scalings of indicators.
  bool is_indicator_like() const;
  /// False when a raw-callback member is present anywhere in the function.
  bool hypotheses_verified() const;

  const AtomLayout& layout() const;

 private:
  struct Data;
  explicit StableFunction(std::shared_ptr<const Data> data) : data_(std::move(data)) {}
  std::shared_ptr<const Data> data_;
};

/// The derivative object at a point: base point plus representer.
struct GateauxDerivative {
  ModuleElement base_point;
  DualFunctional representer;
};
GateauxDerivative gateaux_derivative(const StableFunction& f, const ModuleElement& x);

/// Checks f(y) >= f(x) + f'(x)(y - x) - tol per atom.
bool subgradient_check(const StableFunction& f, const ModuleElement& x, const ModuleElement& y,
                       double tol = 1e-9);

/// Extension of f from G to the whole module: agrees with f on feasible
/// atoms and is +inf exactly off them. Requires the null element in G.
StableFunction extend(const StableFunction& f, const StableConvexSet& G);

}  // namespace l0opt
