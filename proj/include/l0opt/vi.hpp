#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "l0opt/functions.hpp"
#include "l0opt/optimize.hpp"

namespace l0opt {

/// A stable monotone map E -> E*, represented per atom so stability holds
/// by construction. Linear kinds are validated monotone at construction
/// (the weighted symmetric part must be positive semidefinite); gradient
/// kinds are monotone because the underlying function is convex.
class MonotoneOperator {
 public:
  /// M(x)|_A = B_A x|_A acting on stacked coordinates (the functional with
  /// representer B_A x|_A).
  static MonotoneOperator linear(const SigmaAlgebra& base_algebra, int d,
                                 std::vector<Eigen::MatrixXd> matrix_per_atom);
  /// The derivative map of a smooth catalog function.
  static MonotoneOperator gradient_of(StableFunction f);
  /// sum_i eta_i M_i + constant functional, eta_i in L0+(F).
  static MonotoneOperator combination(
      std::vector<std::pair<RandomVariable, MonotoneOperator>> terms,
      std::optional<DualFunctional> shift = std::nullopt);
  /// v -> M(v + u0): the argument translation used by the VI-over-set
  /// reduction.
  MonotoneOperator shifted_argument(const ModuleElement& u0) const;
  /// Raw-callback escape hatch. Stability, monotonicity and weak sequential
  /// continuity cannot be verified for callbacks; monotonicity is
  /// spot-checked by the solvers and results carry
  /// hypotheses_verified() == false.
  static MonotoneOperator custom(
      const SigmaAlgebra& base_algebra, int d,
      std::function<Eigen::VectorXd(int atom, const Eigen::VectorXd&)> apply);

  const SigmaAlgebra& base_algebra() const;
  int dim() const;
  const AtomLayout& layout() const;

  DualFunctional apply(const ModuleElement& x) const;
  Eigen::VectorXd apply_atom(int atom, const Eigen::VectorXd& y) const;

  /// True when the operator is affine per atom (linear matrix plus a
  /// constant functional).
  bool is_affine() const;

  /// Per-atom Lipschitz constant: declared value, or estimated by power
  /// iteration on the linearization at the zero element.
  RandomVariable lipschitz() const;
  /// Per-atom strong-monotonicity modulus: declared value, or the estimate
  /// from the linearization (clamped at zero).
  RandomVariable strong_modulus() const;
  bool has_declared_strong_modulus() const;

  MonotoneOperator with_lipschitz(RandomVariable L) const;
  MonotoneOperator with_strong_modulus(RandomVariable alpha) const;
  /// Declares the (M-4) coercivity-with-phi hypothesis.
  MonotoneOperator with_coercive(bool flag) const;
  bool coercive() const;

  /// pairing(M(u) - M(v), u - v) >= -tol per atom on seeded pairs.
  bool monotonicity_spot_check(std::uint64_t seed = 42, int pairs = 20,
                               double tol = 1e-9) const;
  /// False for raw-callback operators (and combinations containing one).
  bool hypotheses_verified() const;

 private:
  struct Data;
  explicit MonotoneOperator(std::shared_ptr<const Data> data) : data_(std::move(data)) {}
  std::shared_ptr<const Data> data_;
};

/// A solved variational inequality together with its certificates: the
/// worst per-atom value over the test family of the direct inequality
/// (M(u) - f)(v - u) + phi(v) - phi(u) and of its Minty form with M(v).
struct VISolution {
  ModuleElement u;
  RandomVariable direct_residual;
  RandomVariable minty_residual;
  RandomVariable fixed_point_gauge;  // per atom at termination
  std::vector<int> iterations;
  std::string method;
  /// False when the problem involved raw-callback pieces whose theorem
  /// hypotheses the library could not verify.
  bool hypotheses_verified = true;
};

enum class VIMethod {
  Auto,             // forward-backward when strongly monotone, else extragradient
  ForwardBackward,  // step alpha / L^2
  Extragradient,    // step 1 / (2L)
  FixedPointStep1,  // the undamped map u <- prox_phi(u + f - M(u)); experimental
};

/// Solves (M(u) - f)(v - u) + phi(v) - phi(u) >= 0 for all v. Requires phi
/// proper, lsc, L0-convex with closed stable domain (catalog-enforced) and
/// either a bounded domain, a strongly monotone operator, or a declared
/// coercivity flag; v0, when supplied, seeds the iteration from dom(phi).
VISolution solve_vi(const MonotoneOperator& M, const DualFunctional& f, const StableFunction& phi,
                    const std::optional<ModuleElement>& v0 = std::nullopt,
                    const SolveOptions& options = {}, VIMethod method = VIMethod::Auto);

/// VI over a stable set: phi is the indicator of G; the reduction
/// translates the problem when the null element is not in G.
VISolution solve_vi_over_set(const MonotoneOperator& M, const DualFunctional& f,
                             const StableConvexSet& G, const SolveOptions& options = {},
                             VIMethod method = VIMethod::Auto);

/// M(u) = f for an affine strongly monotone operator: exact per-atom
/// linear solve with a weighted-coercivity spot-check.
ModuleElement solve_operator_equation(const MonotoneOperator& M, const DualFunctional& f,
                                      const SolveOptions& options = {});

struct ViResiduals {
  RandomVariable direct;
  RandomVariable minty;
};

/// Worst per-atom residuals of both inequality forms over a test family
/// sampled from dom(phi).
ViResiduals vi_residuals(const MonotoneOperator& M, const DualFunctional& f,
                         const StableFunction& phi, const ModuleElement& u,
                         const SolveOptions& options = {});

}  // namespace l0opt
