#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "l0opt/functions.hpp"

namespace l0opt {

/// Certified infeasibility: the constraint system of a problem instance
/// has no solution (a valid verdict, distinct from solver failures).
struct InfeasibleProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolveOptions {
  double gauge_tol = 1e-9;   // fixed-point stopping gauge
  double cert_tol = 1e-7;    // optimality/VI residual tolerance
  double kkt_tol = 1e-9;     // KKT residual tolerance
  int max_iterations = 500000;
  int cert_samples = 100;    // seeded feasible samples per atom
  std::uint64_t seed = 42;
};

/// Result of a random convex minimization. The minimizer is assembled
/// atom by atom (stability makes the essential infimum separable), the
/// value is evaluate(f, minimizer), and the certificate carries the worst
/// per-atom residuals of both optimality characterizations over the
/// sampled test family.
struct MinimizationResult {
  ModuleElement minimizer;
  RandomVariable value;
  RandomVariable residual_at_solution;  // min over v of f'(u)(v-u) [+ nonsmooth terms]
  RandomVariable residual_at_probe;     // same with the derivative taken at v
  std::vector<int> iterations;          // per atom
  bool unique_verified = false;         // strict convexity: two starts agreed
  bool degenerate = false;              // constraint collapse (reported, not repaired)
  /// False when the objective involved raw-callback members whose theorem
  /// hypotheses the library could not verify.
  bool hypotheses_verified = true;
};

/// Attains the essential infimum of a proper stable L0-convex catalog
/// function over a stable set. Requires the set to be order-bounded or the
/// function to be (declared) coercive. Quadratic objectives over affine
/// sets solve exactly through the KKT system, everything else runs a
/// per-atom proximal-gradient scheme with the step from the quadratic
/// part's Lipschitz bound.
MinimizationResult minimize(const StableFunction& f, const StableConvexSet& G,
                            const SolveOptions& options = {});

/// Conditional mean-variance: minimizes the conditional variance subject to
/// pi(x) = E[r x | F] = 1, E[x | F] = w and x in M (an affine-subspace
/// set). Solved exactly per atom through the constrained KKT system;
/// constraint collapse (r conditionally proportional to 1) is flagged.
MinimizationResult hansen_richard(const ModuleElement& pi_representer, const RandomVariable& w,
                                  const StableConvexSet& M, const SolveOptions& options = {});

/// Minimizes a(x,x) - 2 l(x) over G for a per-atom PSD form with
/// a(x,x) >= alpha |||x|||^2; alpha is spot-checked on seeded directions.
MinimizationResult minimize_quadratic(const SigmaAlgebra& base_algebra, int d,
                                      std::vector<Eigen::MatrixXd> form_per_atom,
                                      const DualFunctional& l, const StableConvexSet& G,
                                      const RandomVariable& alpha,
                                      const SolveOptions& options = {});

/// Optimality certificate for a differentiable L0-convex function on G:
/// evaluates f'(u)(v-u) >= 0 and f'(v)(v-u) >= 0 over the test family and
/// reports the worst per-atom residuals of each.
struct MintyCertificate {
  bool is_min = false;
  RandomVariable residual_at_solution;
  RandomVariable residual_at_probe;
};
MintyCertificate minty_certificate(const StableFunction& f, const StableConvexSet& G,
                                   const ModuleElement& u, const SolveOptions& options = {});
/// Composite version: f1 differentiable, f2 proper L0-convex;
/// f1'(u)(v-u) + f2(v) - f2(u) >= 0 and the probe-side variant.
MintyCertificate minty_certificate(const StableFunction& f1, const StableFunction& f2,
                                   const StableConvexSet& G, const ModuleElement& u,
                                   const SolveOptions& options = {});

}  // namespace l0opt
