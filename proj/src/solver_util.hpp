#pragma once

// Internal solver plumbing shared by the optimization and variational
// inequality modules: power iteration in the weighted geometry and the
// per-atom certification test family.

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "l0opt/convex_sets.hpp"
#include "l0opt/rng.hpp"

namespace l0opt::detail {

/// Largest eigenvalue of a map that is self-adjoint and positive
/// semidefinite with respect to the weighted inner product diag(w).
/// Deterministic start, 50 iterations, relative tolerance 1e-6.
inline double power_iteration_max_eig(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                                      const Eigen::VectorXd& w) {
  const int n = static_cast<int>(w.size());
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = (i % 2 == 0) ? 1.0 : -0.5;
  v[0] += 0.25;
  auto wnorm = [&](const Eigen::VectorXd& u) {
    return std::sqrt((w.array() * u.array().square()).sum());
  };
  double nv = wnorm(v);
  if (nv == 0.0) return 0.0;
  v /= nv;
  double eig = 0.0;
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd next = apply(v);
    const double nn = wnorm(next);
    if (nn <= 1e-300) return 0.0;
    const double estimate = (w.array() * v.array() * next.array()).sum();
    next /= nn;
    if (it > 0 && std::abs(estimate - eig) <= 1e-6 * std::max(1.0, std::abs(estimate))) {
      eig = estimate;
      break;
    }
    eig = estimate;
    v = std::move(next);
  }
  return std::max(0.0, eig);
}

/// Certification family on one atom: the stored feasible point, the point
/// under test, coordinate moves from it projected back into the set, and
/// seeded Gaussian samples projected into the set.
inline std::vector<Eigen::VectorXd> atom_test_family(const StableConvexSet& G, int atom,
                                                     const Eigen::VectorXd& u, int samples,
                                                     Rng rng) {
  const int n = static_cast<int>(u.size());
  std::vector<Eigen::VectorXd> family;
  const Eigen::VectorXd feas = G.layout().stack(G.feasible_point(), atom);
  family.push_back(feas);
  family.push_back(project_atom(G, atom, u));

  const double scale = 1.0 + std::sqrt((G.layout().weights(atom).array() *
                                        u.array().square())
                                           .sum());
  for (int i = 0; i < n; ++i) {
    for (int sign = -1; sign <= 1; sign += 2) {
      Eigen::VectorXd probe = u;
      probe[i] += sign * scale;
      family.push_back(project_atom(G, atom, probe));
    }
  }
  for (int k = 0; k < samples; ++k) {
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g[i] = rng.normal();
    const Eigen::VectorXd center = (k % 2 == 0) ? u : feas;
    family.push_back(project_atom(G, atom, center + scale * g));
  }
  return family;
}

}  // namespace l0opt::detail
