#include "l0opt/optimize.hpp"

#include <cmath>
#include <stdexcept>

#include "l0opt/parallel.hpp"
#include "solver_util.hpp"

namespace l0opt {

namespace {

struct Split {
  std::vector<StableFunction> smooth;     // members with gradients everywhere
  std::vector<StableFunction> nonsmooth;  // prox-only members
  std::vector<StableFunction> quadratic;  // subset of smooth with exact quadratic data
};

Split split_members(const StableFunction& f) {
  Split s;
  Eigen::MatrixXd S;
  Eigen::VectorXd r;
  double c = 0.0;
  for (const auto& member : f.addends()) {
    if (member.quadratic_atom(0, S, r, c))
      s.quadratic.push_back(member);
    else if (member.smooth())
      s.smooth.push_back(member);
    else
      s.nonsmooth.push_back(member);
  }
  // Smooth members that are not quadratic still ride the prox side: their
  // proxes are exact and their gradients need not be Lipschitz.
  return s;
}

/// Accumulated stacked quadratic data of the quadratic members on an atom.
void quadratic_data(const std::vector<StableFunction>& quads, const AtomLayout& layout, int atom,
                    Eigen::MatrixXd& S, Eigen::VectorXd& r) {
  const int n = layout.stacked_dim(atom);
  S = Eigen::MatrixXd::Zero(n, n);
  r = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd Sc;
  Eigen::VectorXd rc;
  double cc = 0.0;
  for (const auto& q : quads) {
    q.quadratic_atom(atom, Sc, rc, cc);
    S += Sc;
    r += rc;
  }
}

/// Exact equality-constrained solve of min y'Sy - 2 r'W y s.t. Ay = b via
/// the null-space method. Returns false when the constraints are
/// inconsistent or the reduced system is singular.
bool kkt_solve(const Eigen::MatrixXd& S, const Eigen::VectorXd& Wr, const Eigen::MatrixXd& A,
               const Eigen::VectorXd& b, double tol, Eigen::VectorXd& out) {
  const int n = static_cast<int>(S.rows());
  Eigen::VectorXd x0;
  Eigen::MatrixXd Z;
  if (A.rows() == 0) {
    x0 = Eigen::VectorXd::Zero(n);
    Z = Eigen::MatrixXd::Identity(n, n);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV | Eigen::ComputeThinU);
    svd.setThreshold(1e-12);
    x0 = svd.solve(b);
    if ((A * x0 - b).cwiseAbs().maxCoeff() > tol * (1.0 + b.cwiseAbs().maxCoeff())) return false;
    const int k = n - static_cast<int>(svd.rank());
    if (k == 0) {
      out = x0;
      return true;
    }
    Z = svd.matrixV().rightCols(k);
  }
  const Eigen::MatrixXd H = Z.transpose() * S * Z;
  const Eigen::VectorXd g = Z.transpose() * (Wr - S * x0);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd t = ldlt.solve(g);
  if ((H * t - g).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + g.cwiseAbs().maxCoeff())) return false;
  out = x0 + Z * t;
  return true;
}

struct AtomOutcome {
  Eigen::VectorXd y;
  int iterations = 0;
};

/// Per-atom proximal-gradient (forward-backward) iteration: gradient step
/// on the quadratic part with step 1/L, prox step on everything else.
AtomOutcome solve_atom_fb(const Eigen::MatrixXd& S, const Eigen::VectorXd& r,
                          const StableFunction& prox_side, const AtomLayout& layout, int atom,
                          Eigen::VectorXd y, const SolveOptions& options) {
  const Eigen::VectorXd& w = layout.weights(atom);
  const double L = 2.0 * detail::power_iteration_max_eig(
                             [&](const Eigen::VectorXd& v) {
                               return Eigen::VectorXd((S * v).cwiseQuotient(w));
                             },
                             w);
  const double tau = L > 0.0 ? 1.0 / L : 1.0;
  const double start_scale = 1.0 + y.cwiseAbs().maxCoeff();
  AtomOutcome out;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd grad = 2.0 * Eigen::VectorXd((S * y).cwiseQuotient(w)) - 2.0 * r;
    Eigen::VectorXd next = prox_side.prox_atom(atom, y - tau * grad, tau);
    const double gauge = (next - y).cwiseAbs().maxCoeff();
    y = std::move(next);
    out.iterations = it + 1;
    if (gauge <= options.gauge_tol) break;
    if (y.cwiseAbs().maxCoeff() > 1e9 * start_scale)
      throw std::runtime_error(
          "minimize: iterate explosion on atom " + std::to_string(atom) +
          " (objective appears non-coercive on an unbounded set)");
    if (it + 1 == options.max_iterations)
      throw std::runtime_error("minimize: no convergence within iteration cap on atom " +
                               std::to_string(atom) + " (last gauge " + std::to_string(gauge) +
                               ")");
  }
  out.y = std::move(y);
  return out;
}

/// Worst per-atom residuals of the two optimality characterizations over
/// the sampled family: the derivative of the smooth part taken at u and at
/// the probe v, plus the nonsmooth difference terms.
void composite_residuals(const std::vector<StableFunction>& smooth,
                         const std::vector<StableFunction>& nonsmooth,
                         const StableConvexSet& G, const ModuleElement& u,
                         const SolveOptions& options, RandomVariable& at_solution,
                         RandomVariable& at_probe) {
  const AtomLayout& layout = G.layout();
  const int m = G.base_algebra().atom_count();
  struct Pair {
    XReal a, b;
  };
  auto per_atom = parallel_map_atoms(m, [&](int atom) {
    const Eigen::VectorXd ua = layout.stack(u, atom);
    Rng rng = Rng(options.seed).fork(static_cast<std::uint64_t>(atom));
    const auto family = detail::atom_test_family(G, atom, ua, options.cert_samples, rng);
    XReal worst_a = XReal::pos_inf();
    XReal worst_b = XReal::pos_inf();
    std::vector<XReal> phi_u;
    for (const auto& g : nonsmooth) phi_u.push_back(g.evaluate_atom(atom, ua));
    for (const auto& v : family) {
      const Eigen::VectorXd dir = v - ua;
      XReal lin_u = XReal::finite(0.0);
      XReal lin_v = XReal::finite(0.0);
      for (const auto& g : smooth) {
        lin_u = lin_u + g.gateaux_atom(atom, ua, dir);
        lin_v = lin_v + g.gateaux_atom(atom, v, dir);
      }
      XReal nons = XReal::finite(0.0);
      for (size_t i = 0; i < nonsmooth.size(); ++i)
        nons = nons + (nonsmooth[i].evaluate_atom(atom, v) - phi_u[i]);
      worst_a = min(worst_a, lin_u + nons);
      worst_b = min(worst_b, lin_v + nons);
    }
    return Pair{worst_a, worst_b};
  });
  std::vector<XReal> va, vb;
  for (const auto& p : per_atom) {
    va.push_back(p.a);
    vb.push_back(p.b);
  }
  at_solution = RandomVariable(G.base_algebra(), std::move(va));
  at_probe = RandomVariable(G.base_algebra(), std::move(vb));
}

ModuleElement solve_all_atoms(const StableFunction& f, const Split& split,
                              const StableFunction& prox_side, const StableConvexSet& G,
                              const ModuleElement& start, const SolveOptions& options,
                              std::vector<int>& iterations) {
  const AtomLayout& layout = f.layout();
  const int m = f.base_algebra().atom_count();
  auto outcomes = parallel_map_atoms(m, [&](int atom) {
    Eigen::MatrixXd S;
    Eigen::VectorXd r;
    quadratic_data(split.quadratic, layout, atom, S, r);

    // Exact path: quadratic objective over a single affine descriptor.
    const bool pure_quadratic = split.smooth.empty() && split.nonsmooth.empty();
    if (pure_quadratic) {
      const auto* aff = std::get_if<AffineDesc>(&G.descriptor(atom));
      if (aff != nullptr) {
        Eigen::VectorXd y;
        const Eigen::VectorXd Wr = layout.weights(atom).cwiseProduct(r);
        if (kkt_solve(S, Wr, aff->A, aff->b, options.kkt_tol, y))
          return AtomOutcome{std::move(y), 0};
      }
    }
    return solve_atom_fb(S, r, prox_side, layout, atom, layout.stack(start, atom), options);
  });
  std::vector<Eigen::VectorXd> ys;
  iterations.clear();
  for (auto& o : outcomes) {
    ys.push_back(std::move(o.y));
    iterations.push_back(o.iterations);
  }
  return layout.assemble(ys);
}

}  // namespace

MinimizationResult minimize(const StableFunction& f, const StableConvexSet& G,
                            const SolveOptions& options) {
  if (f.base_algebra() != G.base_algebra() || f.dim() != G.dim())
    throw std::invalid_argument("minimize: function and set modules differ");
  if (!f.coercive()) {
    auto cert = certify_order_bounded(G);
    if (!cert.compact) {
      // An indicator member inside the objective restricts the effective
      // feasible set; fold it in before rejecting the hypotheses.
      bool fixed = false;
      if (auto dom = f.domain_set()) {
        std::vector<AtomDescriptor> descs;
        for (int a = 0; a < G.base_algebra().atom_count(); ++a) {
          IntersectionDesc inter;
          inter.parts.push_back(G.descriptor(a));
          inter.parts.push_back(dom->descriptor(a));
          descs.push_back(std::move(inter));
        }
        try {
          StableConvexSet effective(G.base_algebra(), G.dim(), std::move(descs));
          fixed = certify_order_bounded(effective).compact;
        } catch (const std::invalid_argument&) {
          fixed = false;  // no nonemptiness witness for the intersection
        }
      }
      if (!fixed)
        throw std::invalid_argument(
            "minimize: hypotheses unmet: set not order-bounded (atom " +
            std::to_string(cert.witness_atom) + ") and objective not declared coercive");
    }
  }

  Split split = split_members(f);
  std::vector<StableFunction> prox_members = split.smooth;
  prox_members.insert(prox_members.end(), split.nonsmooth.begin(), split.nonsmooth.end());
  prox_members.push_back(StableFunction::indicator(G));
  const StableFunction prox_side =
      prox_members.size() == 1 ? prox_members.front() : StableFunction::sum(prox_members);

  std::vector<int> iterations;
  ModuleElement y0 =
      solve_all_atoms(f, split, prox_side, G, G.feasible_point(), options, iterations);

  bool unique_verified = false;
  if (f.strictly_convex()) {
    ModuleElement start2 =
        project(G, G.feasible_point() +
                       ModuleElement::constant(G.base_algebra(),
                                               Eigen::VectorXd::Ones(G.dim())));
    std::vector<int> iters2;
    ModuleElement y1 = solve_all_atoms(f, split, prox_side, G, start2, options, iters2);
    const XReal gap = as_sup_distance(cond_norm(y0 - y1, 2),
                                      RandomVariable::constant(G.base_algebra(), 0.0));
    if (!gap.is_finite() || gap.value() > 1e-7)
      throw std::runtime_error(
          "minimize: strictly convex objective returned different minimizers from two starts "
          "(gap " + gap.str() + ")");
    unique_verified = true;
  }

  // Certificates over the sampled family: smooth members linearized, the
  // nonsmooth ones entering by value difference.
  std::vector<StableFunction> cert_smooth = split.quadratic;
  cert_smooth.insert(cert_smooth.end(), split.smooth.begin(), split.smooth.end());
  RandomVariable at_solution = RandomVariable::constant(G.base_algebra(), 0.0);
  RandomVariable at_probe = at_solution;
  composite_residuals(cert_smooth, split.nonsmooth, G, y0, options, at_solution, at_probe);

  return MinimizationResult{y0,
                            f.evaluate(y0),
                            std::move(at_solution),
                            std::move(at_probe),
                            std::move(iterations),
                            unique_verified,
                            false,
                            f.hypotheses_verified()};
}

MinimizationResult hansen_richard(const ModuleElement& pi_representer, const RandomVariable& w,
                                  const StableConvexSet& M, const SolveOptions& options) {
  const SigmaAlgebra& alg = pi_representer.base_algebra();
  if (pi_representer.dim() != 1)
    throw std::invalid_argument("hansen_richard: scalar module required (d = 1)");
  if (w.algebra() != alg || M.base_algebra() != alg || M.dim() != 1)
    throw std::invalid_argument("hansen_richard: mismatched modules");
  const AtomLayout& layout = M.layout();

  StableFunction variance = StableFunction::cond_variance(alg, 1);
  bool degenerate = false;
  const int m = alg.atom_count();
  std::vector<Eigen::VectorXd> ys(static_cast<size_t>(m));
  for (int atom = 0; atom < m; ++atom) {
    const int n = layout.stacked_dim(atom);
    const Eigen::VectorXd& sw = layout.scenario_weights(atom);
    const Eigen::VectorXd rstack = layout.stack(pi_representer, atom);

    const auto* aff = std::get_if<AffineDesc>(&M.descriptor(atom));
    const auto* box = std::get_if<BoxDesc>(&M.descriptor(atom));
    const bool whole = box != nullptr && !box->lo.array().isFinite().any() &&
                       !box->hi.array().isFinite().any();
    if (aff == nullptr && !whole)
      throw std::invalid_argument(
          "hansen_richard: M must be an affine-subspace set (atom " + std::to_string(atom) +
          ")");

    const int extra = aff ? static_cast<int>(aff->A.rows()) : 0;
    Eigen::MatrixXd C(2 + extra, n);
    Eigen::VectorXd c(2 + extra);
    C.row(0) = (sw.array() * rstack.array()).matrix().transpose();  // pi(x) = 1
    c[0] = 1.0;
    C.row(1) = sw.transpose();  // E[x | F] = w
    c[1] = w[atom].value();
    if (aff) {
      C.bottomRows(extra) = aff->A;
      c.tail(extra) = aff->b;
    }

    // Rank of the constraint block reveals collapse of pi onto the
    // conditional expectation.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(C);
    if (cod.rank() < C.rows()) degenerate = true;
    const Eigen::VectorXd x0 = cod.solve(c);
    if ((C * x0 - c).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + c.cwiseAbs().maxCoeff()))
      throw InfeasibleProblem("hansen_richard: infeasible constraint system on atom " +
                               std::to_string(atom));

    Eigen::MatrixXd Svar;
    Eigen::VectorXd rvar;
    double cc = 0.0;
    variance.quadratic_atom(atom, Svar, rvar, cc);
    Eigen::VectorXd y;
    if (!kkt_solve(Svar, Eigen::VectorXd::Zero(n), C, c, options.kkt_tol, y))
      throw std::runtime_error("hansen_richard: rank-deficient KKT system on atom " +
                               std::to_string(atom));
    ys[static_cast<size_t>(atom)] = std::move(y);
  }

  ModuleElement y0 = layout.assemble(ys);
  MinimizationResult result{y0,
                            variance.evaluate(y0),
                            RandomVariable::constant(alg, 0.0),
                            RandomVariable::constant(alg, 0.0),
                            std::vector<int>(static_cast<size_t>(m), 0),
                            true,
                            degenerate,
                            true};

  // Optimality certificate on the constrained set: variance is smooth, the
  // constraints enter through their indicator.
  std::vector<AtomDescriptor> descs;
  for (int atom = 0; atom < m; ++atom) {
    const int n = layout.stacked_dim(atom);
    const Eigen::VectorXd& sw = layout.scenario_weights(atom);
    const Eigen::VectorXd rstack = layout.stack(pi_representer, atom);
    AffineDesc full;
    const auto* aff = std::get_if<AffineDesc>(&M.descriptor(atom));
    const int extra = aff ? static_cast<int>(aff->A.rows()) : 0;
    full.A.resize(2 + extra, n);
    full.b.resize(2 + extra);
    full.A.row(0) = (sw.array() * rstack.array()).matrix().transpose();
    full.b[0] = 1.0;
    full.A.row(1) = sw.transpose();
    full.b[1] = w[atom].value();
    if (aff) {
      full.A.bottomRows(extra) = aff->A;
      full.b.tail(extra) = aff->b;
    }
    descs.push_back(std::move(full));
  }
  StableConvexSet constraint_set(alg, 1, std::move(descs), y0);
  RandomVariable at_solution = RandomVariable::constant(alg, 0.0);
  RandomVariable at_probe = at_solution;
  composite_residuals({variance}, {}, constraint_set, y0, options, at_solution, at_probe);
  result.residual_at_solution = std::move(at_solution);
  result.residual_at_probe = std::move(at_probe);
  return result;
}

MinimizationResult minimize_quadratic(const SigmaAlgebra& base_algebra, int d,
                                      std::vector<Eigen::MatrixXd> form_per_atom,
                                      const DualFunctional& l, const StableConvexSet& G,
                                      const RandomVariable& alpha,
                                      const SolveOptions& options) {
  if (alpha.algebra() != base_algebra)
    throw std::invalid_argument("minimize_quadratic: alpha on wrong algebra");
  AtomLayout layout(base_algebra, d);
  Rng rng(options.seed);
  for (int atom = 0; atom < base_algebra.atom_count(); ++atom) {
    const double a = alpha[atom].value();
    if (!(a > 0.0))
      throw std::invalid_argument("minimize_quadratic: alpha must be strictly positive");
    const int n = layout.stacked_dim(atom);
    const Eigen::MatrixXd& S = form_per_atom[static_cast<size_t>(atom)];
    for (int probe = 0; probe < 20; ++probe) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v[i] = rng.normal();
      const double quad = v.dot(S * v);
      const double nrm = (layout.weights(atom).array() * v.array().square()).sum();
      if (quad < a * nrm * (1.0 - 1e-9) - 1e-12)
        throw std::invalid_argument("minimize_quadratic: coercivity spot-check failed on atom " +
                                    std::to_string(atom));
    }
  }
  StableFunction f =
      StableFunction::quadratic(base_algebra, d, std::move(form_per_atom), l).with_coercive(true);
  return minimize(f, G, options);
}

MintyCertificate minty_certificate(const StableFunction& f, const StableConvexSet& G,
                                   const ModuleElement& u, const SolveOptions& options) {
  if (!f.smooth())
    throw std::invalid_argument("minty_certificate: differentiable objective required");
  MintyCertificate cert{false, RandomVariable::constant(G.base_algebra(), 0.0),
                        RandomVariable::constant(G.base_algebra(), 0.0)};
  composite_residuals(f.addends(), {}, G, u, options, cert.residual_at_solution,
                      cert.residual_at_probe);
  cert.is_min = true;
  for (int a = 0; a < G.base_algebra().atom_count(); ++a) {
    if (cert.residual_at_solution[a].as_double() < -options.cert_tol) cert.is_min = false;
    if (cert.residual_at_probe[a].as_double() < -options.cert_tol) cert.is_min = false;
  }
  return cert;
}

MintyCertificate minty_certificate(const StableFunction& f1, const StableFunction& f2,
                                   const StableConvexSet& G, const ModuleElement& u,
                                   const SolveOptions& options) {
  if (!f1.smooth())
    throw std::invalid_argument("minty_certificate: f1 must be differentiable");
  MintyCertificate cert{false, RandomVariable::constant(G.base_algebra(), 0.0),
                        RandomVariable::constant(G.base_algebra(), 0.0)};
  composite_residuals(f1.addends(), f2.addends(), G, u, options, cert.residual_at_solution,
                      cert.residual_at_probe);
  cert.is_min = true;
  for (int a = 0; a < G.base_algebra().atom_count(); ++a) {
    if (cert.residual_at_solution[a].as_double() < -options.cert_tol) cert.is_min = false;
    if (cert.residual_at_probe[a].as_double() < -options.cert_tol) cert.is_min = false;
  }
  return cert;
}

}  // namespace l0opt
