#include "l0opt/vi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "l0opt/parallel.hpp"
#include "solver_util.hpp"

namespace l0opt {

namespace {

enum class OpKind { Linear, Gradient, Combination, Shifted, Custom };

}  // namespace

struct MonotoneOperator::Data {
  OpKind kind;
  AtomLayout layout;
  // linear
  std::vector<Eigen::MatrixXd> B;
  // gradient
  std::optional<StableFunction> f;
  // combination
  std::vector<std::pair<RandomVariable, MonotoneOperator>> terms;
  std::optional<DualFunctional> shift;
  // shifted argument
  std::optional<ModuleElement> arg_shift;
  std::vector<MonotoneOperator> inner;
  // custom callback
  std::function<Eigen::VectorXd(int, const Eigen::VectorXd&)> callback;
  // declared constants
  std::optional<RandomVariable> L_declared;
  std::optional<RandomVariable> alpha_declared;
  bool coercive_flag = false;

  Data(OpKind k, const SigmaAlgebra& alg, int d) : kind(k), layout(alg, d) {}
};

const SigmaAlgebra& MonotoneOperator::base_algebra() const { return data_->layout.algebra(); }
int MonotoneOperator::dim() const { return data_->layout.dim(); }
const AtomLayout& MonotoneOperator::layout() const { return data_->layout; }
bool MonotoneOperator::coercive() const { return data_->coercive_flag; }
bool MonotoneOperator::has_declared_strong_modulus() const {
  return data_->alpha_declared.has_value();
}

MonotoneOperator MonotoneOperator::linear(const SigmaAlgebra& base_algebra, int d,
                                          std::vector<Eigen::MatrixXd> matrix_per_atom) {
  auto data = std::make_shared<Data>(OpKind::Linear, base_algebra, d);
  if (static_cast<int>(matrix_per_atom.size()) != base_algebra.atom_count())
    throw std::invalid_argument("MonotoneOperator::linear: one matrix per atom required");
  for (int a = 0; a < base_algebra.atom_count(); ++a) {
    const int n = data->layout.stacked_dim(a);
    const Eigen::MatrixXd& B = matrix_per_atom[static_cast<size_t>(a)];
    if (B.rows() != n || B.cols() != n)
      throw std::invalid_argument("MonotoneOperator::linear: matrix size mismatch on atom " +
                                  std::to_string(a));
    // Monotonicity (M-3) for a linear kind: the weighted symmetric part
    // must be positive semidefinite.
    const Eigen::MatrixXd WB = data->layout.weights(a).asDiagonal() * B;
    const Eigen::MatrixXd sym = 0.5 * (WB + WB.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
      throw std::invalid_argument("MonotoneOperator::linear: matrix is not monotone on atom " +
                                  std::to_string(a));
  }
  data->B = std::move(matrix_per_atom);
  return MonotoneOperator(std::move(data));
}

MonotoneOperator MonotoneOperator::gradient_of(StableFunction f) {
  if (!f.smooth())
    throw std::invalid_argument("MonotoneOperator::gradient_of: function must be smooth");
  auto data = std::make_shared<Data>(OpKind::Gradient, f.base_algebra(), f.dim());
  data->f = std::move(f);
  return MonotoneOperator(std::move(data));
}

MonotoneOperator MonotoneOperator::combination(
    std::vector<std::pair<RandomVariable, MonotoneOperator>> terms,
    std::optional<DualFunctional> shift) {
  if (terms.empty() && !shift)
    throw std::invalid_argument("MonotoneOperator::combination: empty combination");
  const SigmaAlgebra* alg = nullptr;
  int d = 0;
  if (!terms.empty()) {
    alg = &terms.front().second.base_algebra();
    d = terms.front().second.dim();
  } else {
    alg = &shift->representer().base_algebra();
    d = shift->representer().dim();
  }
  for (const auto& [eta, op] : terms) {
    if (eta.algebra() != *alg || op.base_algebra() != *alg || op.dim() != d)
      throw std::invalid_argument("MonotoneOperator::combination: mismatched modules");
    for (int a = 0; a < eta.size(); ++a)
      if (!eta[a].is_finite() || eta[a].value() < 0.0)
        throw std::invalid_argument("MonotoneOperator::combination: eta must be >= 0");
  }
  auto data = std::make_shared<Data>(OpKind::Combination, *alg, d);
  data->terms = std::move(terms);
  data->shift = std::move(shift);
  return MonotoneOperator(std::move(data));
}

MonotoneOperator MonotoneOperator::custom(
    const SigmaAlgebra& base_algebra, int d,
    std::function<Eigen::VectorXd(int, const Eigen::VectorXd&)> apply) {
  if (!apply) throw std::invalid_argument("MonotoneOperator::custom: apply hook required");
  auto data = std::make_shared<Data>(OpKind::Custom, base_algebra, d);
  data->callback = std::move(apply);
  return MonotoneOperator(std::move(data));
}

MonotoneOperator MonotoneOperator::shifted_argument(const ModuleElement& u0) const {
  if (u0.base_algebra() != base_algebra() || u0.dim() != dim())
    throw std::invalid_argument("shifted_argument: mismatched modules");
  auto data = std::make_shared<Data>(OpKind::Shifted, base_algebra(), dim());
  data->arg_shift = u0;
  data->inner.push_back(*this);
  data->L_declared = data_->L_declared;
  data->alpha_declared = data_->alpha_declared;
  data->coercive_flag = data_->coercive_flag;
  return MonotoneOperator(std::move(data));
}

Eigen::VectorXd MonotoneOperator::apply_atom(int atom, const Eigen::VectorXd& y) const {
  const Data& D = *data_;
  switch (D.kind) {
    case OpKind::Linear:
      return D.B[static_cast<size_t>(atom)] * y;
    case OpKind::Gradient:
      return D.f->gradient_atom(atom, y);
    case OpKind::Combination: {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(y.size());
      for (const auto& [eta, op] : D.terms)
        out += eta[atom].value() * op.apply_atom(atom, y);
      if (D.shift) out += D.layout.stack(D.shift->representer(), atom);
      return out;
    }
    case OpKind::Shifted:
      return D.inner.front().apply_atom(atom, y + D.layout.stack(*D.arg_shift, atom));
    case OpKind::Custom:
      return D.callback(atom, y);
  }
  return y;
}

DualFunctional MonotoneOperator::apply(const ModuleElement& x) const {
  if (x.base_algebra() != base_algebra() || x.dim() != dim())
    throw std::invalid_argument("MonotoneOperator::apply: element does not match module");
  const int m = base_algebra().atom_count();
  auto per_atom = parallel_map_atoms(
      m, [&](int a) { return apply_atom(a, data_->layout.stack(x, a)); });
  return DualFunctional(data_->layout.assemble(per_atom));
}

bool MonotoneOperator::is_affine() const {
  const Data& D = *data_;
  switch (D.kind) {
    case OpKind::Linear:
      return true;
    case OpKind::Gradient: {
      Eigen::MatrixXd S;
      Eigen::VectorXd r;
      double c = 0.0;
      return D.f->quadratic_atom(0, S, r, c);
    }
    case OpKind::Combination: {
      for (const auto& [eta, op] : D.terms)
        if (!op.is_affine()) return false;
      return true;
    }
    case OpKind::Shifted:
      return D.inner.front().is_affine();
    case OpKind::Custom:
      return false;
  }
  return false;
}

namespace {

/// Jacobian of the operator at a point by forward differences (exact for
/// affine kinds up to roundoff).
Eigen::MatrixXd linearization(const MonotoneOperator& M, int atom, const Eigen::VectorXd& at) {
  const int n = static_cast<int>(at.size());
  const Eigen::VectorXd base = M.apply_atom(atom, at);
  Eigen::MatrixXd J(n, n);
  const double h = 1e-6;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd probe = at;
    probe[i] += h;
    J.col(i) = (M.apply_atom(atom, probe) - base) / h;
  }
  return J;
}

}  // namespace

RandomVariable MonotoneOperator::lipschitz() const {
  if (data_->L_declared) return *data_->L_declared;
  const int m = base_algebra().atom_count();
  std::vector<XReal> out;
  for (int a = 0; a < m; ++a) {
    const int n = data_->layout.stacked_dim(a);
    const Eigen::VectorXd& w = data_->layout.weights(a);
    const Eigen::MatrixXd J = linearization(*this, a, Eigen::VectorXd::Zero(n));
    // ||J v||_w / ||v||_w: square via the W-self-adjoint map W^-1 J' W J.
    const double eig2 = detail::power_iteration_max_eig(
        [&](const Eigen::VectorXd& v) {
          return Eigen::VectorXd(
              (J.transpose() * w.cwiseProduct(J * v)).cwiseQuotient(w));
        },
        w);
    out.push_back(XReal::finite(std::sqrt(std::max(0.0, eig2))));
  }
  return RandomVariable(base_algebra(), std::move(out));
}

RandomVariable MonotoneOperator::strong_modulus() const {
  if (data_->alpha_declared) return *data_->alpha_declared;
  const int m = base_algebra().atom_count();
  std::vector<XReal> out;
  for (int a = 0; a < m; ++a) {
    const int n = data_->layout.stacked_dim(a);
    const Eigen::VectorXd& w = data_->layout.weights(a);
    const Eigen::MatrixXd J = linearization(*this, a, Eigen::VectorXd::Zero(n));
    // Smallest eigenvalue of the W-symmetrized part via a spectral shift.
    auto sym_apply = [&](const Eigen::VectorXd& v) {
      return Eigen::VectorXd(0.5 * (J * v + (J.transpose() * w.cwiseProduct(v)).cwiseQuotient(w)));
    };
    const double top = detail::power_iteration_max_eig(sym_apply, w);
    const double shifted = detail::power_iteration_max_eig(
        [&](const Eigen::VectorXd& v) {
          return Eigen::VectorXd(top * v - sym_apply(v));
        },
        w);
    out.push_back(XReal::finite(std::max(0.0, top - shifted)));
  }
  return RandomVariable(base_algebra(), std::move(out));
}

MonotoneOperator MonotoneOperator::with_lipschitz(RandomVariable L) const {
  auto d = std::make_shared<Data>(*data_);
  d->L_declared = std::move(L);
  return MonotoneOperator(std::move(d));
}

MonotoneOperator MonotoneOperator::with_strong_modulus(RandomVariable alpha) const {
  auto d = std::make_shared<Data>(*data_);
  d->alpha_declared = std::move(alpha);
  return MonotoneOperator(std::move(d));
}

MonotoneOperator MonotoneOperator::with_coercive(bool flag) const {
  auto d = std::make_shared<Data>(*data_);
  d->coercive_flag = flag;
  return MonotoneOperator(std::move(d));
}

bool MonotoneOperator::hypotheses_verified() const {
  const Data& D = *data_;
  switch (D.kind) {
    case OpKind::Custom:
      return false;
    case OpKind::Gradient:
      return D.f->hypotheses_verified();
    case OpKind::Combination: {
      for (const auto& [eta, op] : D.terms)
        if (!op.hypotheses_verified()) return false;
      return true;
    }
    case OpKind::Shifted:
      return D.inner.front().hypotheses_verified();
    case OpKind::Linear:
      return true;
  }
  return true;
}

bool MonotoneOperator::monotonicity_spot_check(std::uint64_t seed, int pairs, double tol) const {
  Rng rng(seed);
  const int m = base_algebra().atom_count();
  for (int a = 0; a < m; ++a) {
    const int n = data_->layout.stacked_dim(a);
    Rng local = rng.fork(static_cast<std::uint64_t>(a));
    for (int k = 0; k < pairs; ++k) {
      Eigen::VectorXd u(n), v(n);
      for (int i = 0; i < n; ++i) {
        u[i] = 2.0 * local.normal();
        v[i] = 2.0 * local.normal();
      }
      const Eigen::VectorXd diff = u - v;
      const double ip = (data_->layout.weights(a).array() *
                         (apply_atom(a, u) - apply_atom(a, v)).array() * diff.array())
                            .sum();
      if (ip < -tol) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

namespace {

StableConvexSet domain_or_whole(const StableFunction& phi) {
  auto dom = phi.domain_set();
  if (dom) return *dom;
  return StableConvexSet::whole_space(phi.base_algebra(), phi.dim());
}

void residuals_impl(const MonotoneOperator& M, const ModuleElement& frep,
                    const StableFunction& phi, const ModuleElement& u,
                    const StableConvexSet& dom, const SolveOptions& options,
                    RandomVariable& direct, RandomVariable& minty) {
  const AtomLayout& layout = M.layout();
  const int m = M.base_algebra().atom_count();
  struct Pair {
    XReal a, b;
  };
  auto per_atom = parallel_map_atoms(m, [&](int atom) {
    const Eigen::VectorXd ua = layout.stack(u, atom);
    const Eigen::VectorXd fa = layout.stack(frep, atom);
    const Eigen::VectorXd Mu = M.apply_atom(atom, ua);
    const XReal phi_u = phi.evaluate_atom(atom, ua);
    Rng rng = Rng(options.seed).fork(static_cast<std::uint64_t>(atom) + 1000);
    const auto family = detail::atom_test_family(dom, atom, ua, options.cert_samples, rng);
    XReal worst_direct = XReal::pos_inf();
    XReal worst_minty = XReal::pos_inf();
    for (const auto& v : family) {
      const Eigen::VectorXd dir = v - ua;
      const XReal phi_diff = phi.evaluate_atom(atom, v) - phi_u;
      const double lin_u = layout.inner(atom, Mu - fa, dir);
      const double lin_v = layout.inner(atom, M.apply_atom(atom, v) - fa, dir);
      worst_direct = min(worst_direct, XReal::finite(lin_u) + phi_diff);
      worst_minty = min(worst_minty, XReal::finite(lin_v) + phi_diff);
    }
    return Pair{worst_direct, worst_minty};
  });
  std::vector<XReal> va, vb;
  for (const auto& p : per_atom) {
    va.push_back(p.a);
    vb.push_back(p.b);
  }
  direct = RandomVariable(M.base_algebra(), std::move(va));
  minty = RandomVariable(M.base_algebra(), std::move(vb));
}

}  // namespace

ViResiduals vi_residuals(const MonotoneOperator& M, const DualFunctional& f,
                         const StableFunction& phi, const ModuleElement& u,
                         const SolveOptions& options) {
  ViResiduals r{RandomVariable::constant(M.base_algebra(), 0.0),
                RandomVariable::constant(M.base_algebra(), 0.0)};
  residuals_impl(M, f.representer(), phi, u, domain_or_whole(phi), options, r.direct, r.minty);
  return r;
}

VISolution solve_vi(const MonotoneOperator& M, const DualFunctional& f, const StableFunction& phi,
                    const std::optional<ModuleElement>& v0, const SolveOptions& options,
                    VIMethod method) {
  const SigmaAlgebra& alg = M.base_algebra();
  if (f.representer().base_algebra() != alg || f.representer().dim() != M.dim() ||
      phi.base_algebra() != alg || phi.dim() != M.dim())
    throw std::invalid_argument("solve_vi: mismatched modules");

  const StableConvexSet dom = domain_or_whole(phi);
  if (!M.monotonicity_spot_check(options.seed, 10, options.cert_tol))
    throw std::invalid_argument("solve_vi: operator failed the monotonicity spot-check");
  const RandomVariable L = M.lipschitz();
  const RandomVariable alpha = M.strong_modulus();
  bool strongly_monotone = true;
  for (int a = 0; a < alg.atom_count(); ++a)
    if (!(alpha[a].value() > 1e-12)) strongly_monotone = false;

  // Existence hypotheses: bounded domain, strong monotonicity, or the
  // declared coercivity-with-phi flag (with divergence guards below).
  if (!strongly_monotone && !M.coercive()) {
    const auto cert = certify_order_bounded(dom);
    if (!cert.compact)
      throw std::invalid_argument(
          "solve_vi: hypotheses unmet: dom(phi) unbounded, operator not strongly monotone "
          "and no coercivity declared");
  }

  if (method == VIMethod::Auto)
    method = strongly_monotone ? VIMethod::ForwardBackward : VIMethod::Extragradient;
  if (method == VIMethod::ForwardBackward && !strongly_monotone)
    method = VIMethod::Extragradient;

  const AtomLayout& layout = M.layout();
  const ModuleElement frep = f.representer();
  const ModuleElement start_elem = v0 ? *v0 : phi.prox(ModuleElement::zero(alg, M.dim()));

  struct AtomOut {
    Eigen::VectorXd y;
    int iterations = 0;
    double gauge = 0.0;
  };
  auto run_atoms = [&](double gauge_tol) {
  return parallel_map_atoms(alg.atom_count(), [&](int atom) {
    const Eigen::VectorXd fa = layout.stack(frep, atom);
    Eigen::VectorXd y = layout.stack(start_elem, atom);
    const double start_scale = 1.0 + y.cwiseAbs().maxCoeff();
    const double La = L[atom].value();
    double tau;
    switch (method) {
      case VIMethod::ForwardBackward:
        tau = alpha[atom].value() / std::max(La * La, 1e-300);
        break;
      case VIMethod::Extragradient:
        tau = La > 0.0 ? 1.0 / (2.0 * La) : 1.0;
        break;
      default:
        tau = 1.0;
        break;
    }
    // The step gauge understates the distance to the fixed point by the
    // contraction margin; tighten the stop so the solution itself meets
    // the nominal gauge.
    double stop_gauge = gauge_tol;
    if (method == VIMethod::ForwardBackward) {
      const double ratio = alpha[atom].value() / std::max(La, 1e-300);
      const double rho = std::sqrt(std::max(0.0, 1.0 - ratio * ratio));
      stop_gauge = gauge_tol * std::clamp((1.0 - rho) / std::max(rho, 1e-4), 1e-4, 1.0);
    }
    AtomOut out;
    for (int it = 0; it < options.max_iterations; ++it) {
      Eigen::VectorXd next;
      double gauge;
      if (method == VIMethod::Extragradient) {
        const Eigen::VectorXd mid =
            phi.prox_atom(atom, y - tau * (M.apply_atom(atom, y) - fa), tau);
        next = phi.prox_atom(atom, y - tau * (M.apply_atom(atom, mid) - fa), tau);
        gauge = std::max((mid - y).cwiseAbs().maxCoeff(), (next - y).cwiseAbs().maxCoeff());
      } else if (method == VIMethod::FixedPointStep1) {
        next = phi.prox_atom(atom, y + fa - M.apply_atom(atom, y), 1.0);
        gauge = (next - y).cwiseAbs().maxCoeff();
      } else {
        next = phi.prox_atom(atom, y - tau * (M.apply_atom(atom, y) - fa), tau);
        gauge = (next - y).cwiseAbs().maxCoeff();
      }
      y = std::move(next);
      out.iterations = it + 1;
      out.gauge = gauge;
      if (gauge <= stop_gauge) break;
      if (y.cwiseAbs().maxCoeff() > 1e9 * start_scale)
        throw std::runtime_error("solve_vi: iterate explosion on atom " + std::to_string(atom) +
                                 " (coercivity declaration suspect)");
      if (it + 1 == options.max_iterations)
        throw std::runtime_error("solve_vi: no convergence within iteration cap on atom " +
                                 std::to_string(atom) + " (last gauge " +
                                 std::to_string(gauge) + ")");
    }
    // Report the fixed-point gauge at the returned point itself.
    const double tq = method == VIMethod::FixedPointStep1 ? 1.0 : tau;
    const Eigen::VectorXd back =
        phi.prox_atom(atom, y - tq * (M.apply_atom(atom, y) - fa), tq);
    out.gauge = (back - y).cwiseAbs().maxCoeff();
    out.y = y;
    return out;
  });
  };

  // Solve, then tighten the stopping gauge until the residual certificate
  // passes (badly conditioned atoms need a tighter fixed point than the
  // nominal gauge to reach the certificate tolerance).
  double gauge_tol = options.gauge_tol;
  for (;;) {
    auto outcomes = run_atoms(gauge_tol);
    std::vector<Eigen::VectorXd> ys;
    std::vector<int> iterations;
    std::vector<XReal> gauges;
    for (auto& o : outcomes) {
      ys.push_back(std::move(o.y));
      iterations.push_back(o.iterations);
      gauges.push_back(XReal::finite(o.gauge));
    }
    VISolution sol{layout.assemble(ys),
                   RandomVariable::constant(alg, 0.0),
                   RandomVariable::constant(alg, 0.0),
                   RandomVariable(alg, std::move(gauges)),
                   std::move(iterations),
                   method == VIMethod::ForwardBackward    ? "forward_backward"
                   : method == VIMethod::Extragradient    ? "extragradient"
                   : method == VIMethod::FixedPointStep1 ? "fixed_point_step1"
                                                          : "auto",
                   M.hypotheses_verified() && phi.hypotheses_verified()};
    residuals_impl(M, frep, phi, sol.u, dom, options, sol.direct_residual, sol.minty_residual);
    double worst = 0.0;
    for (int a = 0; a < alg.atom_count(); ++a)
      worst = std::min(worst, sol.direct_residual[a].as_double());
    if (worst >= -options.cert_tol) return sol;
    if (gauge_tol <= 1.1e-13)
      throw std::runtime_error("solve_vi: certificate failure (worst direct residual " +
                               std::to_string(worst) + " at the tightest gauge)");
    gauge_tol = std::max(1e-13, gauge_tol * 1e-2);
  }
}

VISolution solve_vi_over_set(const MonotoneOperator& M, const DualFunctional& f,
                             const StableConvexSet& G, const SolveOptions& options,
                             VIMethod method) {
  const ModuleElement zero = ModuleElement::zero(G.base_algebra(), G.dim());
  if (membership(G, zero, 1e-9).member) {
    return solve_vi(M, f, StableFunction::indicator(G), G.feasible_point(), options, method);
  }
  // Translate so the null element becomes feasible.
  const ModuleElement u0 = G.feasible_point();
  const StableConvexSet G0 = G.translated(u0);
  VISolution sol = solve_vi(M.shifted_argument(u0), f, StableFunction::indicator(G0), zero,
                            options, method);
  sol.u = sol.u + u0;
  residuals_impl(M, f.representer(), StableFunction::indicator(G), sol.u, G, options,
                 sol.direct_residual, sol.minty_residual);
  return sol;
}

ModuleElement solve_operator_equation(const MonotoneOperator& M, const DualFunctional& f,
                                      const SolveOptions& options) {
  if (!M.is_affine())
    throw std::invalid_argument("solve_operator_equation: affine operator required");
  const SigmaAlgebra& alg = M.base_algebra();
  const AtomLayout& layout = M.layout();
  Rng rng(options.seed);
  const int m = alg.atom_count();
  std::vector<Eigen::VectorXd> ys(static_cast<size_t>(m));
  for (int atom = 0; atom < m; ++atom) {
    const int n = layout.stacked_dim(atom);
    const Eigen::VectorXd c0 = M.apply_atom(atom, Eigen::VectorXd::Zero(n));
    const Eigen::MatrixXd J = linearization(M, atom, Eigen::VectorXd::Zero(n));
    // Weighted-coercivity spot-check on random directions.
    Rng local = rng.fork(static_cast<std::uint64_t>(atom));
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v[i] = local.normal();
      const double ip = (layout.weights(atom).array() * (J * v).array() * v.array()).sum();
      const double nn = (layout.weights(atom).array() * v.array().square()).sum();
      if (ip < 1e-10 * nn)
        throw std::invalid_argument(
            "solve_operator_equation: coercivity spot-check failed on atom " +
            std::to_string(atom));
    }
    const Eigen::VectorXd rhs = layout.stack(f.representer(), atom) - c0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    const Eigen::VectorXd y = lu.solve(rhs);
    if ((J * y - rhs).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff()))
      throw std::runtime_error("solve_operator_equation: singular system on atom " +
                               std::to_string(atom));
    ys[static_cast<size_t>(atom)] = y;
  }
  return layout.assemble(ys);
}

}  // namespace l0opt
