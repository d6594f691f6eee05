#include "l0opt/functions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "l0opt/parallel.hpp"

namespace l0opt {

namespace {

constexpr double kProxSweepTol = 1e-9;
constexpr int kProxSweepCap = 10000;
constexpr double kMembershipTol = 1e-9;

}  // namespace

// ---------------------------------------------------------------------------
// PlqFunction
// ---------------------------------------------------------------------------

PlqFunction::PlqFunction(std::vector<double> breakpoints, std::vector<Eigen::Vector3d> coeffs)
    : t_(std::move(breakpoints)), q_(std::move(coeffs)) {
  if (q_.size() != t_.size() + 1)
    throw std::invalid_argument("PlqFunction: need one piece per interval");
  for (size_t i = 1; i < t_.size(); ++i)
    if (!(t_[i - 1] < t_[i])) throw std::invalid_argument("PlqFunction: breakpoints must increase");
  for (const auto& q : q_)
    if (q[0] < 0.0) throw std::invalid_argument("PlqFunction: pieces must be convex (a >= 0)");
  for (size_t i = 0; i < t_.size(); ++i) {
    const double t = t_[i];
    const auto& ql = q_[i];
    const auto& qr = q_[i + 1];
    const double vl = ql[0] * t * t + ql[1] * t + ql[2];
    const double vr = qr[0] * t * t + qr[1] * t + qr[2];
    if (std::abs(vl - vr) > 1e-9 * (1.0 + std::abs(vl)))
      throw std::invalid_argument("PlqFunction: pieces must be continuous at breakpoints");
    const double dl = 2.0 * ql[0] * t + ql[1];
    const double dr = 2.0 * qr[0] * t + qr[1];
    if (dl > dr + 1e-12)
      throw std::invalid_argument("PlqFunction: derivative must be nondecreasing (convexity)");
  }
}

PlqFunction PlqFunction::huber(double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber: delta must be positive");
  return PlqFunction({-delta, delta},
                     {Eigen::Vector3d(0, -delta, -0.5 * delta * delta),
                      Eigen::Vector3d(0.5, 0, 0),
                      Eigen::Vector3d(0, delta, -0.5 * delta * delta)});
}

int PlqFunction::piece_of(double t) const {
  int i = 0;
  while (i < static_cast<int>(t_.size()) && t > t_[static_cast<size_t>(i)]) ++i;
  return i;
}

double PlqFunction::value(double t) const {
  const auto& q = q_[static_cast<size_t>(piece_of(t))];
  return q[0] * t * t + q[1] * t + q[2];
}

double PlqFunction::derivative_left(double t) const {
  int i = piece_of(t);
  // At a breakpoint, piece_of returns the left piece (t <= t_i).
  const auto& q = q_[static_cast<size_t>(i)];
  return 2.0 * q[0] * t + q[1];
}

double PlqFunction::derivative_right(double t) const {
  int i = piece_of(t);
  if (i < static_cast<int>(t_.size()) && t == t_[static_cast<size_t>(i)]) ++i;
  const auto& q = q_[static_cast<size_t>(i)];
  return 2.0 * q[0] * t + q[1];
}

double PlqFunction::prox(double x, double tau) const {
  if (tau == 0.0) return x;
  // The optimality condition u + tau g'(u) = x has a nondecreasing left side;
  // scan breakpoints first, then piece interiors.
  for (size_t i = 0; i < t_.size(); ++i) {
    const double t = t_[i];
    if (x >= t + tau * derivative_left(t) && x <= t + tau * derivative_right(t)) return t;
  }
  for (size_t i = 0; i < q_.size(); ++i) {
    const double a = q_[i][0], b = q_[i][1];
    const double u = (x - tau * b) / (1.0 + 2.0 * tau * a);
    const double lo = i == 0 ? -std::numeric_limits<double>::infinity() : t_[i - 1];
    const double hi =
        i == t_.size() ? std::numeric_limits<double>::infinity() : t_[i];
    if (u >= lo && u <= hi) return u;
  }
  // Unreachable for a valid convex PLQ.
  throw std::logic_error("PlqFunction::prox: no piece matched");
}

bool PlqFunction::strictly_convex() const {
  for (const auto& q : q_)
    if (!(q[0] > 0.0)) return false;
  return true;
}

bool PlqFunction::smooth() const {
  for (double t : t_)
    if (std::abs(derivative_left(t) - derivative_right(t)) > 1e-12) return false;
  return true;
}

namespace {

/// True when g >= 0 everywhere (used for the conservative coercivity rule).
bool plq_nonnegative(const PlqFunction& g) {
  const auto& t = g.breakpoints();
  const auto& q = g.coefficients();
  auto piece_min = [&](size_t i, double lo, double hi) {
    const double a = q[i][0], b = q[i][1], c = q[i][2];
    double m = std::numeric_limits<double>::infinity();
    auto eval = [&](double u) { return a * u * u + b * u + c; };
    if (std::isfinite(lo)) m = std::min(m, eval(lo));
    if (std::isfinite(hi)) m = std::min(m, eval(hi));
    if (a > 0.0) {
      const double v = -b / (2.0 * a);
      if (v >= lo && v <= hi) m = std::min(m, eval(v));
    } else {
      if (!std::isfinite(lo) && b > 0.0) return -std::numeric_limits<double>::infinity();
      if (!std::isfinite(hi) && b < 0.0) return -std::numeric_limits<double>::infinity();
      if (b == 0.0) m = std::min(m, c);
    }
    return m;
  };
  for (size_t i = 0; i < q.size(); ++i) {
    const double lo = i == 0 ? -std::numeric_limits<double>::infinity() : t[i - 1];
    const double hi = i == t.size() ? std::numeric_limits<double>::infinity() : t[i];
    if (piece_min(i, lo, hi) < 0.0) return false;
  }
  return true;
}

bool plq_coercive(const PlqFunction& g) {
  const auto& q = g.coefficients();
  const auto& first = q.front();
  const auto& last = q.back();
  const bool left = first[0] > 0.0 || first[1] < 0.0;
  const bool right = last[0] > 0.0 || last[1] > 0.0;
  return left && right;
}

}  // namespace

// ---------------------------------------------------------------------------
// StableFunction internals
// ---------------------------------------------------------------------------

namespace {
enum class FnKind { Quadratic, PNorm, Indicator, Separable, Linear, Scaled, Sum, Custom };
}  // namespace

struct StableFunction::Data {
  using Kind = FnKind;
  Kind kind;
  AtomLayout layout;
  // quadratic
  std::vector<Eigen::MatrixXd> S;
  std::optional<ModuleElement> lrep;
  std::optional<RandomVariable> constant;
  // pnorm
  double p = 2.0;
  std::optional<RandomVariable> lambda;
  // indicator
  std::optional<StableConvexSet> G;
  // separable
  std::optional<PlqFunction> plq;
  // scaled
  std::optional<RandomVariable> eta;
  // scaled / sum children
  std::vector<StableFunction> children;
  // custom hooks
  std::optional<StableFunction::CustomHooks> hooks;
  // flags
  bool strictly_convex = false;
  bool coercive = false;
  bool smooth = false;

  Data(Kind k, const SigmaAlgebra& alg, int d) : kind(k), layout(alg, d) {}
};

using Kind = FnKind;

const AtomLayout& StableFunction::layout() const { return data_->layout; }
const SigmaAlgebra& StableFunction::base_algebra() const { return data_->layout.algebra(); }
int StableFunction::dim() const { return data_->layout.dim(); }
bool StableFunction::strictly_convex() const { return data_->strictly_convex; }
bool StableFunction::coercive() const { return data_->coercive; }
bool StableFunction::smooth() const { return data_->smooth; }

StableFunction StableFunction::with_coercive(bool flag) const {
  auto d = std::make_shared<Data>(*data_);
  d->coercive = flag;
  return StableFunction(std::move(d));
}

// -- factories ---------------------------------------------------------------

StableFunction StableFunction::quadratic(const SigmaAlgebra& base_algebra, int d,
                                         std::vector<Eigen::MatrixXd> form_per_atom,
                                         std::optional<DualFunctional> l,
                                         std::optional<RandomVariable> constant) {
  auto data = std::make_shared<Data>(Kind::Quadratic, base_algebra, d);
  if (static_cast<int>(form_per_atom.size()) != base_algebra.atom_count())
    throw std::invalid_argument("quadratic: one form per atom required");
  bool strict = true;
  for (int a = 0; a < base_algebra.atom_count(); ++a) {
    Eigen::MatrixXd& S = form_per_atom[static_cast<size_t>(a)];
    const int n = data->layout.stacked_dim(a);
    if (S.rows() != n || S.cols() != n)
      throw std::invalid_argument("quadratic: form size mismatch on atom " + std::to_string(a));
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (lo < -1e-10 * hi)
      throw std::invalid_argument("quadratic: form must be positive semidefinite (atom " +
                                  std::to_string(a) + ")");
    if (lo <= 1e-12 * hi) strict = false;
  }
  data->S = std::move(form_per_atom);
  if (l) {
    if (l->representer().base_algebra() != base_algebra || l->representer().dim() != d)
      throw std::invalid_argument("quadratic: functional does not match module");
    data->lrep = l->representer();
  }
  if (constant && constant->algebra() != base_algebra)
    throw std::invalid_argument("quadratic: constant term on wrong algebra");
  data->constant = std::move(constant);
  data->strictly_convex = strict;
  data->coercive = strict;
  data->smooth = true;
  return StableFunction(std::move(data));
}

StableFunction StableFunction::conditional_square_norm(const SigmaAlgebra& base_algebra, int d) {
  AtomLayout layout(base_algebra, d);
  std::vector<Eigen::MatrixXd> forms;
  for (int a = 0; a < base_algebra.atom_count(); ++a)
    forms.push_back(layout.weights(a).asDiagonal());
  return quadratic(base_algebra, d, std::move(forms));
}

StableFunction StableFunction::half_sqdist(const ModuleElement& x0) {
  const SigmaAlgebra& alg = x0.base_algebra();
  AtomLayout layout(alg, x0.dim());
  std::vector<Eigen::MatrixXd> forms;
  std::vector<XReal> consts;
  for (int a = 0; a < alg.atom_count(); ++a) {
    forms.push_back((0.5 * layout.weights(a)).asDiagonal());
    const Eigen::VectorXd c = layout.stack(x0, a);
    consts.push_back(XReal::finite(0.5 * layout.inner(a, c, c)));
  }
  return quadratic(alg, x0.dim(), std::move(forms), DualFunctional(0.5 * x0),
                   RandomVariable(alg, std::move(consts)));
}

StableFunction StableFunction::cond_pnorm_power(const SigmaAlgebra& base_algebra, int d, double p,
                                                RandomVariable lambda) {
  if (!(p >= 1.0) || std::isinf(p))
    throw std::invalid_argument("cond_pnorm_power: p must lie in [1, inf)");
  if (lambda.algebra() != base_algebra)
    throw std::invalid_argument("cond_pnorm_power: lambda on wrong algebra");
  bool positive = true;
  for (int a = 0; a < lambda.size(); ++a) {
    if (!lambda[a].is_finite() || lambda[a].value() < 0.0)
      throw std::invalid_argument("cond_pnorm_power: lambda must be finite and >= 0");
    if (lambda[a].value() <= 0.0) positive = false;
  }
  auto data = std::make_shared<Data>(Kind::PNorm, base_algebra, d);
  data->p = p;
  data->lambda = std::move(lambda);
  data->strictly_convex = p > 1.0 && positive;
  data->coercive = positive;
  data->smooth = p > 1.0;
  return StableFunction(std::move(data));
}

StableFunction StableFunction::cond_variance(const SigmaAlgebra& base_algebra, int d) {
  AtomLayout layout(base_algebra, d);
  std::vector<Eigen::MatrixXd> forms;
  for (int a = 0; a < base_algebra.atom_count(); ++a) {
    const int n = layout.stacked_dim(a);
    const Eigen::VectorXd& w = layout.weights(a);
    Eigen::MatrixXd S = Eigen::MatrixXd(w.asDiagonal());
    // Subtract sum_j w_j w_j' where w_j masks coordinate j of every scenario.
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd wj = Eigen::VectorXd::Zero(n);
      for (int i = j; i < n; i += d) wj[i] = w[i];
      S -= wj * wj.transpose();
    }
    forms.push_back(std::move(S));
  }
  return quadratic(base_algebra, d, std::move(forms));
}

StableFunction StableFunction::indicator(StableConvexSet G) {
  auto data = std::make_shared<Data>(Kind::Indicator, G.base_algebra(), G.dim());
  data->G = std::move(G);
  data->smooth = false;
  return StableFunction(std::move(data));
}

StableFunction StableFunction::separable(const SigmaAlgebra& base_algebra, int d,
                                         PlqFunction g) {
  auto data = std::make_shared<Data>(Kind::Separable, base_algebra, d);
  data->strictly_convex = g.strictly_convex();
  data->smooth = g.smooth();
  data->coercive = plq_coercive(g);
  data->plq = std::move(g);
  return StableFunction(std::move(data));
}

StableFunction StableFunction::linear(DualFunctional l) {
  const ModuleElement& rep = l.representer();
  auto data = std::make_shared<Data>(Kind::Linear, rep.base_algebra(), rep.dim());
  data->lrep = rep;
  data->smooth = true;
  return StableFunction(std::move(data));
}

StableFunction StableFunction::custom(const SigmaAlgebra& base_algebra, int d,
                                      CustomHooks hooks) {
  if (!hooks.evaluate) throw std::invalid_argument("custom: evaluate hook required");
  auto data = std::make_shared<Data>(Kind::Custom, base_algebra, d);
  data->smooth = static_cast<bool>(hooks.gradient);
  data->hooks = std::move(hooks);
  return StableFunction(std::move(data));
}

StableFunction StableFunction::scaled(RandomVariable eta, StableFunction f) {
  if (eta.algebra() != f.base_algebra())
    throw std::invalid_argument("scaled: eta on wrong algebra");
  bool positive = true;
  for (int a = 0; a < eta.size(); ++a) {
    if (!eta[a].is_finite() || eta[a].value() < 0.0)
      throw std::invalid_argument("scaled: eta must be finite and >= 0");
    if (eta[a].value() <= 0.0) positive = false;
  }
  auto data = std::make_shared<Data>(Kind::Scaled, f.base_algebra(), f.dim());
  data->strictly_convex = positive && f.strictly_convex();
  data->coercive = positive && f.coercive();
  data->smooth = f.smooth();
  data->eta = std::move(eta);
  data->children.push_back(std::move(f));
  return StableFunction(std::move(data));
}

namespace {

/// True when the function is nonnegative everywhere (conservative).
bool nonnegative_kind(const StableFunction& f);

}  // namespace

StableFunction StableFunction::sum(std::vector<StableFunction> terms) {
  if (terms.empty()) throw std::invalid_argument("sum: empty term list");
  // Flatten nested sums so Dykstra splitting sees a single level.
  std::vector<StableFunction> flat;
  for (auto& t : terms) {
    if (t.data_->kind == Kind::Sum) {
      for (const auto& c : t.data_->children) flat.push_back(c);
    } else {
      flat.push_back(std::move(t));
    }
  }
  if (flat.size() == 1) return flat.front();
  const SigmaAlgebra& alg = flat.front().base_algebra();
  const int d = flat.front().dim();
  for (const auto& t : flat)
    if (t.base_algebra() != alg || t.dim() != d)
      throw std::invalid_argument("sum: mismatched modules");
  auto data = std::make_shared<Data>(Kind::Sum, alg, d);
  bool strict = false, all_smooth = true;
  for (const auto& t : flat) {
    strict = strict || t.strictly_convex();
    all_smooth = all_smooth && t.smooth();
  }
  bool coercive = false;
  for (size_t i = 0; i < flat.size(); ++i) {
    if (!flat[i].coercive()) continue;
    bool rest_ok = true;
    for (size_t j = 0; j < flat.size(); ++j)
      if (j != i && !nonnegative_kind(flat[j])) rest_ok = false;
    if (rest_ok) coercive = true;
  }
  data->strictly_convex = strict;
  data->smooth = all_smooth;
  data->coercive = coercive;
  data->children = std::move(flat);
  return StableFunction(std::move(data));
}

namespace {

bool nonnegative_kind(const StableFunction& f) {
  // Accesses internals through the public per-atom surface only where
  // possible; the kind switch lives here because Data is private.
  return f.evaluate_nonnegative_hint();
}

}  // namespace

bool StableFunction::evaluate_nonnegative_hint() const {
  switch (data_->kind) {
    case Kind::PNorm:
    case Kind::Indicator:
      return true;
    case Kind::Quadratic: {
      if (data_->lrep) return false;
      if (data_->constant)
        for (int a = 0; a < data_->constant->size(); ++a)
          if ((*data_->constant)[a] < XReal::finite(0.0)) return false;
      return true;  // PSD form
    }
    case Kind::Separable:
      return plq_nonnegative(*data_->plq);
    case Kind::Scaled:
      return data_->children.front().evaluate_nonnegative_hint();
    case Kind::Sum: {
      for (const auto& c : data_->children)
        if (!c.evaluate_nonnegative_hint()) return false;
      return true;
    }
    case Kind::Linear:
    case Kind::Custom:
      return false;
  }
  return false;
}

std::vector<StableFunction> StableFunction::addends() const {
  if (data_->kind == Kind::Sum) return data_->children;
  return {*this};
}

bool StableFunction::is_indicator_like() const {
  if (data_->kind == Kind::Indicator) return true;
  if (data_->kind == Kind::Scaled) return data_->children.front().is_indicator_like();
  return false;
}

bool StableFunction::hypotheses_verified() const {
  if (data_->kind == Kind::Custom) return false;
  for (const auto& c : data_->children)
    if (!c.hypotheses_verified()) return false;
  return true;
}

std::optional<StableConvexSet> StableFunction::domain_set() const {
  switch (data_->kind) {
    case Kind::Indicator:
      return data_->G;
    case Kind::Scaled:
      return data_->children.front().domain_set();
    case Kind::Sum: {
      std::optional<StableConvexSet> dom;
      for (const auto& c : data_->children) {
        auto cd = c.domain_set();
        if (!cd) continue;
        if (!dom) {
          dom = cd;
          continue;
        }
        // Intersect per-atom descriptors.
        std::vector<AtomDescriptor> descs;
        for (int a = 0; a < base_algebra().atom_count(); ++a) {
          IntersectionDesc inter;
          inter.parts.push_back(dom->descriptor(a));
          inter.parts.push_back(cd->descriptor(a));
          descs.push_back(std::move(inter));
        }
        dom = StableConvexSet(base_algebra(), dim(), std::move(descs));
      }
      return dom;
    }
    default:
      return std::nullopt;
  }
}

// -- per-atom evaluation -------------------------------------------------------

XReal StableFunction::evaluate_atom(int atom, const Eigen::VectorXd& y) const {
  const Data& D = *data_;
  switch (D.kind) {
    case Kind::Quadratic: {
      double v = y.dot(D.S[static_cast<size_t>(atom)] * y);
      if (D.lrep) {
        const Eigen::VectorXd l = D.layout.stack(*D.lrep, atom);
        v -= 2.0 * D.layout.inner(atom, l, y);
      }
      if (D.constant) v += (*D.constant)[atom].value();
      return XReal::finite(v);
    }
    case Kind::PNorm: {
      const int d = D.layout.dim();
      const Eigen::VectorXd& sw = D.layout.scenario_weights(atom);
      double acc = 0.0;
      for (int i = 0; i < sw.size(); ++i)
        acc += sw[i] * std::pow(y.segment(i * d, d).norm(), D.p);
      return XReal::finite((*D.lambda)[atom].value() * acc);
    }
    case Kind::Indicator:
      return atom_membership(*D.G, atom, y, kMembershipTol) ? XReal::finite(0.0)
                                                            : XReal::pos_inf();
    case Kind::Separable: {
      const Eigen::VectorXd& w = D.layout.weights(atom);
      double acc = 0.0;
      for (int i = 0; i < w.size(); ++i) acc += w[i] * D.plq->value(y[i]);
      return XReal::finite(acc);
    }
    case Kind::Linear: {
      const Eigen::VectorXd l = D.layout.stack(*D.lrep, atom);
      return XReal::finite(D.layout.inner(atom, l, y));
    }
    case Kind::Scaled:
      return (*D.eta)[atom].value() * D.children.front().evaluate_atom(atom, y);
    case Kind::Sum: {
      XReal acc = XReal::finite(0.0);
      for (const auto& c : D.children) acc = acc + c.evaluate_atom(atom, y);
      return acc;
    }
    case Kind::Custom:
      return D.hooks->evaluate(atom, y);
  }
  return XReal::finite(0.0);
}

XReal StableFunction::gateaux_atom(int atom, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& dir) const {
  const Data& D = *data_;
  switch (D.kind) {
    case Kind::Quadratic: {
      double v = 2.0 * y.dot(D.S[static_cast<size_t>(atom)] * dir);
      if (D.lrep) {
        const Eigen::VectorXd l = D.layout.stack(*D.lrep, atom);
        v -= 2.0 * D.layout.inner(atom, l, dir);
      }
      return XReal::finite(v);
    }
    case Kind::PNorm: {
      const int d = D.layout.dim();
      const Eigen::VectorXd& sw = D.layout.scenario_weights(atom);
      double acc = 0.0;
      for (int i = 0; i < sw.size(); ++i) {
        const Eigen::VectorXd xi = y.segment(i * d, d);
        const Eigen::VectorXd di = dir.segment(i * d, d);
        const double nx = xi.norm();
        double term;
        if (nx > 0.0) {
          term = D.p * std::pow(nx, D.p - 2.0) * xi.dot(di);
        } else {
          term = D.p == 1.0 ? di.norm() : 0.0;
        }
        acc += sw[i] * term;
      }
      return XReal::finite((*D.lambda)[atom].value() * acc);
    }
    case Kind::Indicator: {
      if (!atom_membership(*D.G, atom, y, kMembershipTol))
        throw std::domain_error("gateaux: point outside dom(f) on atom " + std::to_string(atom));
      // Directional derivative of the indicator: 0 when some positive step
      // stays feasible (then all smaller steps do, by convexity), else +inf.
      // The step scan stops well above the membership tolerance so that
      // curved boundaries (violations of order lambda^2) are still seen.
      double lam = 1.0;
      for (int k = 0; k < 14; ++k) {
        if (atom_membership(*D.G, atom, y + lam * dir, kMembershipTol)) return XReal::finite(0.0);
        lam *= 0.5;
      }
      return XReal::pos_inf();
    }
    case Kind::Separable: {
      const Eigen::VectorXd& w = D.layout.weights(atom);
      double acc = 0.0;
      for (int i = 0; i < w.size(); ++i) {
        if (dir[i] > 0.0)
          acc += w[i] * D.plq->derivative_right(y[i]) * dir[i];
        else if (dir[i] < 0.0)
          acc += w[i] * D.plq->derivative_left(y[i]) * dir[i];
      }
      return XReal::finite(acc);
    }
    case Kind::Linear: {
      const Eigen::VectorXd l = D.layout.stack(*D.lrep, atom);
      return XReal::finite(D.layout.inner(atom, l, dir));
    }
    case Kind::Scaled: {
      // A zero scaling annihilates the member on the atom (0 * inf = 0),
      // including indicators whose domain the point may violate.
      const double e = (*D.eta)[atom].value();
      if (e == 0.0) return XReal::finite(0.0);
      return e * D.children.front().gateaux_atom(atom, y, dir);
    }
    case Kind::Sum: {
      XReal acc = XReal::finite(0.0);
      for (const auto& c : D.children) acc = acc + c.gateaux_atom(atom, y, dir);
      return acc;
    }
    case Kind::Custom: {
      // No analytic form for raw callbacks: dyadic difference quotients.
      const XReal f0 = D.hooks->evaluate(atom, y);
      if (!f0.is_finite())
        throw std::domain_error("gateaux: point outside dom(f) on atom " + std::to_string(atom));
      XReal prev = XReal::pos_inf();
      double lam = 1.0;
      for (int k = 0; k < 27; ++k) {
        const XReal q = (1.0 / lam) * (D.hooks->evaluate(atom, y + lam * dir) - f0);
        const XReal gap = metric_abs_diff(q, prev);
        if (gap.is_finite() && gap.value() < 1e-9) return q;
        prev = q;
        lam *= 0.5;
      }
      return prev;
    }
  }
  return XReal::finite(0.0);
}

Eigen::VectorXd StableFunction::gradient_atom(int atom, const Eigen::VectorXd& y) const {
  const Data& D = *data_;
  switch (D.kind) {
    case Kind::Quadratic: {
      Eigen::VectorXd g = 2.0 * (D.S[static_cast<size_t>(atom)] * y);
      g = g.cwiseQuotient(D.layout.weights(atom));
      if (D.lrep) g -= 2.0 * D.layout.stack(*D.lrep, atom);
      return g;
    }
    case Kind::PNorm: {
      const int d = D.layout.dim();
      Eigen::VectorXd g = Eigen::VectorXd::Zero(y.size());
      const double lam = (*D.lambda)[atom].value();
      for (int i = 0; i * d < y.size(); ++i) {
        const Eigen::VectorXd xi = y.segment(i * d, d);
        const double nx = xi.norm();
        if (nx > 0.0) g.segment(i * d, d) = lam * D.p * std::pow(nx, D.p - 2.0) * xi;
      }
      return g;
    }
    case Kind::Separable: {
      Eigen::VectorXd g(y.size());
      for (int i = 0; i < y.size(); ++i) g[i] = D.plq->derivative_right(y[i]);
      return g;
    }
    case Kind::Linear:
      return D.layout.stack(*D.lrep, atom);
    case Kind::Scaled:
      return (*D.eta)[atom].value() * D.children.front().gradient_atom(atom, y);
    case Kind::Sum: {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(y.size());
      for (const auto& c : D.children) g += c.gradient_atom(atom, y);
      return g;
    }
    case Kind::Custom:
      if (D.hooks->gradient) return D.hooks->gradient(atom, y);
      break;
    case Kind::Indicator:
      break;
  }
  throw std::domain_error("gradient: function is not smooth");
}

bool StableFunction::quadratic_atom(int atom, Eigen::MatrixXd& S, Eigen::VectorXd& r,
                                    double& c) const {
  const Data& D = *data_;
  const int n = D.layout.stacked_dim(atom);
  switch (D.kind) {
    case Kind::Quadratic: {
      S = D.S[static_cast<size_t>(atom)];
      r = D.lrep ? Eigen::VectorXd(D.layout.stack(*D.lrep, atom)) : Eigen::VectorXd::Zero(n);
      c = D.constant ? (*D.constant)[atom].value() : 0.0;
      return true;
    }
    case Kind::Linear: {
      S = Eigen::MatrixXd::Zero(n, n);
      r = -0.5 * D.layout.stack(*D.lrep, atom);
      c = 0.0;
      return true;
    }
    case Kind::PNorm: {
      if (D.p != 2.0) return false;
      S = ((*D.lambda)[atom].value() * D.layout.weights(atom)).asDiagonal();
      r = Eigen::VectorXd::Zero(n);
      c = 0.0;
      return true;
    }
    case Kind::Scaled: {
      if (!D.children.front().quadratic_atom(atom, S, r, c)) return false;
      const double e = (*D.eta)[atom].value();
      S *= e;
      r *= e;
      c *= e;
      return true;
    }
    case Kind::Sum: {
      S = Eigen::MatrixXd::Zero(n, n);
      r = Eigen::VectorXd::Zero(n);
      c = 0.0;
      Eigen::MatrixXd Sc;
      Eigen::VectorXd rc;
      double cc = 0.0;
      for (const auto& child : D.children) {
        if (!child.quadratic_atom(atom, Sc, rc, cc)) return false;
        S += Sc;
        r += rc;
        c += cc;
      }
      return true;
    }
    default:
      return false;
  }
}

Eigen::VectorXd StableFunction::prox_atom(int atom, const Eigen::VectorXd& y, double tau) const {
  const Data& D = *data_;
  if (!(tau >= 0.0)) throw std::invalid_argument("prox: step must be >= 0");
  if (tau == 0.0) return y;
  const Eigen::VectorXd& w = D.layout.weights(atom);
  switch (D.kind) {
    case Kind::Quadratic: {
      // (W + 2 tau S) u = W y + 2 tau W l
      Eigen::MatrixXd M = 2.0 * tau * D.S[static_cast<size_t>(atom)];
      M += Eigen::MatrixXd(w.asDiagonal());
      Eigen::VectorXd rhs = w.cwiseProduct(y);
      if (D.lrep)
        rhs += 2.0 * tau * w.cwiseProduct(D.layout.stack(*D.lrep, atom));
      return M.ldlt().solve(rhs);
    }
    case Kind::PNorm: {
      const int d = D.layout.dim();
      const double lam = tau * (*D.lambda)[atom].value();
      Eigen::VectorXd u = y;
      for (int i = 0; i * d < y.size(); ++i) {
        const Eigen::VectorXd xi = y.segment(i * d, d);
        const double nx = xi.norm();
        double s = 0.0;
        if (nx > 0.0 && lam > 0.0) {
          if (D.p == 1.0) {
            s = std::max(nx - lam, 0.0);
          } else if (D.p == 2.0) {
            s = nx / (1.0 + 2.0 * lam);
          } else {
            // s + lam p s^(p-1) = nx on [0, nx]; the left side increases.
            double lo = 0.0, hi = nx;
            for (int it = 0; it < 80; ++it) {
              const double mid = 0.5 * (lo + hi);
              (mid + lam * D.p * std::pow(mid, D.p - 1.0) < nx ? lo : hi) = mid;
            }
            s = 0.5 * (lo + hi);
          }
        } else if (lam == 0.0) {
          s = nx;
        }
        u.segment(i * d, d) = nx > 0.0 ? Eigen::VectorXd(s / nx * xi)
                                       : Eigen::VectorXd::Zero(d);
      }
      return u;
    }
    case Kind::Indicator:
      return project_atom(*D.G, atom, y);
    case Kind::Separable: {
      Eigen::VectorXd u(y.size());
      for (int i = 0; i < y.size(); ++i) u[i] = D.plq->prox(y[i], tau);
      return u;
    }
    case Kind::Linear:
      return y - tau * D.layout.stack(*D.lrep, atom);
    case Kind::Scaled:
      return D.children.front().prox_atom(atom, y, tau * (*D.eta)[atom].value());
    case Kind::Sum: {
      // All-quadratic sums collapse to one linear solve.
      Eigen::MatrixXd S;
      Eigen::VectorXd r;
      double c = 0.0;
      if (quadratic_atom(atom, S, r, c)) {
        Eigen::MatrixXd M = 2.0 * tau * S;
        M += Eigen::MatrixXd(w.asDiagonal());
        const Eigen::VectorXd rhs = w.cwiseProduct(y) + 2.0 * tau * w.cwiseProduct(r);
        return M.ldlt().solve(rhs);
      }
      // Dykstra splitting in the product space: the sum becomes the pair
      // (componentwise members, diagonal constraint), for which the
      // two-function scheme converges to the exact prox. A stalled
      // consensus point here implies the correction terms are fixed as
      // well, so the stop cannot fire early the way a cyclic sweep over
      // three or more members can.
      const size_t m = D.children.size();
      const double mm = static_cast<double>(m);
      Eigen::VectorXd cons = y;  // diagonal (consensus) point
      std::vector<Eigen::VectorXd> p(m, Eigen::VectorXd::Zero(y.size()));
      std::vector<Eigen::VectorXd> q(m, Eigen::VectorXd::Zero(y.size()));
      std::vector<Eigen::VectorXd> u(m, y);
      for (int sweep = 0; sweep < kProxSweepCap; ++sweep) {
        for (size_t i = 0; i < m; ++i) {
          const Eigen::VectorXd v = cons + p[i];
          u[i] = D.children[i].prox_atom(atom, v, mm * tau);
          p[i] = v - u[i];
        }
        Eigen::VectorXd avg = Eigen::VectorXd::Zero(y.size());
        for (size_t i = 0; i < m; ++i) avg += u[i] + q[i];
        avg /= mm;
        for (size_t i = 0; i < m; ++i) q[i] = u[i] + q[i] - avg;
        const double step = std::sqrt((w.array() * (avg - cons).array().square()).sum());
        double consensus = 0.0;
        for (size_t i = 0; i < m; ++i)
          consensus = std::max(
              consensus, std::sqrt((w.array() * (u[i] - avg).array().square()).sum()));
        cons = avg;
        if (step <= kProxSweepTol && consensus <= kProxSweepTol && sweep > 0) {
          // Feasibility polish: the consensus average can sit a gauge away
          // from the indicator members' sets; land exactly on them.
          for (const auto& child : D.children)
            if (child.is_indicator_like()) cons = child.prox_atom(atom, cons, 1.0);
          return cons;
        }
      }
      throw std::runtime_error("prox: Dykstra splitting did not converge on atom " +
                               std::to_string(atom));
    }
    case Kind::Custom:
      if (D.hooks->prox) return D.hooks->prox(atom, y, tau);
      throw std::domain_error("prox: custom function supplies no prox hook");
  }
  return y;
}

// -- module-level operations ---------------------------------------------------

RandomVariable StableFunction::evaluate(const ModuleElement& x) const {
  if (x.base_algebra() != base_algebra() || x.dim() != dim())
    throw std::invalid_argument("evaluate: element does not match function module");
  const int m = base_algebra().atom_count();
  auto vals = parallel_map_atoms(
      m, [&](int a) { return evaluate_atom(a, data_->layout.stack(x, a)); });
  return RandomVariable(base_algebra(), std::move(vals));
}

RandomVariable StableFunction::gateaux(const ModuleElement& x, const ModuleElement& y) const {
  const int m = base_algebra().atom_count();
  auto vals = parallel_map_atoms(m, [&](int a) {
    return gateaux_atom(a, data_->layout.stack(x, a), data_->layout.stack(y, a));
  });
  return RandomVariable(base_algebra(), std::move(vals));
}

RandomVariable StableFunction::gateaux_quotient(const ModuleElement& x, const ModuleElement& y,
                                                double tol) const {
  RandomVariable fx = evaluate(x);
  if (!fx.is_finite()) throw std::domain_error("gateaux_quotient: x outside dom(f)");
  // Dyadic steps lambda_k = 2^-k; quotients are nonincreasing as lambda
  // shrinks. Stop when successive quotients agree within tol. The depth cap
  // keeps lambda above the level where f(x + lambda y) - f(x) would lose
  // its precision to cancellation.
  std::vector<XReal> prev;
  double lam = 1.0;
  for (int k = 0; k < 27; ++k) {
    RandomVariable fs = evaluate(x + lam * y);
    std::vector<XReal> q;
    q.reserve(static_cast<size_t>(fs.size()));
    for (int a = 0; a < fs.size(); ++a) q.push_back((1.0 / lam) * (fs[a] - fx[a]));
    if (!prev.empty()) {
      XReal worst = XReal::finite(0.0);
      for (size_t i = 0; i < q.size(); ++i)
        worst = max(worst, metric_abs_diff(q[i], prev[i]));
      if (worst.is_finite() && worst.value() < tol)
        return RandomVariable(base_algebra(), std::move(q));
    }
    prev = std::move(q);
    lam *= 0.5;
  }
  return RandomVariable(base_algebra(), std::move(prev));
}

DualFunctional StableFunction::gradient(const ModuleElement& x) const {
  if (!smooth()) throw std::domain_error("gradient: function is not smooth");
  const int m = base_algebra().atom_count();
  auto per_atom = parallel_map_atoms(
      m, [&](int a) { return gradient_atom(a, data_->layout.stack(x, a)); });
  return DualFunctional(data_->layout.assemble(per_atom));
}

ModuleElement StableFunction::prox(const ModuleElement& x) const {
  return prox(x, RandomVariable::constant(base_algebra(), 1.0));
}

ModuleElement StableFunction::prox(const ModuleElement& x, const RandomVariable& tau) const {
  if (x.base_algebra() != base_algebra() || x.dim() != dim())
    throw std::invalid_argument("prox: element does not match function module");
  if (tau.algebra() != base_algebra()) throw std::invalid_argument("prox: tau on wrong algebra");
  const int m = base_algebra().atom_count();
  auto per_atom = parallel_map_atoms(m, [&](int a) {
    return prox_atom(a, data_->layout.stack(x, a), tau[a].value());
  });
  return data_->layout.assemble(per_atom);
}

// -- free functions --------------------------------------------------------------

GateauxDerivative gateaux_derivative(const StableFunction& f, const ModuleElement& x) {
  return GateauxDerivative{x, f.gradient(x)};
}

bool subgradient_check(const StableFunction& f, const ModuleElement& x, const ModuleElement& y,
                       double tol) {
  RandomVariable fy = f.evaluate(y);
  RandomVariable fx = f.evaluate(x);
  RandomVariable d = f.gateaux(x, y - x);
  for (int a = 0; a < fx.size(); ++a) {
    const XReal lhs = fy[a] - fx[a];
    const XReal rhs = d[a];
    if (lhs.is_pos_inf()) continue;
    if (rhs.is_pos_inf()) return false;
    if (lhs.as_double() < rhs.as_double() - tol) return false;
  }
  return true;
}

StableFunction extend(const StableFunction& f, const StableConvexSet& G) {
  if (f.base_algebra() != G.base_algebra() || f.dim() != G.dim())
    throw std::invalid_argument("extend: function and set modules differ");
  if (!membership(G, ModuleElement::zero(G.base_algebra(), G.dim()), kMembershipTol).member)
    throw std::invalid_argument("extend: requires the null element in G");
  return StableFunction::sum({f, StableFunction::indicator(G)});
}

}  // namespace l0opt
