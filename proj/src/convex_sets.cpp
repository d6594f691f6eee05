#include "l0opt/convex_sets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "l0opt/linprog.hpp"
#include "l0opt/parallel.hpp"

namespace l0opt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kDykstraCap = 10000;
constexpr double kDykstraTol = 1e-9;

// ---------------------------------------------------------------------------
// Elementary projectors. Descriptors are flattened into a list of pieces
// with exact weighted projections, so Dykstra never nests an inexact solve.
// ---------------------------------------------------------------------------

struct Piece {
  enum class Kind { Box, Ball, Affine, Halfspace };
  Kind kind;
  // box
  Eigen::VectorXd lo, hi;
  // ball
  Eigen::VectorXd center;
  double radius = 0.0;
  // affine (cached weighted pseudo-solver), halfspace
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::RowVectorXd a_row;
  double b_row = 0.0;
};

void flatten(const AtomDescriptor& desc, std::vector<Piece>& out) {
  if (const auto* box = std::get_if<BoxDesc>(&desc)) {
    Piece p;
    p.kind = Piece::Kind::Box;
    p.lo = box->lo;
    p.hi = box->hi;
    out.push_back(std::move(p));
  } else if (const auto* ball = std::get_if<BallDesc>(&desc)) {
    Piece p;
    p.kind = Piece::Kind::Ball;
    p.center = ball->center;
    p.radius = ball->radius;
    out.push_back(std::move(p));
  } else if (const auto* aff = std::get_if<AffineDesc>(&desc)) {
    Piece p;
    p.kind = Piece::Kind::Affine;
    p.A = aff->A;
    p.b = aff->b;
    out.push_back(std::move(p));
  } else if (const auto* hs = std::get_if<HalfspacesDesc>(&desc)) {
    for (int i = 0; i < hs->A.rows(); ++i) {
      Piece p;
      p.kind = Piece::Kind::Halfspace;
      p.a_row = hs->A.row(i);
      p.b_row = hs->b[i];
      out.push_back(std::move(p));
    }
  } else {
    for (const auto& part : std::get<IntersectionDesc>(desc).parts) flatten(part, out);
  }
}

double piece_violation(const Piece& p, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  switch (p.kind) {
    case Piece::Kind::Box: {
      double v = 0.0;
      for (int i = 0; i < y.size(); ++i) {
        if (std::isfinite(p.lo[i])) v = std::max(v, p.lo[i] - y[i]);
        if (std::isfinite(p.hi[i])) v = std::max(v, y[i] - p.hi[i]);
      }
      return v;
    }
    case Piece::Kind::Ball: {
      const Eigen::VectorXd delta = y - p.center;
      return std::max(0.0, std::sqrt((w.array() * delta.array().square()).sum()) - p.radius);
    }
    case Piece::Kind::Affine:
      return p.A.rows() == 0 ? 0.0 : (p.A * y - p.b).cwiseAbs().maxCoeff();
    case Piece::Kind::Halfspace:
      return std::max(0.0, p.a_row.dot(y) - p.b_row);
  }
  return 0.0;
}

Eigen::VectorXd piece_project(const Piece& p, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w) {
  switch (p.kind) {
    case Piece::Kind::Box:
      return y.cwiseMax(p.lo).cwiseMin(p.hi);
    case Piece::Kind::Ball: {
      const Eigen::VectorXd delta = y - p.center;
      const double nw = std::sqrt((w.array() * delta.array().square()).sum());
      if (nw <= p.radius) return y;
      return p.center + (p.radius / nw) * delta;
    }
    case Piece::Kind::Affine: {
      if (p.A.rows() == 0) return y;
      // argmin ||u - y||_W s.t. A u = b  =>  u = y - W^-1 A' (A W^-1 A')^+ (A y - b)
      const Eigen::MatrixXd AWinv = p.A * w.cwiseInverse().asDiagonal();
      const Eigen::MatrixXd S = AWinv * p.A.transpose();
      const Eigen::VectorXd mult =
          S.completeOrthogonalDecomposition().solve(p.A * y - p.b);
      return y - AWinv.transpose() * mult;
    }
    case Piece::Kind::Halfspace: {
      const double viol = p.a_row.dot(y) - p.b_row;
      if (viol <= 0.0) return y;
      const Eigen::VectorXd winv_a =
          p.a_row.transpose().cwiseQuotient(w);  // W^-1 a
      const double denom = p.a_row.dot(winv_a);
      if (denom <= 0.0) return y;  // zero row
      return y - (viol / denom) * winv_a;
    }
  }
  return y;
}

/// Dykstra's alternating projection scheme on the flattened piece list.
/// The stop requires every within-sweep step to be stationary (the iterate
/// can return to the same point at the end of a sweep while the correction
/// terms are still in motion) plus feasibility.
Eigen::VectorXd dykstra_project(const std::vector<Piece>& pieces, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& w, int atom) {
  const size_t m = pieces.size();
  Eigen::VectorXd y = x;
  std::vector<Eigen::VectorXd> corrections(m, Eigen::VectorXd::Zero(x.size()));
  for (int sweep = 0; sweep < kDykstraCap; ++sweep) {
    double sweep_motion = 0.0;
    for (size_t i = 0; i < m; ++i) {
      const Eigen::VectorXd z = y + corrections[i];
      Eigen::VectorXd next = piece_project(pieces[i], z, w);
      sweep_motion = std::max(
          sweep_motion, std::sqrt((w.array() * (next - y).array().square()).sum()));
      corrections[i] = z - next;
      y = std::move(next);
    }
    double viol = 0.0;
    for (const auto& p : pieces) viol = std::max(viol, piece_violation(p, y, w));
    if (sweep_motion <= kDykstraTol && viol <= kDykstraTol) return y;
  }
  throw std::runtime_error("project: Dykstra did not converge within " +
                           std::to_string(kDykstraCap) + " sweeps on atom " +
                           std::to_string(atom));
}

bool has_ball(const AtomDescriptor& desc) {
  if (std::holds_alternative<BallDesc>(desc)) return true;
  if (const auto* inter = std::get_if<IntersectionDesc>(&desc)) {
    for (const auto& part : inter->parts)
      if (has_ball(part)) return true;
  }
  return false;
}

/// Gathers all polyhedral rows of a descriptor (boxes become bounds).
struct PolyRows {
  std::vector<Eigen::RowVectorXd> in_rows;
  std::vector<double> in_rhs;
  std::vector<Eigen::RowVectorXd> eq_rows;
  std::vector<double> eq_rhs;
  Eigen::VectorXd lo, hi;
};

void gather_poly(const AtomDescriptor& desc, PolyRows& rows) {
  if (const auto* box = std::get_if<BoxDesc>(&desc)) {
    rows.lo = rows.lo.cwiseMax(box->lo);
    rows.hi = rows.hi.cwiseMin(box->hi);
  } else if (const auto* aff = std::get_if<AffineDesc>(&desc)) {
    for (int i = 0; i < aff->A.rows(); ++i) {
      rows.eq_rows.push_back(aff->A.row(i));
      rows.eq_rhs.push_back(aff->b[i]);
    }
  } else if (const auto* hs = std::get_if<HalfspacesDesc>(&desc)) {
    for (int i = 0; i < hs->A.rows(); ++i) {
      rows.in_rows.push_back(hs->A.row(i));
      rows.in_rhs.push_back(hs->b[i]);
    }
  } else if (const auto* inter = std::get_if<IntersectionDesc>(&desc)) {
    for (const auto& part : inter->parts) gather_poly(part, rows);
  } else {
    throw std::logic_error("gather_poly: ball in polyhedral path");
  }
}

struct SupResult {
  bool bounded = false;
  double value = 0.0;
  Eigen::VectorXd argmax;
};

/// sup of c'y over a purely polyhedral descriptor, exact via simplex.
SupResult poly_support(const AtomDescriptor& desc, const Eigen::VectorXd& c, int n) {
  PolyRows rows;
  rows.lo = Eigen::VectorXd::Constant(n, -kInf);
  rows.hi = Eigen::VectorXd::Constant(n, kInf);
  gather_poly(desc, rows);
  Eigen::MatrixXd A_in(static_cast<int>(rows.in_rows.size()), n);
  Eigen::VectorXd b_in(static_cast<int>(rows.in_rows.size()));
  for (size_t i = 0; i < rows.in_rows.size(); ++i) {
    A_in.row(static_cast<int>(i)) = rows.in_rows[i];
    b_in[static_cast<int>(i)] = rows.in_rhs[i];
  }
  Eigen::MatrixXd A_eq(static_cast<int>(rows.eq_rows.size()), n);
  Eigen::VectorXd b_eq(static_cast<int>(rows.eq_rows.size()));
  for (size_t i = 0; i < rows.eq_rows.size(); ++i) {
    A_eq.row(static_cast<int>(i)) = rows.eq_rows[i];
    b_eq[static_cast<int>(i)] = rows.eq_rhs[i];
  }
  const LpResult lp = linprog_max(c, A_in, b_in, A_eq, b_eq, rows.lo, rows.hi);
  if (lp.status == LpResult::Status::Infeasible)
    throw std::runtime_error("support: descriptor unexpectedly infeasible");
  SupResult s;
  if (lp.status == LpResult::Status::Optimal) {
    s.bounded = true;
    s.value = lp.value;
    s.argmax = lp.point;
  }
  return s;
}

/// sup of c'y over one descriptor. Exact closed forms for boxes and balls,
/// simplex for polyhedra; intersections containing a ball are compact and
/// handled by averaged projected ascent with the Dykstra projector.
SupResult atom_support(const AtomDescriptor& desc, const Eigen::VectorXd& c,
                       const Eigen::VectorXd& w, const Eigen::VectorXd& feasible, int atom) {
  const int n = static_cast<int>(c.size());
  if (const auto* box = std::get_if<BoxDesc>(&desc)) {
    SupResult s;
    s.argmax = feasible;
    s.value = 0.0;
    for (int i = 0; i < n; ++i) {
      if (c[i] > 0.0) {
        if (!std::isfinite(box->hi[i])) return s;  // unbounded above
        s.argmax[i] = box->hi[i];
      } else if (c[i] < 0.0) {
        if (!std::isfinite(box->lo[i])) return s;
        s.argmax[i] = box->lo[i];
      }
    }
    s.bounded = true;
    s.value = c.dot(s.argmax);
    return s;
  }
  if (const auto* ball = std::get_if<BallDesc>(&desc)) {
    SupResult s;
    s.bounded = true;
    const Eigen::VectorXd winv_c = c.cwiseQuotient(w);
    const double dual = std::sqrt(c.dot(winv_c));
    if (dual <= 0.0) {
      s.argmax = ball->center;
    } else {
      s.argmax = ball->center + (ball->radius / dual) * winv_c;
    }
    s.value = c.dot(s.argmax);
    return s;
  }
  if (!has_ball(desc)) return poly_support(desc, c, n);

  // Compact mixed intersection: averaged projected ascent.
  std::vector<Piece> pieces;
  flatten(desc, pieces);
  Eigen::VectorXd y = feasible;
  const Eigen::VectorXd ascent = c.cwiseQuotient(w);
  const double anorm = std::sqrt((w.array() * ascent.array().square()).sum());
  const double tau = anorm > 0.0 ? (1.0 + std::sqrt((w.array() * y.array().square()).sum())) /
                                       anorm
                                 : 0.0;
  SupResult s;
  if (tau == 0.0) {
    s.bounded = true;
    s.value = 0.0;
    s.argmax = y;
    return s;
  }
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd target = y + tau * ascent;
    Eigen::VectorXd proj = pieces.size() == 1 ? piece_project(pieces[0], target, w)
                                              : dykstra_project(pieces, target, w, atom);
    Eigen::VectorXd next = 0.5 * (y + proj);
    const double step = std::sqrt((w.array() * (next - y).array().square()).sum());
    y = std::move(next);
    if (step <= 1e-11 * (1.0 + y.norm())) break;
  }
  s.bounded = true;
  s.argmax = pieces.size() == 1 ? piece_project(pieces[0], y, w)
                                : dykstra_project(pieces, y, w, atom);
  s.value = c.dot(s.argmax);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// StableConvexSet
// ---------------------------------------------------------------------------

namespace {

void validate_descriptor(const AtomDescriptor& desc, int n) {
  if (const auto* box = std::get_if<BoxDesc>(&desc)) {
    if (box->lo.size() != n || box->hi.size() != n)
      throw std::invalid_argument("box descriptor: bound size mismatch");
    for (int i = 0; i < n; ++i) {
      if (std::isnan(box->lo[i]) || std::isnan(box->hi[i]) || box->lo[i] > box->hi[i])
        throw std::invalid_argument("box descriptor: requires lo <= hi");
      if (box->lo[i] == kInf || box->hi[i] == -kInf)
        throw std::invalid_argument("box descriptor: empty coordinate range");
    }
  } else if (const auto* ball = std::get_if<BallDesc>(&desc)) {
    if (ball->center.size() != n) throw std::invalid_argument("ball descriptor: center size");
    if (!(ball->radius >= 0.0) || !std::isfinite(ball->radius))
      throw std::invalid_argument("ball descriptor: radius must be finite and >= 0");
  } else if (const auto* aff = std::get_if<AffineDesc>(&desc)) {
    if (aff->A.cols() != n || aff->A.rows() != aff->b.size())
      throw std::invalid_argument("affine descriptor: shape mismatch");
  } else if (const auto* hs = std::get_if<HalfspacesDesc>(&desc)) {
    if (hs->A.cols() != n || hs->A.rows() != hs->b.size())
      throw std::invalid_argument("halfspace descriptor: shape mismatch");
  } else {
    const auto& inter = std::get<IntersectionDesc>(desc);
    if (inter.parts.empty()) throw std::invalid_argument("intersection descriptor: empty");
    for (const auto& part : inter.parts) validate_descriptor(part, n);
  }
}

bool atom_member_impl(const AtomDescriptor& desc, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w, double tol, double* worst) {
  std::vector<Piece> pieces;
  flatten(desc, pieces);
  double v = 0.0;
  for (const auto& p : pieces) v = std::max(v, piece_violation(p, y, w));
  if (worst) *worst = v;
  return v <= tol;
}

/// Finds a feasibility witness for one atom or throws.
Eigen::VectorXd find_witness(const AtomDescriptor& desc, const Eigen::VectorXd& w, int atom) {
  const int n = static_cast<int>(w.size());
  if (const auto* box = std::get_if<BoxDesc>(&desc)) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      if (std::isfinite(box->lo[i])) v = std::max(v, box->lo[i]);
      if (std::isfinite(box->hi[i])) v = std::min(v, box->hi[i]);
      y[i] = v;
    }
    return y;
  }
  if (const auto* ball = std::get_if<BallDesc>(&desc)) return ball->center;
  if (const auto* aff = std::get_if<AffineDesc>(&desc)) {
    if (aff->A.rows() == 0) return Eigen::VectorXd::Zero(n);
    Piece p;
    p.kind = Piece::Kind::Affine;
    p.A = aff->A;
    p.b = aff->b;
    const Eigen::VectorXd y = piece_project(p, Eigen::VectorXd::Zero(n), w);
    if ((aff->A * y - aff->b).cwiseAbs().maxCoeff() >
        1e-8 * (1.0 + aff->b.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("affine descriptor: inconsistent equations (empty atom " +
                                  std::to_string(atom) + ")");
    return y;
  }
  // Halfspace lists and intersections: cyclic projections from the origin,
  // then verify. A caller-supplied witness avoids this path.
  std::vector<Piece> pieces;
  flatten(desc, pieces);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  for (int sweep = 0; sweep < 5000; ++sweep) {
    double viol = 0.0;
    for (const auto& p : pieces) viol = std::max(viol, piece_violation(p, y, w));
    if (viol <= 1e-10) return y;
    for (const auto& p : pieces) y = piece_project(p, y, w);
  }
  double viol = 0.0;
  for (const auto& p : pieces) viol = std::max(viol, piece_violation(p, y, w));
  if (viol <= 1e-8) return y;
  throw std::invalid_argument(
      "descriptor: could not witness nonemptiness on atom " + std::to_string(atom) +
      "; supply a feasible point");
}

}  // namespace

StableConvexSet::StableConvexSet(SigmaAlgebra base_algebra, int d,
                                 std::vector<AtomDescriptor> per_atom,
                                 std::optional<ModuleElement> feasible)
    : layout_(base_algebra, d),
      per_atom_(std::move(per_atom)),
      feasible_(ModuleElement::zero(base_algebra, d)) {
  if (static_cast<int>(per_atom_.size()) != base_algebra.atom_count())
    throw std::invalid_argument("StableConvexSet: one descriptor per atom required");
  for (int a = 0; a < base_algebra.atom_count(); ++a)
    validate_descriptor(per_atom_[static_cast<size_t>(a)], layout_.stacked_dim(a));

  Eigen::MatrixXd data(base_algebra.space().size(), d);
  if (feasible) {
    if (feasible->base_algebra() != base_algebra || feasible->dim() != d)
      throw std::invalid_argument("StableConvexSet: feasible point shape mismatch");
    for (int a = 0; a < base_algebra.atom_count(); ++a) {
      const Eigen::VectorXd y = layout_.stack(*feasible, a);
      double worst = 0.0;
      if (!atom_member_impl(per_atom_[static_cast<size_t>(a)], y, layout_.weights(a), 1e-7,
                            &worst))
        throw std::invalid_argument("StableConvexSet: supplied point infeasible on atom " +
                                    std::to_string(a));
    }
    feasible_ = *feasible;
  } else {
    for (int a = 0; a < base_algebra.atom_count(); ++a) {
      const Eigen::VectorXd y =
          find_witness(per_atom_[static_cast<size_t>(a)], layout_.weights(a), a);
      layout_.unstack(y, a, data);
    }
    feasible_ = ModuleElement(base_algebra, std::move(data));
  }
}

StableConvexSet StableConvexSet::whole_space(const SigmaAlgebra& base_algebra, int d) {
  AtomLayout layout(base_algebra, d);
  std::vector<AtomDescriptor> descs;
  for (int a = 0; a < base_algebra.atom_count(); ++a) {
    BoxDesc box;
    box.lo = Eigen::VectorXd::Constant(layout.stacked_dim(a), -kInf);
    box.hi = Eigen::VectorXd::Constant(layout.stacked_dim(a), kInf);
    descs.push_back(std::move(box));
  }
  return StableConvexSet(base_algebra, d, std::move(descs));
}

StableConvexSet StableConvexSet::box(const SigmaAlgebra& base_algebra, const Eigen::MatrixXd& lo,
                                     const Eigen::MatrixXd& hi) {
  if (lo.rows() != base_algebra.space().size() || lo.rows() != hi.rows() ||
      lo.cols() != hi.cols())
    throw std::invalid_argument("StableConvexSet::box: bounds must be scenario x dim");
  const int d = static_cast<int>(lo.cols());
  AtomLayout layout(base_algebra, d);
  std::vector<AtomDescriptor> descs;
  for (int a = 0; a < base_algebra.atom_count(); ++a) {
    const auto& block = base_algebra.atom(a);
    BoxDesc box;
    box.lo.resize(layout.stacked_dim(a));
    box.hi.resize(layout.stacked_dim(a));
    for (size_t i = 0; i < block.size(); ++i) {
      for (int j = 0; j < d; ++j) {
        box.lo[static_cast<int>(i) * d + j] = lo(block[i], j);
        box.hi[static_cast<int>(i) * d + j] = hi(block[i], j);
      }
    }
    descs.push_back(std::move(box));
  }
  return StableConvexSet(base_algebra, d, std::move(descs));
}

StableConvexSet StableConvexSet::ball(const ModuleElement& center, const RandomVariable& radius) {
  const SigmaAlgebra& alg = center.base_algebra();
  if (radius.algebra() != alg)
    throw std::invalid_argument("StableConvexSet::ball: mismatched algebras");
  AtomLayout layout(alg, center.dim());
  std::vector<AtomDescriptor> descs;
  for (int a = 0; a < alg.atom_count(); ++a) {
    BallDesc ball;
    ball.center = layout.stack(center, a);
    ball.radius = radius[a].value();
    descs.push_back(std::move(ball));
  }
  return StableConvexSet(alg, center.dim(), std::move(descs), center);
}

namespace {

AtomDescriptor translate_descriptor(const AtomDescriptor& desc, const Eigen::VectorXd& shift) {
  if (const auto* box = std::get_if<BoxDesc>(&desc)) {
    BoxDesc out;
    out.lo = box->lo - shift;
    out.hi = box->hi - shift;
    return out;
  }
  if (const auto* ball = std::get_if<BallDesc>(&desc)) {
    BallDesc out;
    out.center = ball->center - shift;
    out.radius = ball->radius;
    return out;
  }
  if (const auto* aff = std::get_if<AffineDesc>(&desc)) {
    AffineDesc out;
    out.A = aff->A;
    out.b = aff->b - aff->A * shift;
    return out;
  }
  if (const auto* hs = std::get_if<HalfspacesDesc>(&desc)) {
    HalfspacesDesc out;
    out.A = hs->A;
    out.b = hs->b - hs->A * shift;
    return out;
  }
  IntersectionDesc out;
  for (const auto& part : std::get<IntersectionDesc>(desc).parts)
    out.parts.push_back(translate_descriptor(part, shift));
  return out;
}

}  // namespace

StableConvexSet StableConvexSet::translated(const ModuleElement& shift) const {
  std::vector<AtomDescriptor> descs;
  for (int a = 0; a < base_algebra().atom_count(); ++a)
    descs.push_back(
        translate_descriptor(per_atom_[static_cast<size_t>(a)], layout_.stack(shift, a)));
  return StableConvexSet(base_algebra(), dim(), std::move(descs), feasible_ - shift);
}

RandomInterval::RandomInterval(RandomVariable lo, RandomVariable hi)
    : a(std::move(lo)), b(std::move(hi)) {
  if (a.algebra() != b.algebra())
    throw std::invalid_argument("RandomInterval: mismatched algebras");
  for (int i = 0; i < a.size(); ++i)
    if (!(a[i] <= b[i])) throw std::invalid_argument("RandomInterval: requires a <= b per atom");
}

// ---------------------------------------------------------------------------
// Membership / essential membership / projection
// ---------------------------------------------------------------------------

bool atom_membership(const StableConvexSet& G, int atom, const Eigen::VectorXd& y, double tol) {
  return atom_member_impl(G.descriptor(atom), y, G.layout().weights(atom), tol, nullptr);
}

MembershipReport membership(const StableConvexSet& G, const ModuleElement& x, double tol) {
  if (x.base_algebra() != G.base_algebra() || x.dim() != G.dim())
    throw std::invalid_argument("membership: element does not match set");
  MembershipReport report;
  for (int a = 0; a < G.base_algebra().atom_count(); ++a) {
    double worst = 0.0;
    if (!atom_member_impl(G.descriptor(a), G.layout().stack(x, a), G.layout().weights(a), tol,
                          &worst)) {
      report.member = false;
      report.violating_atoms.push_back(a);
      report.violations.push_back(worst);
    }
  }
  return report;
}

IndicatorSet essential_membership(const StableConvexSet& G, const ModuleElement& x, double tol) {
  const MembershipReport zero =
      membership(G, ModuleElement::zero(G.base_algebra(), G.dim()), tol);
  if (!zero.member)
    throw std::invalid_argument("essential_membership: requires the null element in G");
  std::vector<int> atoms;
  for (int a = 0; a < G.base_algebra().atom_count(); ++a)
    if (atom_membership(G, a, G.layout().stack(x, a), tol)) atoms.push_back(a);
  return IndicatorSet(G.base_algebra(), std::move(atoms));
}

Eigen::VectorXd project_atom(const StableConvexSet& G, int atom, const Eigen::VectorXd& y) {
  std::vector<Piece> pieces;
  flatten(G.descriptor(atom), pieces);
  const Eigen::VectorXd& w = G.layout().weights(atom);
  if (pieces.size() == 1) return piece_project(pieces[0], y, w);
  return dykstra_project(pieces, y, w, atom);
}

ModuleElement project(const StableConvexSet& G, const ModuleElement& x) {
  if (x.base_algebra() != G.base_algebra() || x.dim() != G.dim())
    throw std::invalid_argument("project: element does not match set");
  const int m = G.base_algebra().atom_count();
  auto per_atom = parallel_map_atoms(m, [&](int a) {
    return project_atom(G, a, G.layout().stack(x, a));
  });
  return G.layout().assemble(per_atom);
}

// ---------------------------------------------------------------------------
// Compactness certificates
// ---------------------------------------------------------------------------

CompactnessCertificate certify_order_bounded(const StableConvexSet& G) {
  const SigmaAlgebra& alg = G.base_algebra();
  std::vector<XReal> bounds;
  bounds.reserve(static_cast<size_t>(alg.atom_count()));
  int watom = -1, wcoord = -1, wsign = 0;
  for (int a = 0; a < alg.atom_count(); ++a) {
    const int n = G.layout().stacked_dim(a);
    const AtomDescriptor& desc = G.descriptor(a);
    const Eigen::VectorXd feas = G.layout().stack(G.feasible_point(), a);
    double bound = 0.0;
    bool finite = true;
    const bool mixed = has_ball(desc) && std::holds_alternative<IntersectionDesc>(desc);
    for (int i = 0; i < n && finite; ++i) {
      for (int sign = -1; sign <= 1; sign += 2) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        c[i] = sign;
        SupResult s;
        if (mixed) {
          // An intersection containing a ball is order-bounded; bound each
          // coordinate by the tightest single component.
          s.bounded = true;
          s.value = kInf;
          std::vector<const AtomDescriptor*> stack_parts{&desc};
          while (!stack_parts.empty()) {
            const AtomDescriptor* cur = stack_parts.back();
            stack_parts.pop_back();
            if (const auto* inner = std::get_if<IntersectionDesc>(cur)) {
              for (const auto& part : inner->parts) stack_parts.push_back(&part);
              continue;
            }
            const SupResult ps = atom_support(*cur, c, G.layout().weights(a), feas, a);
            if (ps.bounded) s.value = std::min(s.value, ps.value);
          }
        } else {
          s = atom_support(desc, c, G.layout().weights(a), feas, a);
        }
        if (!s.bounded || !std::isfinite(s.value)) {
          finite = false;
          if (watom < 0) {
            watom = a;
            wcoord = i;
            wsign = sign;
          }
          break;
        }
        bound = std::max(bound, std::abs(s.value));
      }
    }
    bounds.push_back(finite ? XReal::finite(bound) : XReal::pos_inf());
  }
  CompactnessCertificate cert(watom < 0, RandomVariable(alg, std::move(bounds)));
  cert.witness_atom = watom;
  cert.witness_coordinate = wcoord;
  cert.witness_sign = wsign;
  return cert;
}

CompactnessCertificate certify_order_bounded(const RandomInterval& I) {
  const SigmaAlgebra& alg = I.a.algebra();
  std::vector<XReal> bounds;
  int watom = -1, wsign = 0;
  for (int atom = 0; atom < alg.atom_count(); ++atom) {
    const bool lo_ok = I.a[atom].is_finite();
    const bool hi_ok = I.b[atom].is_finite();
    if (lo_ok && hi_ok) {
      bounds.push_back(
          XReal::finite(std::max(std::abs(I.a[atom].value()), std::abs(I.b[atom].value()))));
    } else {
      bounds.push_back(XReal::pos_inf());
      if (watom < 0) {
        watom = atom;
        wsign = hi_ok ? -1 : +1;
      }
    }
  }
  CompactnessCertificate cert(watom < 0, RandomVariable(alg, std::move(bounds)));
  cert.witness_atom = watom;
  cert.witness_sign = wsign;
  return cert;
}

JamesCertificate james_certify(const StableConvexSet& G,
                               const std::vector<DualFunctional>& duals) {
  const SigmaAlgebra& alg = G.base_algebra();
  JamesCertificate cert;
  cert.compact_evidence = true;
  for (const auto& f : duals) {
    if (f.representer().base_algebra() != alg || f.representer().dim() != G.dim())
      throw std::invalid_argument("james_certify: dual does not match set");
    JamesPerDual pd;
    pd.attained = true;
    std::vector<Eigen::VectorXd> argmax(static_cast<size_t>(alg.atom_count()));
    std::vector<XReal> optima;
    for (int a = 0; a < alg.atom_count() && pd.attained; ++a) {
      // The pairing on an atom is (W f)' y in stacked coordinates.
      const Eigen::VectorXd frep = G.layout().stack(f.representer(), a);
      const Eigen::VectorXd c = frep.cwiseProduct(G.layout().weights(a));
      const Eigen::VectorXd feas = G.layout().stack(G.feasible_point(), a);
      const SupResult s = atom_support(G.descriptor(a), c, G.layout().weights(a), feas, a);
      if (!s.bounded) {
        pd.attained = false;
        pd.witness_atom = a;
        break;
      }
      argmax[static_cast<size_t>(a)] = s.argmax;
      optima.push_back(XReal::finite(s.value));
    }
    if (pd.attained) {
      pd.argmax = G.layout().assemble(argmax);
      pd.optimum = RandomVariable(alg, std::move(optima));
    } else {
      cert.compact_evidence = false;
    }
    cert.per_dual.push_back(std::move(pd));
  }
  return cert;
}

JamesCertificate james_certify(const RandomInterval& I, const std::vector<RandomVariable>& duals) {
  const SigmaAlgebra& alg = I.a.algebra();
  JamesCertificate cert;
  cert.compact_evidence = true;
  for (const auto& eta : duals) {
    if (eta.algebra() != alg) throw std::invalid_argument("james_certify: mismatched algebras");
    JamesPerDual pd;
    pd.attained = true;
    std::vector<Eigen::VectorXd> argmax(static_cast<size_t>(alg.atom_count()));
    std::vector<XReal> optima;
    for (int a = 0; a < alg.atom_count() && pd.attained; ++a) {
      const double e = eta[a].value();
      XReal g;  // attaining endpoint
      if (e > 0.0) {
        g = I.b[a];
      } else if (e < 0.0) {
        g = I.a[a];
      } else {
        // Any point attains; pick a finite one.
        if (I.a[a].is_finite() && I.b[a].is_finite())
          g = XReal::finite(std::clamp(0.0, I.a[a].value(), I.b[a].value()));
        else if (I.a[a].is_finite())
          g = XReal::finite(std::max(0.0, I.a[a].value()));
        else if (I.b[a].is_finite())
          g = XReal::finite(std::min(0.0, I.b[a].value()));
        else
          g = XReal::finite(0.0);
      }
      if (!g.is_finite()) {
        pd.attained = false;
        pd.witness_atom = a;
        break;
      }
      argmax[static_cast<size_t>(a)] = Eigen::VectorXd::Constant(1, g.value());
      optima.push_back(XReal::finite(e * g.value()));
    }
    if (pd.attained) {
      pd.argmax = broadcast(alg, argmax);
      pd.optimum = RandomVariable(alg, std::move(optima));
    } else {
      cert.compact_evidence = false;
    }
    cert.per_dual.push_back(std::move(pd));
  }
  return cert;
}

std::vector<DualFunctional> default_james_duals(const SigmaAlgebra& base_algebra, int d,
                                                int count, std::uint64_t seed) {
  std::vector<DualFunctional> duals;
  for (int j = 0; j < d && static_cast<int>(duals.size()) < count; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[j] = 1.0;
    duals.emplace_back(ModuleElement::constant(base_algebra, e));
  }
  Rng rng(seed);
  while (static_cast<int>(duals.size()) < count) {
    Eigen::MatrixXd data(base_algebra.space().size(), d);
    for (int s = 0; s < data.rows(); ++s)
      for (int j = 0; j < d; ++j) data(s, j) = rng.normal();
    duals.emplace_back(ModuleElement(base_algebra, std::move(data)));
  }
  return duals;
}

// ---------------------------------------------------------------------------
// Forward L0-convex combinations (randomized Bolzano-Weierstrass)
// ---------------------------------------------------------------------------

ForwardCombinationResult extract_forward_combinations(const std::vector<ModuleElement>& xs,
                                                      const RandomVariable& bound, int depth) {
  if (xs.empty()) throw std::invalid_argument("extract_forward_combinations: empty sequence");
  if (depth < 1) throw std::invalid_argument("extract_forward_combinations: depth must be >= 1");
  const SigmaAlgebra& alg = xs.front().base_algebra();
  const int d = xs.front().dim();
  const int n_scen = alg.space().size();
  const int N = static_cast<int>(xs.size());
  if (bound.algebra() != alg)
    throw std::invalid_argument("extract_forward_combinations: mismatched algebras");
  for (const auto& x : xs) {
    if (x.base_algebra() != alg || x.dim() != d)
      throw std::invalid_argument("extract_forward_combinations: mixed modules");
    const RandomVariable cn = cond_norm(x, kInf);
    for (int a = 0; a < alg.atom_count(); ++a)
      if (!(cn[a].value() <= bound[a].value() + 1e-12))
        throw std::invalid_argument(
            "extract_forward_combinations: bound violated on atom " + std::to_string(a));
  }
  if (N <= depth)
    throw std::invalid_argument("extract_forward_combinations: sequence shorter than depth");

  Eigen::MatrixXi indices(depth, n_scen);

  for (int s = 0; s < n_scen; ++s) {
    const double B = bound[alg.atom_of(s)].value();
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, -B);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(d, B);
    std::vector<int> avail(static_cast<size_t>(N));
    for (int j = 0; j < N; ++j) avail[static_cast<size_t>(j)] = j;

    int n_prev = -1;
    for (int k = 0; k < depth; ++k) {
      const int min_index = std::max(n_prev + 1, k + 1);
      int pick = -1;
      for (int j : avail) {
        if (j >= min_index) {
          pick = j;
          break;
        }
      }
      if (pick < 0)
        throw std::invalid_argument(
            "extract_forward_combinations: sequence shorter than requested depth (scenario " +
            std::to_string(s) + ", step " + std::to_string(k) + ")");
      indices(k, s) = pick;
      n_prev = pick;

      // Refine the cell once per coordinate. A half-cell may only be kept
      // when it can still supply the remaining picks (the finite-sample
      // proxy for "contains infinitely many indices"); when both qualify
      // the lower half wins, and when neither does the cell stays as it
      // is and the picks continue inside it.
      const int remaining = depth - 1 - k;
      if (remaining == 0) break;
      for (int c = 0; c < d; ++c) {
        const double mid = 0.5 * (lo[c] + hi[c]);
        std::vector<int> below, above;
        int below_future = 0, above_future = 0;
        for (int j : avail) {
          const double v = xs[static_cast<size_t>(j)].data()(s, c);
          if (v <= mid) {
            below.push_back(j);
            if (j > n_prev) ++below_future;
          } else {
            above.push_back(j);
            if (j > n_prev) ++above_future;
          }
        }
        if (below_future >= remaining) {
          hi[c] = mid;
          avail = std::move(below);
        } else if (above_future >= remaining) {
          lo[c] = mid;
          avail = std::move(above);
        }
      }
    }
  }

  std::vector<ModuleElement> ys;
  ys.reserve(static_cast<size_t>(depth));
  for (int k = 0; k < depth; ++k) {
    Eigen::MatrixXd data(n_scen, d);
    for (int s = 0; s < n_scen; ++s)
      data.row(s) = xs[static_cast<size_t>(indices(k, s))].data().row(s);
    ys.emplace_back(alg, std::move(data));
  }
  std::vector<double> gauges;
  gauges.reserve(static_cast<size_t>(depth) - 1);
  for (int k = 0; k + 1 < depth; ++k)
    gauges.push_back(global_norm(ys[static_cast<size_t>(k + 1)] - ys[static_cast<size_t>(k)],
                                 kInf, kInf));
  // Achieved gauge: diameter of the last few extracted elements.
  double diam = 0.0;
  const int tail = std::min(3, depth);
  for (int i = depth - tail; i < depth; ++i)
    for (int j = i + 1; j < depth; ++j)
      diam = std::max(diam, global_norm(ys[static_cast<size_t>(i)] - ys[static_cast<size_t>(j)],
                                        kInf, kInf));
  ModuleElement limit = ys.back();
  return ForwardCombinationResult{std::move(ys), std::move(indices), std::move(limit), diam,
                                  std::move(gauges)};
}

}  // namespace l0opt
