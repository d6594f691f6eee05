#include "l0opt/linprog.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace l0opt {

namespace {

constexpr double kEps = 1e-10;

/// Standard-form core: minimize c'x s.t. Ax = b, x >= 0, with b >= 0 and a
/// starting basis whose columns form the identity on their rows.
struct Core {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<int> basis;

  enum class Outcome { Optimal, Unbounded };

  // Reduced costs are computed from scratch each pivot; fine at this scale.
  Outcome run(int& entering_out) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    Eigen::VectorXd x_b = b;
    for (;;) {
      // Basis inverse action via LU on basic columns.
      Eigen::MatrixXd B(m, m);
      for (int i = 0; i < m; ++i) B.col(i) = A.col(basis[static_cast<size_t>(i)]);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      x_b = lu.solve(b);
      Eigen::VectorXd cb(m);
      for (int i = 0; i < m; ++i) cb[i] = c[basis[static_cast<size_t>(i)]];
      const Eigen::VectorXd y = lu.transpose().solve(cb);

      // Bland: entering = smallest index with negative reduced cost.
      int entering = -1;
      for (int j = 0; j < n; ++j) {
        bool basic = false;
        for (int i = 0; i < m; ++i)
          if (basis[static_cast<size_t>(i)] == j) {
            basic = true;
            break;
          }
        if (basic) continue;
        const double rc = c[j] - y.dot(A.col(j));
        if (rc < -kEps) {
          entering = j;
          break;
        }
      }
      if (entering < 0) return Outcome::Optimal;

      const Eigen::VectorXd dir = lu.solve(A.col(entering));
      int leaving = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (dir[i] > kEps) {
          const double ratio = x_b[i] / dir[i];
          if (ratio < best_ratio - kEps ||
              (ratio < best_ratio + kEps &&
               (leaving < 0 || basis[static_cast<size_t>(i)] < basis[static_cast<size_t>(leaving)]))) {
            best_ratio = ratio;
            leaving = i;
          }
        }
      }
      if (leaving < 0) {
        entering_out = entering;
        return Outcome::Unbounded;
      }
      basis[static_cast<size_t>(leaving)] = entering;
    }
  }

  Eigen::VectorXd solution() const {
    const int m = static_cast<int>(A.rows());
    Eigen::MatrixXd B(m, m);
    for (int i = 0; i < m; ++i) B.col(i) = A.col(basis[static_cast<size_t>(i)]);
    const Eigen::VectorXd x_b = B.partialPivLu().solve(b);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(A.cols());
    for (int i = 0; i < m; ++i) x[basis[static_cast<size_t>(i)]] = std::max(0.0, x_b[i]);
    return x;
  }
};

}  // namespace

LpResult linprog_max(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_in,
                     const Eigen::VectorXd& b_in, const Eigen::MatrixXd& A_eq,
                     const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi) {
  const int ny = static_cast<int>(c.size());

  // Variable transform to x >= 0. For each y_j record an affine map
  // y_j = shift_j + sgn_j * x_{col_j} (- x_{col_j + 1} for free variables).
  struct VarMap {
    double shift;
    double sgn;     // +1 or -1
    int col;        // first standard-form column
    bool split;     // free variable: y = shift + x_col - x_{col+1}
  };
  std::vector<VarMap> vmap(static_cast<size_t>(ny));
  int ncols = 0;
  std::vector<std::pair<int, double>> upper_rows;  // (y index, range) for boxed vars
  for (int j = 0; j < ny; ++j) {
    const double l = lo[j], h = hi[j];
    if (l > h) return {};  // infeasible box
    if (std::isfinite(l)) {
      vmap[static_cast<size_t>(j)] = {l, 1.0, ncols, false};
      ncols += 1;
      if (std::isfinite(h)) upper_rows.emplace_back(j, h - l);
    } else if (std::isfinite(h)) {
      vmap[static_cast<size_t>(j)] = {h, -1.0, ncols, false};
      ncols += 1;
    } else {
      vmap[static_cast<size_t>(j)] = {0.0, 1.0, ncols, true};
      ncols += 2;
    }
  }

  const int m_in = static_cast<int>(A_in.rows());
  const int m_eq = static_cast<int>(A_eq.rows());
  const int m_up = static_cast<int>(upper_rows.size());
  const int m = m_in + m_up + m_eq;
  const int slack0 = ncols;
  const int nslack = m_in + m_up;
  const int ntot = ncols + nslack;

  // Rows in y-space -> standard columns, constants folded into rhs.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, ntot);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  auto emit_row = [&](int row, const Eigen::RowVectorXd& ay, double rhs) {
    double shifted = rhs;
    for (int j = 0; j < ny; ++j) {
      const VarMap& vm = vmap[static_cast<size_t>(j)];
      shifted -= ay[j] * vm.shift;
      A(row, vm.col) += ay[j] * vm.sgn;
      if (vm.split) A(row, vm.col + 1) -= ay[j] * vm.sgn;
    }
    b[row] = shifted;
  };
  for (int i = 0; i < m_in; ++i) {
    emit_row(i, A_in.row(i), b_in[i]);
    A(i, slack0 + i) = 1.0;
  }
  for (int i = 0; i < m_up; ++i) {
    Eigen::RowVectorXd ay = Eigen::RowVectorXd::Zero(ny);
    ay[upper_rows[static_cast<size_t>(i)].first] = 1.0;
    emit_row(m_in + i, ay, lo[upper_rows[static_cast<size_t>(i)].first] +
                                upper_rows[static_cast<size_t>(i)].second);
    A(m_in + i, slack0 + m_in + i) = 1.0;
  }
  for (int i = 0; i < m_eq; ++i) emit_row(m_in + m_up + i, A_eq.row(i), b_eq[i]);

  for (int i = 0; i < m; ++i) {
    if (b[i] < 0) {
      A.row(i) = -A.row(i);
      b[i] = -b[i];
    }
  }

  // Objective in standard variables (maximize -> minimize negated).
  Eigen::VectorXd cstd = Eigen::VectorXd::Zero(ntot);
  double cshift = 0.0;
  for (int j = 0; j < ny; ++j) {
    const VarMap& vm = vmap[static_cast<size_t>(j)];
    cshift += c[j] * vm.shift;
    cstd[vm.col] -= c[j] * vm.sgn;
    if (vm.split) cstd[vm.col + 1] += c[j] * vm.sgn;
  }

  // Phase 1: artificial columns, drive their sum to zero.
  Core core;
  core.A.resize(m, ntot + m);
  core.A.leftCols(ntot) = A;
  core.A.rightCols(m) = Eigen::MatrixXd::Identity(m, m);
  core.b = b;
  core.c = Eigen::VectorXd::Zero(ntot + m);
  core.c.tail(m).setOnes();
  core.basis.resize(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) core.basis[static_cast<size_t>(i)] = ntot + i;

  int entering = -1;
  core.run(entering);  // phase 1 is always bounded below by 0
  {
    const Eigen::VectorXd x = core.solution();
    if (x.tail(m).sum() > 1e-8) return {};  // infeasible
  }

  // Pivot remaining artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (core.basis[static_cast<size_t>(i)] >= ntot) {
      Eigen::MatrixXd B(m, m);
      for (int k = 0; k < m; ++k) B.col(k) = core.A.col(core.basis[static_cast<size_t>(k)]);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      for (int j = 0; j < ntot; ++j) {
        const Eigen::VectorXd dir = lu.solve(core.A.col(j));
        if (std::abs(dir[i]) > 1e-7) {
          bool already = false;
          for (int k = 0; k < m; ++k)
            if (core.basis[static_cast<size_t>(k)] == j) already = true;
          if (!already) {
            core.basis[static_cast<size_t>(i)] = j;
            break;
          }
        }
      }
      // A row that cannot be pivoted is redundant; drop it below.
    }
  }

  // Drop redundant rows (those still carrying a basic artificial) and all
  // artificial columns, then run phase 2 on real columns only.
  std::vector<int> keep_rows;
  std::vector<int> basis2;
  for (int i = 0; i < m; ++i) {
    if (core.basis[static_cast<size_t>(i)] < ntot) {
      keep_rows.push_back(i);
      basis2.push_back(core.basis[static_cast<size_t>(i)]);
    }
  }
  const int m2 = static_cast<int>(keep_rows.size());
  Core phase2;
  phase2.A.resize(m2, ntot);
  phase2.b.resize(m2);
  for (int i = 0; i < m2; ++i) {
    phase2.A.row(i) = core.A.row(keep_rows[static_cast<size_t>(i)]).head(ntot);
    phase2.b[i] = core.b[keep_rows[static_cast<size_t>(i)]];
  }
  phase2.c = cstd;
  phase2.basis.assign(basis2.begin(), basis2.end());
  core = std::move(phase2);

  const Core::Outcome out = core.run(entering);
  LpResult res;
  auto map_back = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y(ny);
    for (int j = 0; j < ny; ++j) {
      const VarMap& vm = vmap[static_cast<size_t>(j)];
      double v = vm.shift + vm.sgn * x[vm.col];
      if (vm.split) v -= vm.sgn * x[vm.col + 1];
      y[j] = v;
    }
    return y;
  };
  if (out == Core::Outcome::Unbounded) {
    // Build the improving ray from the entering column.
    const int mrows = static_cast<int>(core.A.rows());
    Eigen::VectorXd xray = Eigen::VectorXd::Zero(ntot);
    xray[entering] = 1.0;
    if (mrows > 0) {
      Eigen::MatrixXd B(mrows, mrows);
      for (int k = 0; k < mrows; ++k) B.col(k) = core.A.col(core.basis[static_cast<size_t>(k)]);
      const Eigen::VectorXd dir = B.partialPivLu().solve(core.A.col(entering));
      for (int i = 0; i < mrows; ++i) xray[core.basis[static_cast<size_t>(i)]] -= dir[i];
    }
    Eigen::VectorXd yray(ny);
    for (int j = 0; j < ny; ++j) {
      const VarMap& vm = vmap[static_cast<size_t>(j)];
      double v = vm.sgn * xray[vm.col];
      if (vm.split) v -= vm.sgn * xray[vm.col + 1];
      yray[j] = v;
    }
    res.status = LpResult::Status::Unbounded;
    res.ray = yray;
    return res;
  }

  const Eigen::VectorXd x = core.solution();
  res.status = LpResult::Status::Optimal;
  res.point = map_back(x);
  res.value = c.dot(res.point);
  (void)cshift;
  return res;
}

}  // namespace l0opt
