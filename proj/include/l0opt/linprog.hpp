#pragma once

#include <Eigen/Dense>

namespace l0opt {

/// Exact dense linear programming by two-phase simplex with Bland's rule.
/// Problems here are tiny (per-atom stacked coordinates), so a tableau
/// method is appropriate; Bland's rule guarantees termination.
struct LpResult {
  enum class Status { Optimal, Unbounded, Infeasible };
  Status status = Status::Infeasible;
  double value = 0.0;      // max value when optimal
  Eigen::VectorXd point;   // maximizer when optimal
  Eigen::VectorXd ray;     // recession direction with c'ray > 0 when unbounded
};

/// maximize c'y  subject to  A_in y <= b_in,  A_eq y = b_eq,  lo <= y <= hi.
/// Bounds may be +-infinity. Pass 0-row matrices for absent constraint
/// blocks.
LpResult linprog_max(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_in,
                     const Eigen::VectorXd& b_in, const Eigen::MatrixXd& A_eq,
                     const Eigen::VectorXd& b_eq, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi);

}  // namespace l0opt
