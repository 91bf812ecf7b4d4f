#pragma once

#include <Eigen/Dense>

namespace mrlab {

// Exact minimum of d^T H d over { d : E d = 0, C d <= 0, d^T W d = 1 } with
// W symmetric positive definite.  Every KKT point lives on some face of the
// inequality cone and is an eigenpair of that face's reduced pencil, so
// enumerating all faces (C has at most 16 rows) and all eigenpairs with a
// primal feasibility filter is exact.  `trivial` is set when the cone
// contains only the origin; `value` is +inf in that case.
struct ConeQuadraticResult {
  double value = 0.0;
  bool trivial = false;
  Eigen::VectorXd direction;  // attaining d with d^T W d = 1
};

ConeQuadraticResult cone_quadratic_minimum(const Eigen::MatrixXd& H,
                                           const Eigen::MatrixXd& W,
                                           const Eigen::MatrixXd& E,
                                           const Eigen::MatrixXd& C);

}  // namespace mrlab
