#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <string>
#include <vector>

#include "mrlab/cone.hpp"

namespace mrlab {

// Square inclusion  rhs in F(z) + N_C(z_cone)  where F is smooth, C acts on
// the variable slice [cone_offset, cone_offset + cone.dim) and contributes to
// the image rows with the same indices.  All remaining rows are equations.
//
// Evaluators must be pure; `jacobian_sparse` is preferred by the solver when
// set (large banded systems), otherwise `jacobian` is used.
struct GeneralizedEquation {
  int dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> smooth;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  std::function<Eigen::SparseMatrix<double>(const Eigen::VectorXd&)>
      jacobian_sparse;
  ConeSpec cone = ConeSpec::zero(0);
  int cone_offset = 0;
};

// Natural residual of the inclusion at z: Euclidean norm of the equation
// defects stacked with the distance of the cone-row defect to the normal
// cone.  +inf with the flag set when the cone block is infeasible.
struct GeResidual {
  double value = 0.0;
  bool primal_infeasible = false;
};
GeResidual ge_residual(const GeneralizedEquation& geq, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& rhs);

struct NewtonOptions {
  double tol = 1e-10;          // Euclidean residual target
  int max_iterations = 50;
  int max_pattern_sweeps = 60; // active-pattern iterations per subproblem
};

struct NewtonResult {
  Eigen::VectorXd solution;
  std::vector<double> residual_history;  // residual before each step + final
  int iterations = 0;
  bool converged = false;
  std::string error;  // non-empty only on structural failure (singular step)
};

// Newton method for generalized equations: each step solves the inclusion
// with the smooth part linearized at the current iterate, keeping the
// set-valued part exact.  Affine subproblems with Orthant/Box blocks are
// solved by active-pattern iteration on the min/projection reformulation;
// Polytope blocks are not supported here.  A singular linearized subproblem
// aborts with `error` naming the iterate; plain non-convergence only clears
// `converged` and returns the best iterate.
NewtonResult josephy_newton(const GeneralizedEquation& geq,
                            const Eigen::VectorXd& start,
                            const Eigen::VectorXd& rhs,
                            const NewtonOptions& opts = {});

}  // namespace mrlab
