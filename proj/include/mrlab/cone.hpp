#pragma once

#include <Eigen/Dense>

namespace mrlab {

// Normal-cone map attached to a variable block of a generalized equation.
//
//   Zero       N(z) = {0} for every z (plain equation rows)
//   Orthant    N_{R^d_+}(z): {0} where z_i > 0, (-inf,0] where z_i = 0
//   Box        N_{[lo,hi]}(z) componentwise; entries of lo/hi may be +-inf
//   Polytope   N_{conv(V)}(z) = { s : <s, v_k - z> <= 0 for all vertices }
struct ConeSpec {
  enum class Kind { Zero, Orthant, Box, Polytope };

  Kind kind = Kind::Zero;
  int dim = 0;
  Eigen::VectorXd lo, hi;     // Box
  Eigen::MatrixXd vertices;   // Polytope, dim x n_vertices

  static ConeSpec zero(int dim);
  static ConeSpec orthant(int dim);
  static ConeSpec box(Eigen::VectorXd lo, Eigen::VectorXd hi);
  static ConeSpec polytope(Eigen::MatrixXd vertices);
};

// Distance from `normal_candidate` to the normal cone at `primal`.
// `primal_infeasible` is set (and value is +inf) when `primal` lies outside
// the underlying set; points exactly on a bound count as active.
struct ConeDistance {
  double value = 0.0;
  bool primal_infeasible = false;
};

ConeDistance cone_residual(const ConeSpec& cone, const Eigen::VectorXd& primal,
                           const Eigen::VectorXd& normal_candidate);

}  // namespace mrlab
