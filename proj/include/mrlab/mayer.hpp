#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mrlab/cone_quadratic.hpp"
#include "mrlab/generalized_equation.hpp"
#include "mrlab/regularity.hpp"

namespace mrlab {

// Terminal-cost optimal control problem on [0, 1]:
//   min phi(x(0), x(1))  s.t.  x' = f(x, u),  G(u) <= 0,
// with either both endpoints free (transversality at 0 and 1) or the initial
// state pinned to x_init.  Missing derivative evaluators fall back to central
// finite differences; dynamics_hessians[l] is the (n+m)x(n+m) Hessian of the
// l-th dynamics component in w = (x, u), constraint_hessians[i] the m x m
// Hessian of G_i.
struct MayerOcp {
  enum class Boundary { BothFree, FixedInitial };

  int n = 0, m = 0, k = 0;
  Boundary boundary = Boundary::FixedInitial;
  Eigen::VectorXd x_init;

  std::function<double(const Eigen::VectorXd&)> terminal_cost;  // q = (x0, x1)
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> terminal_gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> terminal_hessian;

  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      dynamics;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      dynamics_jx, dynamics_ju;
  std::vector<std::function<Eigen::MatrixXd(const Eigen::VectorXd&,
                                            const Eigen::VectorXd&)>>
      dynamics_hessians;

  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constraint;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> constraint_jacobian;
  std::vector<std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>>
      constraint_hessians;

  Eigen::VectorXd grad_terminal(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd hess_terminal(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd jac_x(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  Eigen::MatrixXd jac_u(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  Eigen::MatrixXd dyn_hessian(int l, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) const;
  Eigen::VectorXd eval_constraint(const Eigen::VectorXd& u) const;
  Eigen::MatrixXd jac_constraint(const Eigen::VectorXd& u) const;
  Eigen::MatrixXd con_hessian(int i, const Eigen::VectorXd& u) const;
};

// Euler grid solution: states and adjoints on N+1 nodes, controls and
// multipliers on N cells; h = 1/N.
struct DiscreteQuadruple {
  int N = 0;
  Eigen::MatrixXd x;    // (N+1) x n
  Eigen::MatrixXd u;    // N x m
  Eigen::MatrixXd p;    // (N+1) x n
  Eigen::MatrixXd lam;  // N x k

  double h() const { return 1.0 / N; }
  static DiscreteQuadruple zero(const MayerOcp& ocp, int N);
};

// Cellwise disturbance of the optimality system: xi on the state equation,
// pi on the adjoint equation, nu on the boundary rows (first n entries at
// t=0, last n at t=1), rho on control stationarity, eta on the constraint
// complementarity rows.
struct OcpDisturbance {
  Eigen::MatrixXd xi;   // N x n
  Eigen::MatrixXd pi;   // N x n
  Eigen::VectorXd nu;   // 2n
  Eigen::MatrixXd rho;  // N x m
  Eigen::MatrixXd eta;  // N x k
  static OcpDisturbance zero(const MayerOcp& ocp, int N);
};

// x_{j+1} = x_j + h (f(x_j, u_j) - xi_j) from the given initial state.
Eigen::MatrixXd forward_simulate(const MayerOcp& ocp, const Eigen::VectorXd& x0,
                                 const Eigen::MatrixXd& u,
                                 const Eigen::MatrixXd* xi = nullptr);

// p_j = p_{j+1} + h (f_x(x_j,u_j)^T p_{j+1} - pi_j) from the terminal value.
Eigen::MatrixXd backward_adjoint(const MayerOcp& ocp, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& u,
                                 const Eigen::VectorXd& p_terminal,
                                 const Eigen::MatrixXd* pi = nullptr);

// Cellwise nonnegative least-squares multipliers for the stationarity rows,
// supported on the active constraints.
Eigen::MatrixXd recover_multipliers(const MayerOcp& ocp,
                                    const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& u,
                                    const Eigen::MatrixXd& p,
                                    double active_tol = 1e-8);

// Newton start from a control guess: simulate the states, propagate the
// adjoint from the terminal gradient, recover multipliers.  A zero adjoint
// start loses the control curvature p^T f_uu and makes the first linearized
// system singular; this start keeps it.
DiscreteQuadruple consistent_start(const MayerOcp& ocp, int N,
                                   const Eigen::MatrixXd& u,
                                   const Eigen::VectorXd& x0);

// Minimal disturbance for which s solves the discrete optimality system.
// strong_norm: L1(xi) + L1(pi) + |nu| + Linf(rho) + Linf(eta);
// weak_norm uses L2 on rho and eta instead.
struct OcpResidual {
  OcpDisturbance defect;
  bool multiplier_infeasible = false;
  double strong_norm = 0.0;
  double weak_norm = 0.0;
};
OcpResidual pmp_residual(const MayerOcp& ocp, const DiscreteQuadruple& s);

// Stacked first-order system as a generalized equation in
// z = (x_0..x_N, u_0..u_{N-1}, p_0..p_N, lam_0..lam_{N-1}) with an orthant
// block on the multipliers; rhs ordering matches pack_ocp_disturbance.
GeneralizedEquation to_generalized_equation(const MayerOcp& ocp, int N);
Eigen::VectorXd pack_quadruple(const DiscreteQuadruple& s);
DiscreteQuadruple unpack_quadruple(const MayerOcp& ocp, int N,
                                   const Eigen::VectorXd& z);
Eigen::VectorXd pack_ocp_disturbance(const MayerOcp& ocp, int N,
                                     const OcpDisturbance& d);

struct PmpSolveResult {
  DiscreteQuadruple s;
  bool converged = false;
  std::vector<double> residual_history;  // Euclidean, per Newton iterate
  double strong_residual = 0.0;
  std::string error;
};
// Newton iteration on the stacked system until the strong image norm of the
// residual (relative to the disturbance) falls below tol.
PmpSolveResult solve_pmp(const MayerOcp& ocp, const DiscreteQuadruple& start,
                         const OcpDisturbance& disturbance, double tol = 1e-9,
                         int max_iterations = 30);

// Minimum of the second-variation quadratic form over the Delta-critical
// cone, normalized by |dx(0)|^2 + L2(du)^2 (the initial-state part is absent
// under FixedInitial).  Constraints with multiplier above Delta contribute
// equality rows, other active constraints inequality rows.
ConeQuadraticResult coercivity_on_cone(const MayerOcp& ocp,
                                       const DiscreteQuadruple& s, double Delta,
                                       double active_tol = 1e-8);

// Disturbance sweep around the reference solution; directions drawn
// componentwise uniform per sample sub-stream and scaled to exact strong
// image magnitude.
struct OcpSweepParams {
  std::uint64_t seed = 0;
  std::vector<double> magnitudes;
  int directions_per_magnitude = 20;
  bool perturb_xi = true, perturb_pi = true, perturb_nu = true,
       perturb_rho = true, perturb_eta = true;
  double newton_tol = 1e-10;
  int max_iterations = 30;
  int jobs = 1;
};
std::vector<PerturbationRecord> smsr_experiment(const MayerOcp& ocp,
                                                const DiscreteQuadruple& s,
                                                const OcpSweepParams& params);

}  // namespace mrlab
