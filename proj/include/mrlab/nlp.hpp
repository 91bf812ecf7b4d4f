#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mrlab/generalized_equation.hpp"
#include "mrlab/metric.hpp"
#include "mrlab/regularity.hpp"

namespace mrlab {

// Smooth nonlinear program
//   min phi(x)  s.t.  f(x) <= 0 (m rows),  g(x) = 0 (p rows).
// Gradient/Jacobian/Hessian evaluators may be left empty; central finite
// differences fill in.  Hessians must be symmetric.
struct NlpProblem {
  int n = 0, m = 0, p = 0;
  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> objective_gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> objective_hessian;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> inequality;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> inequality_jacobian;
  std::vector<std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>>
      inequality_hessians;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> equality;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> equality_jacobian;
  std::vector<std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>>
      equality_hessians;

  Eigen::VectorXd grad_objective(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hess_objective(const Eigen::VectorXd& x) const;
  Eigen::VectorXd eval_inequality(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd jac_inequality(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hess_inequality(int i, const Eigen::VectorXd& x) const;
  Eigen::VectorXd eval_equality(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd jac_equality(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hess_equality(int j, const Eigen::VectorXd& x) const;

  // Dimension and Hessian-symmetry checks at the given sample points;
  // throws std::invalid_argument on violation (tolerance 1e-8).
  void validate(const std::vector<Eigen::VectorXd>& samples) const;
};

// Primal-dual point (x, lambda, ystar); lambda pairs with the inequalities.
struct KktTriple {
  Eigen::VectorXd x, lambda, ystar;
};

// Image-space disturbance: zeta shifts stationarity, xi the complementarity
// rows, eta the equalities.
struct KktDisturbance {
  Eigen::VectorXd zeta, xi, eta;
  static KktDisturbance zero(const NlpProblem& p);
};

// Hessian of the Lagrangian phi + lambda^T f + ystar^T g at s.
Eigen::MatrixXd lagrangian_hessian(const NlpProblem& problem,
                                   const KktTriple& s);

// Minimal-norm disturbance for which s satisfies the first-order system
// exactly; multiplier_infeasible flags lambda outside the nonnegative cone.
struct KktResidual {
  KktDisturbance defect;
  bool multiplier_infeasible = false;
  double image_norm = 0.0;  // |zeta| + |xi| + |eta|
};
KktResidual kkt_residual(const NlpProblem& problem, const KktTriple& s);

// First-order system as a generalized equation in z = (x, lambda, ystar)
// with orthant block on lambda; the right-hand side ordering matches
// pack_disturbance.
GeneralizedEquation to_generalized_equation(const NlpProblem& problem);
Eigen::VectorXd pack_triple(const KktTriple& s);
KktTriple unpack_triple(const NlpProblem& problem, const Eigen::VectorXd& z);
Eigen::VectorXd pack_disturbance(const NlpProblem& problem,
                                 const KktDisturbance& d);

struct PerturbedKktResult {
  KktTriple s;
  bool converged = false;
  std::vector<double> residual_history;
  std::string error;
};
PerturbedKktResult solve_perturbed_kkt(const NlpProblem& problem,
                                       const KktTriple& start,
                                       const KktDisturbance& disturbance,
                                       const NewtonOptions& opts = {});

// Positive linear independence of the active constraint gradients, with sign
// constraints only on the degenerate (active, zero-multiplier) rows.  On
// failure the certificate is a nonzero combination summing to zero, scaled to
// max-abs 1.
struct MfcqResult {
  bool holds = true;
  Eigen::VectorXd lambda_certificate;  // length m
  Eigen::VectorXd ystar_certificate;   // length p
};
MfcqResult check_strict_mfcq(const NlpProblem& problem, const KktTriple& s,
                             double active_tol = 1e-8);

// Minimum of d^T H d over the critical cone at s intersected with the unit
// sphere of `domain_norm` (Euclidean or WeightedEuclidean).  Exact via face
// enumeration of the degenerate-constraint inequalities.
struct CoercivityResult {
  double c0 = 0.0;
  bool cone_trivial = false;  // critical cone is {0}; c0 reported as +inf
  Eigen::VectorXd direction;  // attaining d, unit in domain_norm
};
CoercivityResult check_coercivity(const NlpProblem& problem,
                                  const KktTriple& s,
                                  const MetricSpec& domain_norm =
                                      MetricSpec::euclidean(),
                                  double active_tol = 1e-8);

// Random disturbance sweep around the reference triple.  Directions are
// drawn componentwise uniform from sub-streams of `seed` indexed by sample,
// scaled to exact image magnitude |zeta| + |xi| + |eta|.
struct NlpSweepParams {
  std::uint64_t seed = 0;
  std::vector<double> magnitudes;
  int directions_per_magnitude = 20;
  bool perturb_zeta = true, perturb_xi = true, perturb_eta = true;
  NewtonOptions newton;
  int jobs = 1;
};
std::vector<PerturbationRecord> smsr_experiment(const NlpProblem& problem,
                                                const KktTriple& s,
                                                const NlpSweepParams& params);

}  // namespace mrlab
