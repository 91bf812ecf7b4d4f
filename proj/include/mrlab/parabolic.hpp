#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "mrlab/regularity.hpp"

namespace mrlab {

// Distributed control of a semilinear heat equation on (0,1) x (0,T):
//   min  J(u) = int_Q L0(x,t,y) + g(x,t) u
//   s.t. y_t - (a(x) y_x)_x + f(x,t,y) = u,  y(0)=y(1)=0,  y(.,0) = y0,
//        ua(x,t) <= u <= ub(x,t).
// Discretisation: Nx interior nodes x_i = i*hx with hx = 1/(Nx+1), centered
// second-order differences with a(x) sampled at cell midpoints, implicit
// Euler with Nt steps of size ht = T/Nt.  Missing derivative evaluators fall
// back to central finite differences in y.
struct ParabolicOcp {
  double T = 1.0;
  int Nx = 0;  // interior space nodes
  int Nt = 0;  // time steps

  std::function<double(double)> a;   // diffusion a(x) >= lambda_A > 0
  std::function<double(double)> y0;  // initial state
  std::function<double(double, double)> g;        // control weight g(x,t)
  std::function<double(double, double)> ua, ub;   // control bounds, ua < ub

  std::function<double(double, double, double)> f;      // f(x,t,y), df/dy >= 0
  std::function<double(double, double, double)> f_y;    // optional
  std::function<double(double, double, double)> f_yy;   // optional
  std::function<double(double, double, double)> L0;     // running cost L0(x,t,y)
  std::function<double(double, double, double)> L0_y;   // optional
  std::function<double(double, double, double)> L0_yy;  // optional

  double hx() const { return 1.0 / (Nx + 1); }
  double ht() const { return T / Nt; }
  double xnode(int i) const { return (i + 1) * hx(); }  // i = 0..Nx-1
  double tnode(int k) const { return k * ht(); }        // k = 0..Nt

  double eval_f(double x, double t, double y) const;
  double eval_f_y(double x, double t, double y) const;
  double eval_f_yy(double x, double t, double y) const;
  double eval_L0(double x, double t, double y) const;
  double eval_L0_y(double x, double t, double y) const;
  double eval_L0_yy(double x, double t, double y) const;
};

// Space-time grid function, time-major: values is (Nt+1) x Nx with row k the
// slice at t_k = k*ht on the interior nodes (homogeneous boundary values are
// implied, not stored).  States and adjoints use every row; step-indexed
// quantities (controls, disturbances, gradient fields) live on rows 1..Nt
// with row 0 kept as a mirror of row 1 for export only -- it never enters
// dynamics, objectives, or norms.
struct Field2D {
  Eigen::MatrixXd values;
  double hx = 0.0;
  double ht = 0.0;

  static Field2D zero(const ParabolicOcp& ocp);
};

// Space-time norms by the rectangle rule over rows 1..Nt, weight ht*hx per
// node (right-endpoint rectangle in time, midpoint values in space).
double field_norm_l1(const Field2D& f);
double field_norm_l2(const Field2D& f);
double field_norm_linf(const Field2D& f);

// ||y||_{L2(0,T;H^1_0)} + ||y_t||_{L2(0,T;H^-1)} with the discrete H^1_0
// seminorm through the boundary zeros and H^-1 via the inverse Dirichlet
// Laplacian.  Provided for completeness; the sub-regularity estimates of
// this module are stated and measured in L^1/L^2, so nothing consumes it.
double field_norm_w0t(const Field2D& f);

// CSV export, one "t,x,value" triple per grid node, 17 significant digits.
void write_field_csv(const Field2D& f, std::ostream& out);

// Disturbance tuple of the optimality system: xi enters the state equation,
// eta the adjoint equation, rho the variational inequality.  Image-space
// size is  ||xi||_2 + ||eta||_2 + ||rho||_inf.
struct ParabolicDisturbance {
  Field2D xi, eta, rho;

  static ParabolicDisturbance zero(const ParabolicOcp& ocp);
};

double parabolic_disturbance_norm(const ParabolicDisturbance& d);

// Domain-space distance  ||y1-y2||_2 + ||p1-p2||_2 + ||u1-u2||_1.
double parabolic_triple_dist(const Field2D& y1, const Field2D& p1,
                             const Field2D& u1, const Field2D& y2,
                             const Field2D& p2, const Field2D& u2);

// Implicit Euler for  y_t + A y + f(.,y) = u + xi,  one Newton solve per
// time step (tolerance 1e-12 relative to the step data).  Controls outside
// the bounds are accepted; the equation does not care.  Throws
// std::runtime_error naming the step when Newton stalls.
Field2D solve_state(const ParabolicOcp& ocp, const Field2D& u,
                    const Field2D* xi = nullptr);

// Backward implicit Euler for  -p_t + A p + f_y(.,y) p = dL0/dy + eta  with
// p(.,T) = 0.  The returned row k-1 is the multiplier of the step ending at
// t_k, which makes g + p the exact gradient of the discrete objective.
Field2D solve_adjoint(const ParabolicOcp& ocp, const Field2D& y,
                      const Field2D* eta = nullptr);

// z_t + A z + f_y(.,y) z = v with z(.,0) = 0: derivative of the discrete
// control-to-state map at the control underlying y.
Field2D linearized_state(const ParabolicOcp& ocp, const Field2D& y,
                         const Field2D& v);

// w_t + A w + f_y(.,y) w = -f_yy(.,y) z_v z_w with w(.,0) = 0: second
// derivative of the discrete control-to-state map along (v, w).
Field2D second_response(const ParabolicOcp& ocp, const Field2D& y,
                        const Field2D& zv, const Field2D& zw);

// Objective value with first and second directional derivatives and the
// pointwise gradient field g + p (rows 1..Nt).  With v absent both
// derivative slots are zero; with w absent the second derivative is taken
// along (v, v).  The derivatives are exact for the discrete objective, not
// finite-difference estimates.
struct ObjectiveReport {
  double value = 0.0;
  double grad_v = 0.0;      // J'(u) v
  double hess_vw = 0.0;     // J''(u)(v, w)
  Field2D gradient;         // g + p, the integrand of J'(u)
  Field2D y, p;
};

ObjectiveReport objective_and_derivatives(const ParabolicOcp& ocp,
                                          const Field2D& u,
                                          const Field2D* v = nullptr,
                                          const Field2D* w = nullptr);

// Defect of the triple (y, p, u) in the three rows of the optimality system:
// xi = discrete y_t + A y + f - u, eta = discrete -p_t + A p + f_y p - dL0/dy,
// rho = pointwise least disturbance putting g + p into -N_[ua,ub](u).
// Throws std::invalid_argument on mesh mismatch.
struct ParabolicResidual {
  ParabolicDisturbance defect;
  double xi_l2 = 0.0;
  double eta_l2 = 0.0;
  double rho_sup = 0.0;
  double norm = 0.0;  // xi_l2 + eta_l2 + rho_sup
};

ParabolicResidual optimality_residual(const ParabolicOcp& ocp,
                                      const Field2D& y, const Field2D& p,
                                      const Field2D& u);

// Quadratic growth along feasible variations:
//   J'(u_bar)(u - u_bar) + J''(u_bar)(u - u_bar)^2 >= c ||u - u_bar||_1^(1+1/gamma)
// sampled over space-time strip variations with ||u - u_bar||_1 < alpha.
// gamma must lie in (2/3, 1], the admissible range in one space dimension.
struct ParabolicGrowthParams {
  double c0 = 0.0;
  double alpha = 0.0;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  int n_samples = 100;
  // flipped sets must span >= 2 space columns and >= min_support_cells
  // cells: the single column straddling the sign interface carries an
  // exactly zero discrete gradient, a resolution artifact with no
  // continuum counterpart
  int min_support_cells = 4;
  int jobs = 1;
};

struct ParabolicGrowthResult {
  bool holds = false;
  double c_empirical = 0.0;
  int n_samples = 0;
  Eigen::MatrixXd worst_control;  // (Nt+1) x Nx, the minimising sample
};

ParabolicGrowthResult check_growth_parabolic(const ParabolicOcp& ocp,
                                             const Field2D& u_bar,
                                             const ParabolicGrowthParams& params);

// Alternating sweeps for the disturbed optimality system: state solve with
// xi, adjoint solve with eta, then the pointwise sign rule on g + p - rho
// (upper bound where it is <= 0, so constant shifts move the sign interface
// inclusively, matching the reference rule).  Averaging relaxation with
// halved step on detected control cycles, as in the control-affine solver.
struct ParabolicSolveOptions {
  int max_sweeps = 50;
  double tol = 1e-9;
};

struct ParabolicSolveResult {
  Field2D y, p, u;
  bool converged = false;
  int sweeps = 0;
  double residual = 0.0;  // sup-norm stationarity defect of the final control
};

ParabolicSolveResult solve_parabolic_system(
    const ParabolicOcp& ocp, const Field2D& start_u,
    const ParabolicDisturbance* dist = nullptr,
    const ParabolicSolveOptions& opts = {});

// Solution response to random disturbances of the optimality system, one
// record per (magnitude, direction).  Disturbance tuples are scaled so the
// image-space size is exactly the requested magnitude.  rho is drawn
// constant over the cylinder (the family whose interface response is linear
// in the magnitude) unless rho_constant is cleared, in which case it is a
// random cellwise field.  Exponent fits: control distance and state+adjoint
// distance against image size, via the shared log-log envelope fit.
struct ParabolicSweepParams {
  std::uint64_t seed = 0;
  std::vector<double> magnitudes;
  int directions_per_magnitude = 10;
  bool perturb_xi = false;
  bool perturb_eta = false;
  bool perturb_rho = true;
  bool rho_constant = true;
  int jobs = 1;
  ParabolicSolveOptions solve;
};

struct ParabolicHolderRecord {
  int sample_index = 0;
  double magnitude = 0.0;
  double image_dist = 0.0;
  double u_dist = 0.0;
  double yp_dist = 0.0;
  bool converged = false;
  int sweeps = 0;
};

struct ParabolicHolderReport {
  std::vector<ParabolicHolderRecord> records;
  RegularityFit fit_control;  // ||u - u_bar||_1 against image size
  RegularityFit fit_state;    // ||y - y_bar||_2 + ||p - p_bar||_2 against it
};

ParabolicHolderReport holder_experiment(const ParabolicOcp& ocp,
                                        const Field2D& u_bar,
                                        const ParabolicSweepParams& params);

}  // namespace mrlab
