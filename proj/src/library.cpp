#include "mrlab/library.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mrlab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

[[noreturn]] void wrong_module(const std::string& id, const char* builder) {
  const ProblemInfo* info = find_problem(id);
  std::ostringstream msg;
  if (info == nullptr) {
    msg << "unknown problem id '" << id << "'";
  } else {
    msg << "problem '" << id << "' belongs to module " << info->module
        << " and has no " << builder << " form";
  }
  throw std::invalid_argument(msg.str());
}

// min |x|^2  s.t.  1 - x1 - x2 <= 0; solution x = (1/2, 1/2), lambda = 1.
// A complementarity shift xi moves it to x = ((1-xi)/2, (1-xi)/2),
// lambda = 1 - xi, linearly in the disturbance.
NlpProblem quadratic_nlp() {
  NlpProblem p;
  p.n = 2;
  p.m = 1;
  p.p = 0;
  p.objective = [](const VectorXd& x) { return x.squaredNorm(); };
  p.objective_gradient = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  p.objective_hessian = [](const VectorXd&) {
    return MatrixXd(2.0 * MatrixXd::Identity(2, 2));
  };
  p.inequality = [](const VectorXd& x) {
    VectorXd f(1);
    f << 1.0 - x(0) - x(1);
    return f;
  };
  p.inequality_jacobian = [](const VectorXd&) {
    MatrixXd J(1, 2);
    J << -1.0, -1.0;
    return J;
  };
  p.inequality_hessians = {
      [](const VectorXd&) { return MatrixXd::Zero(2, 2); }};
  return p;
}

// Same feasible set with the inequality listed twice: the active gradients
// are positively dependent, so strict MFCQ fails with a certificate.
NlpProblem duplicated_constraint_nlp() {
  NlpProblem p = quadratic_nlp();
  p.m = 2;
  p.inequality = [](const VectorXd& x) {
    VectorXd f(2);
    f << 1.0 - x(0) - x(1), 1.0 - x(0) - x(1);
    return f;
  };
  p.inequality_jacobian = [](const VectorXd&) {
    MatrixXd J(2, 2);
    J << -1.0, -1.0, -1.0, -1.0;
    return J;
  };
  p.inequality_hessians = {
      [](const VectorXd&) { return MatrixXd::Zero(2, 2); },
      [](const VectorXd&) { return MatrixXd::Zero(2, 2); }};
  return p;
}

// Energy double integrator: x1' = u, x2' = u^2, cost x2(1), |u| <= 1,
// x(0) = 0.  The adjoint is constant p = (0, 1); u = 0 is the interior
// minimizer and the second variation is 2 |du|^2 on every grid.
MayerOcp energy_mayer() {
  MayerOcp ocp;
  ocp.n = 2;
  ocp.m = 1;
  ocp.k = 2;
  ocp.boundary = MayerOcp::Boundary::FixedInitial;
  ocp.x_init = VectorXd::Zero(2);
  ocp.terminal_cost = [](const VectorXd& q) { return q(3); };
  ocp.terminal_gradient = [](const VectorXd&) {
    VectorXd g(4);
    g << 0, 0, 0, 1;
    return g;
  };
  ocp.terminal_hessian = [](const VectorXd&) { return MatrixXd::Zero(4, 4); };
  ocp.dynamics = [](const VectorXd&, const VectorXd& u) {
    VectorXd f(2);
    f << u(0), u(0) * u(0);
    return f;
  };
  ocp.dynamics_jx = [](const VectorXd&, const VectorXd&) {
    return MatrixXd::Zero(2, 2);
  };
  ocp.dynamics_ju = [](const VectorXd&, const VectorXd& u) {
    MatrixXd J(2, 1);
    J << 1.0, 2.0 * u(0);
    return J;
  };
  ocp.dynamics_hessians.resize(2);
  ocp.dynamics_hessians[0] = [](const VectorXd&, const VectorXd&) {
    return MatrixXd::Zero(3, 3);
  };
  ocp.dynamics_hessians[1] = [](const VectorXd&, const VectorXd&) {
    MatrixXd H = MatrixXd::Zero(3, 3);
    H(2, 2) = 2.0;
    return H;
  };
  ocp.constraint = [](const VectorXd& u) {
    VectorXd g(2);
    g << u(0) - 1.0, -u(0) - 1.0;
    return g;
  };
  ocp.constraint_jacobian = [](const VectorXd&) {
    MatrixXd J(2, 1);
    J << 1.0, -1.0;
    return J;
  };
  return ocp;
}

// Scalar bang-bang: x' = u, J = int (t - 1/2) u, u in [-1, 1].  The adjoint
// vanishes, sigma(t) = t - 1/2 crosses zero transversally at t = 1/2.
AffineOcp bangbang_affine() {
  AffineOcp ocp;
  ocp.n = 1;
  ocp.m = 1;
  ocp.T = 1.0;
  ocp.x0 = VectorXd::Zero(1);
  ocp.U = ControlSet::box(VectorXd::Constant(1, -1.0),
                          VectorXd::Constant(1, 1.0));
  ocp.linear_quadratic = true;
  ocp.a = [](double, const VectorXd&) { return VectorXd::Zero(1); };
  ocp.B = [](double, const VectorXd&) { return MatrixXd::Identity(1, 1); };
  ocp.w = [](double, const VectorXd&) { return 0.0; };
  ocp.d = [](double t, const VectorXd&) {
    return VectorXd::Constant(1, t - 0.5);
  };
  return ocp;
}

// Same dynamics with sigma(t) = (t - 1/2)^2: the switching function touches
// zero tangentially, so the slope condition fails at t = 1/2.
AffineOcp tangential_affine() {
  AffineOcp ocp = bangbang_affine();
  ocp.d = [](double t, const VectorXd&) {
    return VectorXd::Constant(1, (t - 0.5) * (t - 0.5));
  };
  return ocp;
}

// Linear heat equation with bang-bang control: weight g = x - 1/2 puts the
// control interface at mid-channel; the adjoint vanishes (no running cost
// in y), so u = sign rule on g solves the optimality system exactly.
ParabolicOcp parabolic_bang(int Nx, int Nt) {
  ParabolicOcp ocp;
  ocp.T = 1.0;
  ocp.Nx = Nx;
  ocp.Nt = Nt;
  ocp.a = [](double) { return 1.0; };
  ocp.y0 = [](double x) { return std::sin(M_PI * x); };
  ocp.g = [](double x, double) { return x - 0.5; };
  ocp.ua = [](double, double) { return -1.0; };
  ocp.ub = [](double, double) { return 1.0; };
  return ocp;
}

// Pure heat equation with the separable solution exp(-pi^2 t) sin(pi x);
// the control weight is zero, the fixture exists for solver accuracy runs.
ParabolicOcp heat_analytic(int Nx, int Nt) {
  ParabolicOcp ocp;
  ocp.T = 0.1;
  ocp.Nx = Nx;
  ocp.Nt = Nt;
  ocp.a = [](double) { return 1.0; };
  ocp.y0 = [](double x) { return std::sin(M_PI * x); };
  ocp.g = [](double, double) { return 0.0; };
  ocp.ua = [](double, double) { return -1.0; };
  ocp.ub = [](double, double) { return 1.0; };
  return ocp;
}

}  // namespace

const std::vector<ProblemInfo>& problem_registry() {
  static const std::vector<ProblemInfo> registry = {
      {"p1-quadratic-nlp", "nlp-kkt",
       "quadratic program min |x|^2 with 1 - x1 - x2 <= 0; one active "
       "constraint, closed-form perturbed solutions",
       0, 0, 0},
      {"p1-duplicated-constraint", "nlp-kkt",
       "the same quadratic program with the inequality listed twice; "
       "degenerate multipliers, strict MFCQ fails",
       0, 0, 0},
      {"p2-energy-mayer", "ocp-mayer",
       "double-integrator energy problem x1' = u, x2' = u^2, cost x2(1), "
       "|u| <= 1; interior control, coercivity constant 2",
       200, 0, 0},
      {"p3-bangbang", "ocp-affine",
       "scalar control-affine problem with switching function t - 1/2; one "
       "transversal switch, bang-bang control",
       1000, 0, 0},
      {"p3-tangential", "ocp-affine",
       "same dynamics with switching function (t - 1/2)^2; tangential touch, "
       "the slope condition fails",
       1000, 0, 0},
      {"p4-parabolic-bang", "parabolic-1d",
       "distributed heat control with weight x - 1/2 and bounds [-1, 1]; "
       "bang-bang control split at mid-channel",
       0, 49, 100},
      {"heat-analytic", "parabolic-1d",
       "uncontrolled heat equation with exact solution exp(-pi^2 t) "
       "sin(pi x); solver accuracy fixture",
       0, 99, 400},
  };
  return registry;
}

const ProblemInfo* find_problem(const std::string& id) {
  for (const auto& entry : problem_registry())
    if (entry.id == id) return &entry;
  return nullptr;
}

std::string format_problem_table(const std::string& module_filter) {
  size_t id_width = 0, module_width = 0;
  for (const auto& entry : problem_registry()) {
    id_width = std::max(id_width, entry.id.size());
    module_width = std::max(module_width, entry.module.size());
  }
  std::ostringstream out;
  for (const auto& entry : problem_registry()) {
    if (!module_filter.empty() && entry.module != module_filter) continue;
    out << entry.id << std::string(id_width - entry.id.size() + 2, ' ')
        << entry.module
        << std::string(module_width - entry.module.size() + 2, ' ')
        << entry.description << "\n";
  }
  return out.str();
}

NlpProblem make_nlp_problem(const std::string& id) {
  if (id == "p1-quadratic-nlp") return quadratic_nlp();
  if (id == "p1-duplicated-constraint") return duplicated_constraint_nlp();
  wrong_module(id, "nonlinear-program");
}

KktTriple nlp_reference_point(const std::string& id) {
  KktTriple s;
  s.x = VectorXd::Constant(2, 0.5);
  s.ystar = VectorXd();
  if (id == "p1-quadratic-nlp") {
    s.lambda = VectorXd::Constant(1, 1.0);
    return s;
  }
  if (id == "p1-duplicated-constraint") {
    // all the multiplier mass on the first copy; the second is degenerate
    s.lambda = VectorXd::Zero(2);
    s.lambda(0) = 1.0;
    return s;
  }
  wrong_module(id, "nonlinear-program");
}

MayerOcp make_mayer_problem(const std::string& id) {
  if (id == "p2-energy-mayer") return energy_mayer();
  wrong_module(id, "terminal-cost control");
}

DiscreteQuadruple mayer_reference_solution(const MayerOcp& ocp,
                                           const std::string& id, int N) {
  if (id != "p2-energy-mayer") wrong_module(id, "terminal-cost control");
  DiscreteQuadruple s = DiscreteQuadruple::zero(ocp, N);
  s.x = forward_simulate(ocp, ocp.x_init, s.u);
  VectorXd pT(2);
  pT << 0.0, 1.0;
  s.p = backward_adjoint(ocp, s.x, s.u, pT);
  return s;
}

AffineOcp make_affine_problem(const std::string& id) {
  if (id == "p3-bangbang") return bangbang_affine();
  if (id == "p3-tangential") return tangential_affine();
  wrong_module(id, "control-affine");
}

ParabolicOcp make_parabolic_problem(const std::string& id, int Nx, int Nt) {
  if (id == "p4-parabolic-bang") return parabolic_bang(Nx, Nt);
  if (id == "heat-analytic") return heat_analytic(Nx, Nt);
  wrong_module(id, "parabolic");
}

Field2D parabolic_reference_control(const ParabolicOcp& ocp,
                                    const std::string& id) {
  Field2D u = Field2D::zero(ocp);
  if (id == "heat-analytic") return u;  // zero control, zero weight
  if (id != "p4-parabolic-bang") wrong_module(id, "parabolic");
  // upper bound where the gradient field g is <= 0, lower bound beyond;
  // the adjoint vanishes, so this is the exact discrete minimizer
  for (int k = 0; k <= ocp.Nt; ++k)
    for (int i = 0; i < ocp.Nx; ++i) {
      const double t = ocp.tnode(std::max(k, 1));
      u.values(k, i) = ocp.g(ocp.xnode(i), t) <= 0.0 ? 1.0 : -1.0;
    }
  return u;
}

}  // namespace mrlab
