#include "mrlab/mayer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mrlab/derivatives.hpp"
#include "mrlab/metric.hpp"
#include "mrlab/parallel.hpp"
#include "mrlab/rng.hpp"

namespace mrlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Layout {
  int n, m, k, N, dim;
  int X(int j) const { return j * n; }
  int U(int j) const { return (N + 1) * n + j * m; }
  int P(int j) const { return (N + 1) * n + N * m + j * n; }
  int L(int j) const { return 2 * (N + 1) * n + N * m + j * k; }
};

Layout layout(const MayerOcp& ocp, int N) {
  Layout l;
  l.n = ocp.n;
  l.m = ocp.m;
  l.k = ocp.k;
  l.N = N;
  l.dim = 2 * (N + 1) * ocp.n + N * ocp.m + N * ocp.k;
  return l;
}

VectorXd endpoints(const DiscreteQuadruple& s) {
  VectorXd q(2 * s.x.cols());
  q << s.x.row(0).transpose(), s.x.row(s.N).transpose();
  return q;
}

}  // namespace

Eigen::VectorXd MayerOcp::grad_terminal(const VectorXd& q) const {
  if (terminal_gradient) return terminal_gradient(q);
  return fd_gradient(terminal_cost, q);
}

Eigen::MatrixXd MayerOcp::hess_terminal(const VectorXd& q) const {
  if (terminal_hessian) return terminal_hessian(q);
  auto g = [this](const VectorXd& y) { return grad_terminal(y); };
  return fd_hessian_from_gradient(g, q);
}

Eigen::MatrixXd MayerOcp::jac_x(const VectorXd& x, const VectorXd& u) const {
  if (dynamics_jx) return dynamics_jx(x, u);
  auto f = [this, &u](const VectorXd& y) { return dynamics(y, u); };
  return fd_jacobian(f, x);
}

Eigen::MatrixXd MayerOcp::jac_u(const VectorXd& x, const VectorXd& u) const {
  if (dynamics_ju) return dynamics_ju(x, u);
  auto f = [this, &x](const VectorXd& v) { return dynamics(x, v); };
  return fd_jacobian(f, u);
}

Eigen::MatrixXd MayerOcp::dyn_hessian(int l, const VectorXd& x,
                                      const VectorXd& u) const {
  if (l < int(dynamics_hessians.size()) && dynamics_hessians[size_t(l)])
    return dynamics_hessians[size_t(l)](x, u);
  auto grad_l = [this, l](const VectorXd& w) {
    const VectorXd xw = w.head(n), uw = w.tail(m);
    VectorXd g(n + m);
    g.head(n) = jac_x(xw, uw).row(l).transpose();
    g.tail(m) = jac_u(xw, uw).row(l).transpose();
    return g;
  };
  VectorXd w(n + m);
  w << x, u;
  return fd_hessian_from_gradient(grad_l, w);
}

Eigen::VectorXd MayerOcp::eval_constraint(const VectorXd& u) const {
  if (k == 0) return VectorXd();
  return constraint(u);
}

Eigen::MatrixXd MayerOcp::jac_constraint(const VectorXd& u) const {
  if (k == 0) return MatrixXd(0, m);
  if (constraint_jacobian) return constraint_jacobian(u);
  return fd_jacobian(constraint, u);
}

Eigen::MatrixXd MayerOcp::con_hessian(int i, const VectorXd& u) const {
  if (i < int(constraint_hessians.size()) && constraint_hessians[size_t(i)])
    return constraint_hessians[size_t(i)](u);
  auto gi = [this, i](const VectorXd& v) {
    return VectorXd(jac_constraint(v).row(i).transpose());
  };
  return fd_hessian_from_gradient(gi, u);
}

DiscreteQuadruple DiscreteQuadruple::zero(const MayerOcp& ocp, int N) {
  DiscreteQuadruple s;
  s.N = N;
  s.x = MatrixXd::Zero(N + 1, ocp.n);
  s.u = MatrixXd::Zero(N, ocp.m);
  s.p = MatrixXd::Zero(N + 1, ocp.n);
  s.lam = MatrixXd::Zero(N, ocp.k);
  return s;
}

OcpDisturbance OcpDisturbance::zero(const MayerOcp& ocp, int N) {
  OcpDisturbance d;
  d.xi = MatrixXd::Zero(N, ocp.n);
  d.pi = MatrixXd::Zero(N, ocp.n);
  d.nu = VectorXd::Zero(2 * ocp.n);
  d.rho = MatrixXd::Zero(N, ocp.m);
  d.eta = MatrixXd::Zero(N, ocp.k);
  return d;
}

Eigen::MatrixXd forward_simulate(const MayerOcp& ocp, const VectorXd& x0,
                                 const MatrixXd& u, const MatrixXd* xi) {
  const int N = int(u.rows());
  const double h = 1.0 / N;
  MatrixXd x(N + 1, ocp.n);
  x.row(0) = x0.transpose();
  for (int j = 0; j < N; ++j) {
    VectorXd fj = ocp.dynamics(x.row(j).transpose(), u.row(j).transpose());
    if (xi) fj -= xi->row(j).transpose();
    x.row(j + 1) = x.row(j) + h * fj.transpose();
  }
  return x;
}

Eigen::MatrixXd backward_adjoint(const MayerOcp& ocp, const MatrixXd& x,
                                 const MatrixXd& u, const VectorXd& p_terminal,
                                 const MatrixXd* pi) {
  const int N = int(u.rows());
  const double h = 1.0 / N;
  MatrixXd p(N + 1, ocp.n);
  p.row(N) = p_terminal.transpose();
  for (int j = N - 1; j >= 0; --j) {
    const MatrixXd fx = ocp.jac_x(x.row(j).transpose(), u.row(j).transpose());
    VectorXd step = fx.transpose() * p.row(j + 1).transpose();
    if (pi) step -= pi->row(j).transpose();
    p.row(j) = p.row(j + 1) + h * step.transpose();
  }
  return p;
}

Eigen::MatrixXd recover_multipliers(const MayerOcp& ocp, const MatrixXd& x,
                                    const MatrixXd& u, const MatrixXd& p,
                                    double active_tol) {
  const int N = int(u.rows());
  MatrixXd lam = MatrixXd::Zero(N, ocp.k);
  if (ocp.k == 0) return lam;
  for (int j = 0; j < N; ++j) {
    const VectorXd uj = u.row(j).transpose();
    const VectorXd g = ocp.eval_constraint(uj);
    const MatrixXd gj = ocp.jac_constraint(uj);
    const VectorXd target =
        -(ocp.jac_u(x.row(j).transpose(), uj).transpose() *
          p.row(j + 1).transpose());
    std::vector<int> active;
    for (int i = 0; i < ocp.k; ++i)
      if (g(i) >= -active_tol) active.push_back(i);
    // nonnegative least squares on the active columns; drop negative
    // components until the support is feasible
    while (!active.empty()) {
      MatrixXd A(ocp.m, active.size());
      for (size_t c = 0; c < active.size(); ++c)
        A.col(Eigen::Index(c)) = gj.row(active[c]).transpose();
      const VectorXd sol =
          A.completeOrthogonalDecomposition().solve(target);
      int worst = -1;
      double worst_val = -1e-12;
      for (int c = 0; c < sol.size(); ++c)
        if (sol(c) < worst_val) {
          worst_val = sol(c);
          worst = c;
        }
      if (worst < 0) {
        for (size_t c = 0; c < active.size(); ++c)
          lam(j, active[c]) = std::max(0.0, sol(Eigen::Index(c)));
        break;
      }
      active.erase(active.begin() + worst);
    }
  }
  return lam;
}

DiscreteQuadruple consistent_start(const MayerOcp& ocp, int N,
                                   const MatrixXd& u, const VectorXd& x0) {
  if (int(u.rows()) != N || int(u.cols()) != ocp.m)
    throw std::invalid_argument("consistent_start: control grid mismatch");
  DiscreteQuadruple s = DiscreteQuadruple::zero(ocp, N);
  s.u = u;
  s.x = forward_simulate(ocp, x0, u);
  VectorXd q(2 * ocp.n);
  q << s.x.row(0).transpose(), s.x.row(N).transpose();
  s.p = backward_adjoint(ocp, s.x, s.u, ocp.grad_terminal(q).tail(ocp.n));
  if (ocp.k > 0) s.lam = recover_multipliers(ocp, s.x, s.u, s.p);
  return s;
}

namespace {

// Minimal eta defect per cell given the multiplier pattern; shift allows
// measuring the residual relative to a target disturbance.
void eta_defect(const MayerOcp& ocp, const MatrixXd& u, const MatrixXd& lam,
                const MatrixXd* shift, MatrixXd& eta, bool& infeasible) {
  const int N = int(u.rows());
  eta = MatrixXd::Zero(N, ocp.k);
  for (int j = 0; j < N; ++j) {
    const VectorXd g = ocp.eval_constraint(u.row(j).transpose());
    for (int i = 0; i < ocp.k; ++i) {
      const double gi = g(i) - (shift ? (*shift)(j, i) : 0.0);
      if (lam(j, i) > 0.0)
        eta(j, i) = gi;
      else if (lam(j, i) == 0.0)
        eta(j, i) = std::max(gi, 0.0);
      else {
        eta(j, i) = gi;
        infeasible = true;
      }
    }
  }
}

OcpResidual residual_relative(const MayerOcp& ocp, const DiscreteQuadruple& s,
                              const OcpDisturbance* d) {
  const int N = s.N;
  const double h = s.h();
  OcpResidual r;
  r.defect = OcpDisturbance::zero(ocp, N);
  for (int j = 0; j < N; ++j) {
    const VectorXd xj = s.x.row(j).transpose();
    const VectorXd uj = s.u.row(j).transpose();
    const VectorXd pj1 = s.p.row(j + 1).transpose();
    r.defect.xi.row(j) = -(s.x.row(j + 1) - s.x.row(j)) / h +
                         ocp.dynamics(xj, uj).transpose();
    r.defect.pi.row(j) = (s.p.row(j + 1) - s.p.row(j)) / h +
                         (ocp.jac_x(xj, uj).transpose() * pj1).transpose();
    r.defect.rho.row(j) =
        (ocp.jac_u(xj, uj).transpose() * pj1 +
         ocp.jac_constraint(uj).transpose() * s.lam.row(j).transpose())
            .transpose();
  }
  const VectorXd q = endpoints(s);
  const VectorXd phi_grad = ocp.grad_terminal(q);
  if (ocp.boundary == MayerOcp::Boundary::FixedInitial)
    r.defect.nu.head(ocp.n) = s.x.row(0).transpose() - ocp.x_init;
  else
    r.defect.nu.head(ocp.n) = -s.p.row(0).transpose() - phi_grad.head(ocp.n);
  r.defect.nu.tail(ocp.n) = s.p.row(s.N).transpose() - phi_grad.tail(ocp.n);

  eta_defect(ocp, s.u, s.lam, d ? &d->eta : nullptr, r.defect.eta,
             r.multiplier_infeasible);
  if (d) {
    r.defect.xi -= d->xi;
    r.defect.pi -= d->pi;
    r.defect.nu -= d->nu;
    r.defect.rho -= d->rho;
    // eta already shifted inside the pattern computation
  }

  const MetricSpec l1 = MetricSpec::grid(NormKind::L1, h);
  const MetricSpec l2 = MetricSpec::grid(NormKind::L2, h);
  const MetricSpec li = MetricSpec::grid(NormKind::Linf, h);
  const double common = eval_norm(r.defect.xi, l1) + eval_norm(r.defect.pi, l1) +
                        r.defect.nu.norm();
  if (r.multiplier_infeasible) {
    r.strong_norm = r.weak_norm = kInf;
    return r;
  }
  r.strong_norm =
      common + eval_norm(r.defect.rho, li) +
      (ocp.k > 0 ? eval_norm(r.defect.eta, li) : 0.0);
  r.weak_norm = common + eval_norm(r.defect.rho, l2) +
                (ocp.k > 0 ? eval_norm(r.defect.eta, l2) : 0.0);
  return r;
}

}  // namespace

OcpResidual pmp_residual(const MayerOcp& ocp, const DiscreteQuadruple& s) {
  return residual_relative(ocp, s, nullptr);
}

Eigen::VectorXd pack_quadruple(const DiscreteQuadruple& s) {
  const int n = int(s.x.cols()), m = int(s.u.cols()), k = int(s.lam.cols());
  const int N = s.N;
  VectorXd z(2 * (N + 1) * n + N * m + N * k);
  int off = 0;
  for (int j = 0; j <= N; ++j, off += n) z.segment(off, n) = s.x.row(j);
  for (int j = 0; j < N; ++j, off += m) z.segment(off, m) = s.u.row(j);
  for (int j = 0; j <= N; ++j, off += n) z.segment(off, n) = s.p.row(j);
  for (int j = 0; j < N; ++j, off += k) z.segment(off, k) = s.lam.row(j);
  return z;
}

DiscreteQuadruple unpack_quadruple(const MayerOcp& ocp, int N,
                                   const VectorXd& z) {
  DiscreteQuadruple s = DiscreteQuadruple::zero(ocp, N);
  const Layout lay = layout(ocp, N);
  for (int j = 0; j <= N; ++j) s.x.row(j) = z.segment(lay.X(j), ocp.n);
  for (int j = 0; j < N; ++j) s.u.row(j) = z.segment(lay.U(j), ocp.m);
  for (int j = 0; j <= N; ++j) s.p.row(j) = z.segment(lay.P(j), ocp.n);
  for (int j = 0; j < N; ++j) s.lam.row(j) = z.segment(lay.L(j), ocp.k);
  return s;
}

Eigen::VectorXd pack_ocp_disturbance(const MayerOcp& ocp, int N,
                                     const OcpDisturbance& d) {
  const Layout lay = layout(ocp, N);
  VectorXd rhs = VectorXd::Zero(lay.dim);
  rhs.segment(lay.X(0), ocp.n) = d.nu.head(ocp.n);
  for (int j = 1; j <= N; ++j)
    rhs.segment(lay.X(j), ocp.n) = d.xi.row(j - 1);
  for (int j = 0; j < N; ++j) rhs.segment(lay.U(j), ocp.m) = d.rho.row(j);
  for (int j = 0; j < N; ++j) rhs.segment(lay.P(j), ocp.n) = d.pi.row(j);
  rhs.segment(lay.P(N), ocp.n) = d.nu.tail(ocp.n);
  for (int j = 0; j < N; ++j) rhs.segment(lay.L(j), ocp.k) = -d.eta.row(j);
  return rhs;
}

GeneralizedEquation to_generalized_equation(const MayerOcp& ocp, int N) {
  const Layout lay = layout(ocp, N);
  const double h = 1.0 / N;
  GeneralizedEquation geq;
  geq.dim = lay.dim;
  geq.cone = ConeSpec::orthant(N * ocp.k);
  geq.cone_offset = lay.L(0);

  geq.smooth = [&ocp, lay, h](const VectorXd& z) {
    const int n = lay.n, m = lay.m, N = lay.N;
    VectorXd out = VectorXd::Zero(lay.dim);
    const DiscreteQuadruple s = unpack_quadruple(ocp, N, z);
    const VectorXd q = endpoints(s);
    const VectorXd phi_grad = ocp.grad_terminal(q);
    if (ocp.boundary == MayerOcp::Boundary::FixedInitial)
      out.segment(lay.X(0), n) = s.x.row(0).transpose() - ocp.x_init;
    else
      out.segment(lay.X(0), n) =
          -s.p.row(0).transpose() - phi_grad.head(n);
    for (int j = 1; j <= N; ++j) {
      const VectorXd f = ocp.dynamics(s.x.row(j - 1).transpose(),
                                      s.u.row(j - 1).transpose());
      out.segment(lay.X(j), n) =
          -(s.x.row(j) - s.x.row(j - 1)).transpose() / h + f;
    }
    for (int j = 0; j < N; ++j) {
      const VectorXd xj = s.x.row(j).transpose();
      const VectorXd uj = s.u.row(j).transpose();
      out.segment(lay.U(j), m) =
          ocp.jac_u(xj, uj).transpose() * s.p.row(j + 1).transpose() +
          ocp.jac_constraint(uj).transpose() * s.lam.row(j).transpose();
      out.segment(lay.P(j), n) =
          (s.p.row(j + 1) - s.p.row(j)).transpose() / h +
          ocp.jac_x(xj, uj).transpose() * s.p.row(j + 1).transpose();
      if (ocp.k > 0)
        out.segment(lay.L(j), ocp.k) =
            -ocp.eval_constraint(uj);
    }
    out.segment(lay.P(N), n) = s.p.row(N).transpose() - phi_grad.tail(n);
    return out;
  };

  geq.jacobian_sparse = [&ocp, lay, h](const VectorXd& z) {
    const int n = lay.n, m = lay.m, k = lay.k, N = lay.N;
    const DiscreteQuadruple s = unpack_quadruple(ocp, N, z);
    std::vector<Eigen::Triplet<double>> T;
    T.reserve(size_t(lay.dim) * size_t(4 + n + m));
    auto add_block = [&T](int r0, int c0, const MatrixXd& B) {
      for (int r = 0; r < B.rows(); ++r)
        for (int c = 0; c < B.cols(); ++c)
          if (B(r, c) != 0.0) T.emplace_back(r0 + r, c0 + c, B(r, c));
    };
    const MatrixXd In = MatrixXd::Identity(n, n);
    const VectorXd q = endpoints(s);

    if (ocp.boundary == MayerOcp::Boundary::FixedInitial) {
      add_block(lay.X(0), lay.X(0), In);
    } else {
      const MatrixXd Phi = ocp.hess_terminal(q);
      add_block(lay.X(0), lay.P(0), -In);
      add_block(lay.X(0), lay.X(0), -Phi.topLeftCorner(n, n));
      add_block(lay.X(0), lay.X(N), -Phi.topRightCorner(n, n));
    }
    {
      const MatrixXd Phi = ocp.hess_terminal(q);
      add_block(lay.P(N), lay.P(N), In);
      add_block(lay.P(N), lay.X(0), -Phi.bottomLeftCorner(n, n));
      add_block(lay.P(N), lay.X(N), -Phi.bottomRightCorner(n, n));
    }

    for (int j = 0; j < N; ++j) {
      const VectorXd xj = s.x.row(j).transpose();
      const VectorXd uj = s.u.row(j).transpose();
      const VectorXd pj1 = s.p.row(j + 1).transpose();
      const MatrixXd fx = ocp.jac_x(xj, uj);
      const MatrixXd fu = ocp.jac_u(xj, uj);
      const MatrixXd gj = ocp.jac_constraint(uj);

      // state defect row X(j+1)
      add_block(lay.X(j + 1), lay.X(j + 1), -In / h);
      add_block(lay.X(j + 1), lay.X(j), In / h + fx);
      add_block(lay.X(j + 1), lay.U(j), fu);

      // second derivatives of <p, f> in w = (x, u)
      MatrixXd Hpf = MatrixXd::Zero(n + m, n + m);
      for (int l = 0; l < n; ++l)
        if (pj1(l) != 0.0) Hpf += pj1(l) * ocp.dyn_hessian(l, xj, uj);
      MatrixXd Guu = MatrixXd::Zero(m, m);
      for (int i = 0; i < k; ++i)
        if (s.lam(j, i) != 0.0) Guu += s.lam(j, i) * ocp.con_hessian(i, uj);

      // stationarity row U(j)
      add_block(lay.U(j), lay.X(j), Hpf.bottomLeftCorner(m, n));
      add_block(lay.U(j), lay.U(j), Hpf.bottomRightCorner(m, m) + Guu);
      add_block(lay.U(j), lay.P(j + 1), fu.transpose());
      if (k > 0) add_block(lay.U(j), lay.L(j), gj.transpose());

      // adjoint defect row P(j)
      add_block(lay.P(j), lay.P(j), -In / h);
      add_block(lay.P(j), lay.P(j + 1), In / h + fx.transpose());
      add_block(lay.P(j), lay.X(j), Hpf.topLeftCorner(n, n));
      add_block(lay.P(j), lay.U(j), Hpf.topRightCorner(n, m));

      // complementarity rows L(j)
      if (k > 0) add_block(lay.L(j), lay.U(j), -gj);
    }
    Eigen::SparseMatrix<double> J(lay.dim, lay.dim);
    J.setFromTriplets(T.begin(), T.end());
    return J;
  };
  return geq;
}

PmpSolveResult solve_pmp(const MayerOcp& ocp, const DiscreteQuadruple& start,
                         const OcpDisturbance& disturbance, double tol,
                         int max_iterations) {
  const int N = start.N;
  const GeneralizedEquation geq = to_generalized_equation(ocp, N);
  NewtonOptions opts;
  opts.tol = tol / 5.0;  // Euclidean bound implying the strong-norm target
  opts.max_iterations = max_iterations;
  const auto res = josephy_newton(geq, pack_quadruple(start),
                                  pack_ocp_disturbance(ocp, N, disturbance),
                                  opts);
  PmpSolveResult out;
  out.s = unpack_quadruple(ocp, N, res.solution);
  out.residual_history = res.residual_history;
  out.error = res.error;
  out.strong_residual =
      residual_relative(ocp, out.s, &disturbance).strong_norm;
  out.converged = res.converged && out.strong_residual <= tol;
  return out;
}

ConeQuadraticResult coercivity_on_cone(const MayerOcp& ocp,
                                       const DiscreteQuadruple& s, double Delta,
                                       double active_tol) {
  const int N = s.N, n = ocp.n, m = ocp.m;
  const double h = s.h();
  const bool free_x0 = ocp.boundary == MayerOcp::Boundary::BothFree;
  const int nv = (free_x0 ? n : 0) + N * m;
  const int u_off = free_x0 ? n : 0;

  MatrixXd H = MatrixXd::Zero(nv, nv);
  MatrixXd X = MatrixXd::Zero(n, nv);  // linearized state map at cell j
  if (free_x0) X.leftCols(n) = MatrixXd::Identity(n, n);
  MatrixXd X0 = X;

  std::vector<Eigen::RowVectorXd> eq_rows, in_rows;
  for (int j = 0; j < N; ++j) {
    const VectorXd xj = s.x.row(j).transpose();
    const VectorXd uj = s.u.row(j).transpose();
    const VectorXd pj1 = s.p.row(j + 1).transpose();

    MatrixXd Hw = MatrixXd::Zero(n + m, n + m);
    for (int l = 0; l < n; ++l)
      if (pj1(l) != 0.0) Hw += pj1(l) * ocp.dyn_hessian(l, xj, uj);
    for (int i = 0; i < ocp.k; ++i)
      if (s.lam(j, i) != 0.0)
        Hw.bottomRightCorner(m, m) += s.lam(j, i) * ocp.con_hessian(i, uj);

    MatrixXd W_j(n + m, nv);  // (dx_j, du_j) as a function of the variables
    W_j.topRows(n) = X;
    W_j.bottomRows(m).setZero();
    W_j.block(n, u_off + j * m, m, m) = MatrixXd::Identity(m, m);
    H += h * W_j.transpose() * Hw * W_j;

    if (ocp.k > 0) {
      const VectorXd g = ocp.eval_constraint(uj);
      const MatrixXd gj = ocp.jac_constraint(uj);
      for (int i = 0; i < ocp.k; ++i) {
        if (g(i) < -active_tol) continue;
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nv);
        row.segment(u_off + j * m, m) = gj.row(i);
        if (s.lam(j, i) > Delta)
          eq_rows.push_back(row);
        else
          in_rows.push_back(row);
      }
    }

    const MatrixXd fx = ocp.jac_x(xj, uj);
    const MatrixXd fu = ocp.jac_u(xj, uj);
    MatrixXd Xn = X + h * fx * X;
    Xn.middleCols(u_off + j * m, m) += h * fu;
    X = Xn;
  }

  // terminal-cost curvature through the endpoint map (dx0, dxN)
  MatrixXd Q(2 * n, nv);
  Q.topRows(n) = X0;
  Q.bottomRows(n) = X;
  H += Q.transpose() * ocp.hess_terminal(endpoints(s)) * Q;

  MatrixXd W = MatrixXd::Zero(nv, nv);
  if (free_x0) W.topLeftCorner(n, n) = MatrixXd::Identity(n, n);
  W.bottomRightCorner(N * m, N * m) = h * MatrixXd::Identity(N * m, N * m);

  MatrixXd E(eq_rows.size(), nv), C(in_rows.size(), nv);
  for (size_t r = 0; r < eq_rows.size(); ++r)
    E.row(Eigen::Index(r)) = eq_rows[r];
  for (size_t r = 0; r < in_rows.size(); ++r)
    C.row(Eigen::Index(r)) = in_rows[r];
  return cone_quadratic_minimum(H, W, E, C);
}

namespace {

double disturbance_norm(const OcpDisturbance& d, double h, bool strong) {
  const MetricSpec l1 = MetricSpec::grid(NormKind::L1, h);
  const MetricSpec tail = strong ? MetricSpec::grid(NormKind::Linf, h)
                                 : MetricSpec::grid(NormKind::L2, h);
  double norm = eval_norm(d.xi, l1) + eval_norm(d.pi, l1) + d.nu.norm() +
                eval_norm(d.rho, tail);
  if (d.eta.cols() > 0) norm += eval_norm(d.eta, tail);
  return norm;
}

}  // namespace

std::vector<PerturbationRecord> smsr_experiment(const MayerOcp& ocp,
                                                const DiscreteQuadruple& s,
                                                const OcpSweepParams& params) {
  if (params.magnitudes.empty())
    throw std::invalid_argument("smsr_experiment: no magnitudes");
  if (!params.perturb_xi && !params.perturb_pi && !params.perturb_nu &&
      !params.perturb_rho && !params.perturb_eta)
    throw std::invalid_argument("smsr_experiment: no disturbance block enabled");
  const int N = s.N;
  const double h = s.h();
  const int total =
      int(params.magnitudes.size()) * params.directions_per_magnitude;
  std::vector<PerturbationRecord> records(static_cast<size_t>(total));
  parallel_for(total, params.jobs, [&](int idx) {
    const double mag =
        params.magnitudes[size_t(idx / params.directions_per_magnitude)];
    SplitMix64 g(SplitMix64::derive(params.seed, std::uint64_t(idx)));
    OcpDisturbance d = OcpDisturbance::zero(ocp, N);
    auto fill = [&g](MatrixXd& mat) {
      for (int r = 0; r < mat.rows(); ++r)
        for (int c = 0; c < mat.cols(); ++c) mat(r, c) = g.next_symmetric();
    };
    if (params.perturb_xi) fill(d.xi);
    if (params.perturb_pi) fill(d.pi);
    if (params.perturb_nu)
      for (int i = 0; i < d.nu.size(); ++i) d.nu(i) = g.next_symmetric();
    if (params.perturb_rho) fill(d.rho);
    if (params.perturb_eta) fill(d.eta);
    const double norm = disturbance_norm(d, h, true);
    const double c = mag / norm;
    d.xi *= c;
    d.pi *= c;
    d.nu *= c;
    d.rho *= c;
    d.eta *= c;

    const auto sol =
        solve_pmp(ocp, s, d, std::max(params.newton_tol, 1e-13),
                  params.max_iterations);
    PerturbationRecord rec;
    rec.strong_image_dist = mag;
    rec.weak_image_dist = disturbance_norm(d, h, false);
    const MetricSpec w11 = MetricSpec::grid(NormKind::W11, h);
    const MetricSpec l2 = MetricSpec::grid(NormKind::L2, h);
    rec.weak_domain_dist =
        eval_norm(MatrixXd(sol.s.x - s.x), w11) +
        eval_norm(MatrixXd(sol.s.u - s.u), l2) +
        eval_norm(MatrixXd(sol.s.p - s.p), w11) +
        (ocp.k > 0 ? eval_norm(MatrixXd(sol.s.lam - s.lam), l2) : 0.0);
    rec.solver_converged = sol.converged;
    records[size_t(idx)] = rec;
  });
  return records;
}

}  // namespace mrlab
