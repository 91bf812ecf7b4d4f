#include "mrlab/affine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "mrlab/cone.hpp"
#include "mrlab/derivatives.hpp"
#include "mrlab/metric.hpp"
#include "mrlab/parallel.hpp"
#include "mrlab/rng.hpp"

namespace mrlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kActiveTol = 1e-9;

}  // namespace

ControlSet ControlSet::box(VectorXd lo, VectorXd hi) {
  if (lo.size() != hi.size() || lo.size() == 0 ||
      (lo.array() > hi.array()).any())
    throw std::invalid_argument("ControlSet::box: invalid bounds");
  ControlSet U;
  U.kind = Kind::Box;
  U.lo = std::move(lo);
  U.hi = std::move(hi);
  U.edges = MatrixXd::Identity(U.lo.size(), U.lo.size());
  return U;
}

ControlSet ControlSet::polytope(MatrixXd vertices, MatrixXd edges) {
  if (vertices.cols() == 0 || vertices.rows() == 0)
    throw std::invalid_argument("ControlSet::polytope: no vertices");
  if (vertices.cols() > 16)
    throw std::invalid_argument("ControlSet::polytope: too many vertices");
  if (edges.rows() != vertices.rows() || edges.cols() == 0)
    throw std::invalid_argument("ControlSet::polytope: bad edge matrix");
  for (int c = 0; c < edges.cols(); ++c) {
    const double len = edges.col(c).norm();
    if (len < 1e-12)
      throw std::invalid_argument("ControlSet::polytope: zero edge vector");
    edges.col(c) /= len;
  }
  ControlSet U;
  U.kind = Kind::Polytope;
  U.vertices = std::move(vertices);
  U.edges = std::move(edges);
  return U;
}

int ControlSet::dim() const {
  return kind == Kind::Box ? int(lo.size()) : int(vertices.rows());
}

bool ControlSet::contains(const VectorXd& u, double tol) const {
  if (u.size() != dim()) return false;
  if (kind == Kind::Box)
    return (u.array() >= lo.array() - tol).all() &&
           (u.array() <= hi.array() + tol).all();
  const ConeSpec hull = ConeSpec::polytope(vertices);
  return !cone_residual(hull, u, VectorXd::Zero(u.size())).primal_infeasible;
}

std::vector<VectorXd> ControlSet::vertex_list() const {
  if (kind == Kind::Polytope) {
    std::vector<VectorXd> out;
    for (int c = 0; c < vertices.cols(); ++c) out.push_back(vertices.col(c));
    return out;
  }
  const int m = int(lo.size());
  if (m > 16)
    throw std::invalid_argument("ControlSet: too many box corners");
  std::vector<VectorXd> out;
  out.reserve(size_t(1) << m);
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    VectorXd v(m);
    for (int i = 0; i < m; ++i) v(i) = (mask >> i) & 1u ? hi(i) : lo(i);
    out.push_back(std::move(v));
  }
  return out;
}

VectorXd AffineOcp::dynamics(double t, const VectorXd& x,
                             const VectorXd& u) const {
  return a(t, x) + B(t, x) * u;
}

MatrixXd AffineOcp::jac_x_dynamics(double t, const VectorXd& x,
                                   const VectorXd& u) const {
  if (dyn_jx) return dyn_jx(t, x, u);
  auto f = [this, t, &u](const VectorXd& y) { return dynamics(t, y, u); };
  return fd_jacobian(f, x);
}

double AffineOcp::hamiltonian(double t, const VectorXd& x, const VectorXd& p,
                              const VectorXd& u) const {
  return w(t, x) + d(t, x).dot(u) + p.dot(dynamics(t, x, u));
}

VectorXd AffineOcp::hamiltonian_grad_x(double t, const VectorXd& x,
                                       const VectorXd& p,
                                       const VectorXd& u) const {
  if (grad_x_H) return grad_x_H(t, x, p, u);
  auto f = [this, t, &p, &u](const VectorXd& y) {
    return hamiltonian(t, y, p, u);
  };
  return fd_gradient(f, x);
}

MatrixXd AffineOcp::hamiltonian_hess_xx(double t, const VectorXd& x,
                                        const VectorXd& p,
                                        const VectorXd& u) const {
  if (hess_xx_H) return hess_xx_H(t, x, p, u);
  auto g = [this, t, &p, &u](const VectorXd& y) {
    return hamiltonian_grad_x(t, y, p, u);
  };
  return fd_hessian_from_gradient(g, x);
}

MatrixXd AffineOcp::hamiltonian_hess_ux(double t, const VectorXd& x,
                                        const VectorXd& p) const {
  if (hess_ux_H) return hess_ux_H(t, x, p);
  auto sig = [this, t, &p](const VectorXd& y) {
    return VectorXd(B(t, y).transpose() * p + d(t, y));
  };
  return fd_jacobian(sig, x);
}

AffineTriple AffineTriple::zero(const AffineOcp& ocp, int N) {
  AffineTriple s;
  s.N = N;
  s.T = ocp.T;
  s.x = MatrixXd::Zero(N + 1, ocp.n);
  s.p = MatrixXd::Zero(N + 1, ocp.n);
  s.u = MatrixXd::Zero(N, ocp.m);
  return s;
}

AffineDisturbance AffineDisturbance::zero(const AffineOcp& ocp, int N) {
  AffineDisturbance d;
  d.xi = MatrixXd::Zero(N, ocp.n);
  d.pi = MatrixXd::Zero(N, ocp.n);
  d.rho = MatrixXd::Zero(N + 1, ocp.m);
  return d;
}

double disturbance_strong_norm(const AffineDisturbance& d, double h) {
  return eval_norm(d.xi, MetricSpec::grid(NormKind::Linf, h)) +
         eval_norm(d.pi, MetricSpec::grid(NormKind::Linf, h)) +
         eval_norm(d.rho, MetricSpec::grid(NormKind::W1inf, h));
}

double disturbance_weak_norm(const AffineDisturbance& d, double h) {
  return eval_norm(d.xi, MetricSpec::grid(NormKind::L1, h)) +
         eval_norm(d.pi, MetricSpec::grid(NormKind::L1, h)) +
         eval_norm(d.rho, MetricSpec::grid(NormKind::Linf, h));
}

Eigen::MatrixXd affine_forward(const AffineOcp& ocp, const MatrixXd& u,
                               const MatrixXd* xi) {
  const int N = int(u.rows());
  const double h = ocp.T / N;
  MatrixXd x(N + 1, ocp.n);
  x.row(0) = ocp.x0.transpose();
  for (int j = 0; j < N; ++j) {
    VectorXd f = ocp.dynamics(j * h, x.row(j).transpose(), u.row(j).transpose());
    if (xi) f -= xi->row(j).transpose();
    x.row(j + 1) = x.row(j) + h * f.transpose();
  }
  return x;
}

Eigen::MatrixXd affine_backward(const AffineOcp& ocp, const MatrixXd& x,
                                const MatrixXd& u, const MatrixXd* pi) {
  const int N = int(u.rows());
  const double h = ocp.T / N;
  MatrixXd p = MatrixXd::Zero(N + 1, ocp.n);
  for (int j = N - 1; j >= 0; --j) {
    VectorXd step = ocp.hamiltonian_grad_x(
        j * h, x.row(j).transpose(), p.row(j + 1).transpose(),
        u.row(j).transpose());
    if (pi) step -= pi->row(j).transpose();
    p.row(j) = p.row(j + 1) + h * step.transpose();
  }
  return p;
}

SwitchingFunction switching_function(const AffineOcp& ocp,
                                     const AffineTriple& s) {
  if (int(s.x.cols()) != ocp.n || int(s.u.cols()) != ocp.m)
    throw std::invalid_argument("switching_function: dimension mismatch");
  const int N = s.N;
  const double h = s.h();
  SwitchingFunction sf;
  sf.T = s.T;
  sf.values.resize(N + 1, ocp.m);
  for (int j = 0; j <= N; ++j) {
    const VectorXd xj = s.x.row(j).transpose();
    sf.values.row(j) =
        (ocp.B(j * h, xj).transpose() * s.p.row(j).transpose() +
         ocp.d(j * h, xj))
            .transpose();
  }
  sf.slopes = (sf.values.bottomRows(N) - sf.values.topRows(N)) / h;
  return sf;
}

Eigen::VectorXd pointwise_minimizer(const VectorXd& sigma, const ControlSet& U,
                                    const VectorXd* prev) {
  if (sigma.size() != U.dim())
    throw std::invalid_argument("pointwise_minimizer: dimension mismatch");
  if (U.kind == ControlSet::Kind::Box) {
    VectorXd u(sigma.size());
    for (int i = 0; i < sigma.size(); ++i) {
      if (sigma(i) > 0.0)
        u(i) = U.lo(i);
      else if (sigma(i) < 0.0)
        u(i) = U.hi(i);
      else
        u(i) = prev ? (*prev)(i) : U.lo(i);
    }
    return u;
  }
  int best = 0;
  double best_val = sigma.dot(U.vertices.col(0));
  for (int c = 1; c < U.vertices.cols(); ++c) {
    const double val = sigma.dot(U.vertices.col(c));
    if (val < best_val) {
      best = c;
      best_val = val;
    }
  }
  return U.vertices.col(best);
}

namespace {

// min |r| over r such that u minimizes <sigma - r, .> over the hull;
// active-set enumeration on the vertex-difference constraints.
double polytope_stat_dist(const MatrixXd& V, const VectorXd& sigma,
                          const VectorXd& u) {
  std::vector<VectorXd> rows;
  std::vector<double> rhs;
  for (int c = 0; c < V.cols(); ++c) {
    const VectorXd delta = V.col(c) - u;
    if (delta.norm() < 1e-12) continue;
    rows.push_back(delta);
    rhs.push_back(sigma.dot(delta));
  }
  const int K = int(rows.size());
  if (K == 0) return 0.0;
  bool zero_ok = true;
  for (double b : rhs)
    if (b < 0.0) zero_ok = false;
  if (zero_ok) return 0.0;

  const int m = int(sigma.size());
  double best = sigma.norm();  // r = sigma is always feasible
  for (std::uint32_t mask = 1; mask < (1u << K); ++mask) {
    if (__builtin_popcount(mask) > m) continue;
    std::vector<int> S;
    for (int c = 0; c < K; ++c)
      if ((mask >> c) & 1u) S.push_back(c);
    MatrixXd A(S.size(), m);
    VectorXd b(S.size());
    for (size_t r = 0; r < S.size(); ++r) {
      A.row(Eigen::Index(r)) = rows[S[r]].transpose();
      b(Eigen::Index(r)) = rhs[S[r]];
    }
    const MatrixXd G = A * A.transpose();
    const VectorXd mu = G.completeOrthogonalDecomposition().solve(-b);
    if ((mu.array() < -1e-10).any()) continue;
    const VectorXd r = -A.transpose() * mu;
    bool feasible = true;
    for (int c = 0; c < K && feasible; ++c)
      if (rows[c].dot(r) > rhs[c] + 1e-9 * (1.0 + r.norm())) feasible = false;
    if (feasible) best = std::min(best, r.norm());
  }
  return best;
}

}  // namespace

double stationarity_distance(const VectorXd& sigma, const ControlSet& U,
                             const VectorXd& u) {
  if (sigma.size() != U.dim() || u.size() != U.dim())
    throw std::invalid_argument("stationarity_distance: dimension mismatch");
  if (U.kind == ControlSet::Kind::Polytope)
    return polytope_stat_dist(U.vertices, sigma, u);
  double sq = 0.0;
  for (int i = 0; i < sigma.size(); ++i) {
    if (U.hi(i) - U.lo(i) < 1e-15) continue;  // pinned component
    double di;
    if (u(i) <= U.lo(i) + kActiveTol)
      di = std::max(0.0, -sigma(i));
    else if (u(i) >= U.hi(i) - kActiveTol)
      di = std::max(0.0, sigma(i));
    else
      di = std::abs(sigma(i));
    sq += di * di;
  }
  return std::sqrt(sq);
}

AffineResidual affine_residual(const AffineOcp& ocp, const AffineTriple& s,
                               const AffineDisturbance* d) {
  const int N = s.N;
  const double h = s.h();
  AffineResidual r;
  r.xi_defect.resize(N, ocp.n);
  r.pi_defect.resize(N, ocp.n);
  r.stationarity.resize(N);
  const SwitchingFunction sf = switching_function(ocp, s);
  for (int j = 0; j < N; ++j) {
    const VectorXd xj = s.x.row(j).transpose();
    const VectorXd uj = s.u.row(j).transpose();
    r.xi_defect.row(j) = -(s.x.row(j + 1) - s.x.row(j)) / h +
                         ocp.dynamics(j * h, xj, uj).transpose();
    r.pi_defect.row(j) =
        (s.p.row(j + 1) - s.p.row(j)) / h +
        ocp.hamiltonian_grad_x(j * h, xj, s.p.row(j + 1).transpose(), uj)
            .transpose();
    VectorXd sig = sf.values.row(j).transpose();
    if (d) {
      r.xi_defect.row(j) -= d->xi.row(j);
      r.pi_defect.row(j) -= d->pi.row(j);
      sig -= d->rho.row(j).transpose();
    }
    r.stationarity(j) = stationarity_distance(sig, ocp.U, uj);
    if (!ocp.U.contains(uj)) r.control_feasible = false;
  }
  if (!r.control_feasible) {
    r.strong_norm = r.weak_norm = kInf;
    return r;
  }
  const MetricSpec l1 = MetricSpec::grid(NormKind::L1, h);
  const MetricSpec li = MetricSpec::grid(NormKind::Linf, h);
  const double stat_sup = r.stationarity.maxCoeff();
  r.strong_norm =
      eval_norm(r.xi_defect, li) + eval_norm(r.pi_defect, li) + stat_sup;
  r.weak_norm =
      eval_norm(r.xi_defect, l1) + eval_norm(r.pi_defect, l1) + stat_sup;
  return r;
}

namespace {

// per-cell fingerprint of a minimizer assignment, used for cycle detection
std::vector<std::int8_t> control_fingerprint(const MatrixXd& u,
                                             const ControlSet& U) {
  std::vector<std::int8_t> fp;
  fp.reserve(size_t(u.rows()) * size_t(u.cols()));
  for (int j = 0; j < u.rows(); ++j) {
    if (U.kind == ControlSet::Kind::Box) {
      for (int i = 0; i < u.cols(); ++i) {
        std::int8_t code = 2;
        if (u(j, i) == U.lo(i)) code = 0;
        else if (u(j, i) == U.hi(i)) code = 1;
        fp.push_back(code);
      }
    } else {
      std::int8_t code = -1;
      for (int c = 0; c < U.vertices.cols(); ++c)
        if ((u.row(j).transpose() - U.vertices.col(c)).norm() == 0.0) {
          code = std::int8_t(c);
          break;
        }
      fp.push_back(code);
    }
  }
  return fp;
}

bool triple_bounded(const AffineTriple& s, double bound) {
  const double h = s.h();
  const auto sup = [](const MatrixXd& g) {
    return g.rowwise().norm().maxCoeff();
  };
  const MatrixXd dx = (s.x.bottomRows(s.N) - s.x.topRows(s.N)) / h;
  const MatrixXd dp = (s.p.bottomRows(s.N) - s.p.topRows(s.N)) / h;
  return sup(s.x) <= bound && sup(dx) <= bound && sup(s.p) <= bound &&
         sup(dp) <= bound;
}

}  // namespace

AffineSolveResult solve_affine_pmp(const AffineOcp& ocp, int N,
                                   const MatrixXd& start_u,
                                   const AffineDisturbance* d,
                                   const AffineSolveOptions& opts) {
  if (int(start_u.rows()) != N || int(start_u.cols()) != ocp.m)
    throw std::invalid_argument("solve_affine_pmp: start grid mismatch");
  for (int j = 0; j < N; ++j)
    if (!ocp.U.contains(start_u.row(j).transpose()))
      throw std::invalid_argument("solve_affine_pmp: start control not admissible");
  double theta = std::clamp(opts.relaxation, 1e-6, 1.0);
  int halvings = 0;

  AffineSolveResult out;
  out.s = AffineTriple::zero(ocp, N);
  out.s.u = start_u;
  double best_res = kInf;
  double best_since_reset = kInf;
  std::set<std::vector<std::int8_t>> seen;
  std::vector<std::int8_t> last_fp;

  MatrixXd u = start_u;
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    out.sweeps = sweep;
    AffineTriple cur;
    cur.N = N;
    cur.T = ocp.T;
    cur.u = u;
    cur.x = affine_forward(ocp, u, d ? &d->xi : nullptr);
    cur.p = affine_backward(ocp, cur.x, u, d ? &d->pi : nullptr);
    const SwitchingFunction sf = switching_function(ocp, cur);

    // state and adjoint defects vanish by construction; the residual is
    // the worst pointwise stationarity distance
    double res = 0.0;
    for (int j = 0; j < N; ++j) {
      VectorXd sig = sf.values.row(j).transpose();
      if (d) sig -= d->rho.row(j).transpose();
      res = std::max(res,
                     stationarity_distance(sig, ocp.U, u.row(j).transpose()));
    }
    if (res < best_res) {
      best_res = res;
      out.s = cur;
      out.sigma = sf;
      out.residual = res;
    }
    best_since_reset = std::min(best_since_reset, res);
    if (res <= opts.tol) {
      out.converged = true;
      break;
    }

    MatrixXd u_min(N, ocp.m);
    for (int j = 0; j < N; ++j) {
      VectorXd sig = sf.values.row(j).transpose();
      if (d) sig -= d->rho.row(j).transpose();
      VectorXd prev;
      if (j > 0) prev = u_min.row(j - 1).transpose();
      u_min.row(j) =
          pointwise_minimizer(sig, ocp.U, j > 0 ? &prev : nullptr).transpose();
    }

    const auto fp = control_fingerprint(u_min, ocp.U);
    const bool repeat = fp != last_fp && seen.count(fp) > 0;
    if (repeat && res >= 0.999 * best_since_reset) {
      if (++halvings > 10) {
        out.error = "sweep cycling persists after 10 relaxation halvings";
        break;
      }
      theta *= 0.5;
      seen.clear();
      best_since_reset = res;
    }
    seen.insert(fp);
    last_fp = fp;
    u = (1.0 - theta) * u + theta * u_min;
  }
  if (!out.converged && out.error.empty())
    out.error = "sweep limit reached before the residual tolerance";
  out.bound_exceeded = !triple_bounded(out.s, ocp.bound);
  return out;
}

double gamma_functional(const AffineOcp& ocp, const AffineTriple& s,
                        const MatrixXd& v) {
  if (int(v.rows()) != s.N || int(v.cols()) != ocp.m)
    throw std::invalid_argument("gamma_functional: variation grid mismatch");
  const int N = s.N;
  const double h = s.h();
  VectorXd z = VectorXd::Zero(ocp.n);
  double total = 0.0;
  for (int j = 0; j < N; ++j) {
    const double t = j * h;
    const VectorXd xj = s.x.row(j).transpose();
    const VectorXd pj1 = s.p.row(j + 1).transpose();
    const VectorXd uj = s.u.row(j).transpose();
    const VectorXd vj = v.row(j).transpose();
    const MatrixXd Hxx = ocp.hamiltonian_hess_xx(t, xj, pj1, uj);
    const MatrixXd Hux = ocp.hamiltonian_hess_ux(t, xj, pj1);
    total += h * (z.dot(Hxx * z) + 2.0 * (Hux * z).dot(vj));
    z += h * (ocp.jac_x_dynamics(t, xj, uj) * z + ocp.B(t, xj) * vj);
  }
  return total;
}

ABCheckResult check_assumption_AB(const SwitchingFunction& sigma,
                                  const ControlSet& U, double tau,
                                  double min_slope, double flat_threshold) {
  const int N = int(sigma.values.rows()) - 1;
  if (N < 1) throw std::invalid_argument("check_assumption_AB: empty grid");
  const double h = sigma.T / N;
  if (!(h < tau / 10.0))
    throw std::invalid_argument(
        "check_assumption_AB: grid too coarse for the requested window");

  ABCheckResult out;
  out.holds = true;
  out.kappa_est = kInf;
  const double flat_level = flat_threshold * tau;

  for (int e = 0; e < U.edges.cols(); ++e) {
    VectorXd s(N + 1);
    for (int j = 0; j <= N; ++j)
      s(j) = sigma.values.row(j).dot(U.edges.col(e));

    // locate zeros: exact grid hits (first node of a run) and sign changes
    std::vector<double> zero_ts;
    for (int j = 0; j <= N; ++j) {
      if (s(j) == 0.0 && (j == 0 || s(j - 1) != 0.0)) zero_ts.push_back(j * h);
      if (j < N && s(j) * s(j + 1) < 0.0)
        zero_ts.push_back(j * h + h * s(j) / (s(j) - s(j + 1)));
    }

    for (double tz : zero_ts) {
      double st = 0.0, stt = 0.0, sts = 0.0, ss = 0.0;
      int cnt = 0;
      for (int j = 0; j <= N; ++j) {
        const double t = j * h;
        if (std::abs(t - tz) > tau) continue;
        ++cnt;
        st += t;
        stt += t * t;
        sts += t * s(j);
        ss += s(j);
      }
      const double denom = cnt * stt - st * st;
      const double slope = denom > 0.0 ? (cnt * sts - st * ss) / denom : 0.0;
      out.zeros.push_back({e, tz, slope});
      out.kappa_est = std::min(out.kappa_est, std::abs(slope));
      if (std::abs(slope) < min_slope) out.holds = false;
    }

    // near-zero runs longer than 2h with no located zero inside indicate a
    // tangential touch that the sign-change scan cannot see
    int run_start = -1;
    for (int j = 0; j <= N + 1; ++j) {
      const bool low = j <= N && std::abs(s(j)) < flat_level;
      if (low && run_start < 0) run_start = j;
      if (!low && run_start >= 0) {
        const double t0 = run_start * h, t1 = (j - 1) * h;
        if (t1 - t0 > 2.0 * h) {
          bool explained = false;
          for (double tz : zero_ts)
            if (tz >= t0 - h && tz <= t1 + h) explained = true;
          if (!explained) {
            out.holds = false;
            out.kappa_est = 0.0;
            out.zeros.push_back({e, 0.5 * (t0 + t1), 0.0});
          }
        }
        run_start = -1;
      }
    }
  }
  return out;
}

namespace {

struct GrowthSample {
  bool valid = false;
  double ratio = kInf;
  MatrixXd u;
};

// flips the base control to random other vertices on up to three random
// cell intervals, keeping the total L1 mass within the budget
MatrixXd needle_control(const MatrixXd& base,
                        const std::vector<VectorXd>& verts, double h,
                        double budget, SplitMix64& g) {
  const int N = int(base.rows());
  MatrixXd u = base;
  const int needles = 1 + int(g.next_below(3));
  for (int k = 0; k < needles; ++k) {
    const double part = budget / needles;
    const int center = int(g.next_below(std::uint64_t(N)));
    const VectorXd target = verts[g.next_below(verts.size())];
    const double delta = (target - base.row(center).transpose()).norm();
    if (delta < 1e-12) continue;
    int cells = int(part / (h * delta));
    if (cells < 1) continue;
    const int lo = std::max(0, center - cells / 2);
    const int hi = std::min(N, lo + cells);
    for (int j = lo; j < hi; ++j) u.row(j) = target.transpose();
  }
  return u;
}

// piecewise-linear sigma perturbation from a few random knots, scaled to a
// W^{1,inf} norm drawn below gamma0
MatrixXd sigma_perturbation(int N, int m, double h, double gamma0,
                            SplitMix64& g) {
  const int knots = 9;
  MatrixXd knot_vals(knots, m);
  for (int r = 0; r < knots; ++r)
    for (int c = 0; c < m; ++c) knot_vals(r, c) = g.next_symmetric();
  MatrixXd delta(N + 1, m);
  for (int j = 0; j <= N; ++j) {
    const double pos = double(j) / N * (knots - 1);
    const int k0 = std::min(knots - 2, int(pos));
    const double frac = pos - k0;
    delta.row(j) = (1.0 - frac) * knot_vals.row(k0) + frac * knot_vals.row(k0 + 1);
  }
  const double norm = eval_norm(delta, MetricSpec::grid(NormKind::W1inf, h));
  const double target = gamma0 * (0.1 + 0.9 * g.next_double());
  if (norm > 0.0) delta *= target / norm;
  return delta;
}

}  // namespace

GrowthCheckResult check_growth(const AffineOcp& ocp,
                               const AffineSolveResult& ref,
                               const GrowthCheckParams& params) {
  if (!(params.kappa_exp > 1.0 && params.kappa_exp <= 2.0))
    throw std::invalid_argument("check_growth: exponent must lie in (1, 2]");
  if (params.kappa_exp < 2.0 && !ocp.linear_quadratic)
    throw std::invalid_argument(
        "check_growth: exponents below 2 require a declared linear-quadratic "
        "problem");
  if (!(params.alpha0 > 0.0))
    throw std::invalid_argument("check_growth: no admissible samples at zero radius");
  if (params.n_samples < 1)
    throw std::invalid_argument("check_growth: sample count must be positive");

  const int N = ref.s.N;
  const double h = ref.s.h();
  const auto verts = ocp.U.vertex_list();
  const MetricSpec l1 = MetricSpec::grid(NormKind::L1, h);

  std::vector<GrowthSample> slots(size_t(params.n_samples));
  parallel_for(params.n_samples, params.jobs, [&](int idx) {
    SplitMix64 g(SplitMix64::derive(params.seed, std::uint64_t(idx)));
    GrowthSample& slot = slots[size_t(idx)];
    for (int attempt = 0; attempt < 40 && !slot.valid; ++attempt) {
      const double budget = params.alpha0 * (0.05 + 0.95 * g.next_double());
      const MatrixXd u = needle_control(ref.s.u, verts, h, budget, g);

      MatrixXd sigma = ref.sigma.values;
      if (params.variant != GrowthVariant::AA2p)
        sigma += sigma_perturbation(N, ocp.m, h, params.gamma0, g);

      MatrixXd u_prime = ref.s.u;
      if (params.variant == GrowthVariant::AA2) {
        // u' is the pointwise minimizer of the sampled sigma, which places
        // sigma inside -N_U(u') by construction
        for (int j = 0; j < N; ++j) {
          VectorXd prev;
          if (j > 0) prev = u_prime.row(j - 1).transpose();
          u_prime.row(j) = pointwise_minimizer(sigma.row(j).transpose(), ocp.U,
                                               j > 0 ? &prev : nullptr)
                               .transpose();
        }
      } else if (params.variant == GrowthVariant::AA2prime) {
        u_prime = needle_control(ref.s.u, verts, h,
                                 params.alpha0 * 0.5 * g.next_double(), g);
      }
      // both controls must stay inside the alpha0 ball around the reference
      if (eval_norm(MatrixXd(u_prime - ref.s.u), l1) > params.alpha0) continue;
      const MatrixXd v = u - u_prime;
      const double v_l1 = eval_norm(v, l1);
      if (v_l1 <= 0.0) continue;
      // variations narrower than the support cutoff are below grid
      // resolution: the continuous pair they stand for cannot be written
      // with cellwise controls, and the ratio degenerates with h
      int support = 0;
      for (int j = 0; j < N; ++j) support += v.row(j).norm() > 0.0;
      if (support < params.min_support_cells) continue;

      // left-node pairing matches the nodewise inclusion sigma_j in
      // -N_U(u'_j), so every cell contributes a nonnegative term under AA2
      double linear = 0.0;
      for (int j = 0; j < N; ++j) {
        const double inner = sigma.row(j).dot(v.row(j));
        linear += h * (params.variant == GrowthVariant::AA2prime
                           ? std::abs(inner)
                           : inner);
      }
      const double lhs = linear + gamma_functional(ocp, ref.s, v);
      slot.ratio = lhs / std::pow(v_l1, params.kappa_exp);
      slot.u = u;
      slot.valid = true;
    }
  });

  GrowthCheckResult out;
  out.c0_empirical = kInf;
  for (const auto& slot : slots) {
    if (!slot.valid) continue;
    ++out.n_samples;
    if (slot.ratio < out.c0_empirical) {
      out.c0_empirical = slot.ratio;
      out.worst_control = slot.u;
    }
  }
  if (out.n_samples == 0)
    throw std::runtime_error(
        "check_growth: no admissible samples of the requested size");
  out.holds = out.c0_empirical >= params.c0;
  return out;
}

AffineRegularityReport regularity_experiment(const AffineOcp& ocp,
                                             const AffineSolveResult& ref,
                                             const AffineSweepParams& params) {
  if (!ref.converged)
    throw std::invalid_argument("regularity_experiment: reference not converged");
  if (params.magnitudes.empty())
    throw std::invalid_argument("regularity_experiment: no magnitudes");
  if (!params.perturb_xi && !params.perturb_pi && !params.perturb_rho)
    throw std::invalid_argument("regularity_experiment: no disturbance block");
  const int N = ref.s.N;
  const double h = ref.s.h();

  AffineRegularityReport report;
  {
    double asym = 0.0, scale = 1.0;
    for (int j = 0; j < N; ++j) {
      const MatrixXd S =
          ocp.hamiltonian_hess_ux(j * h, ref.s.x.row(j).transpose(),
                                  ref.s.p.row(j + 1).transpose()) *
          ocp.B(j * h, ref.s.x.row(j).transpose());
      asym = std::max(asym, (S - S.transpose()).cwiseAbs().maxCoeff());
      scale = std::max(scale, S.cwiseAbs().maxCoeff());
    }
    report.hux_b_symmetric = asym <= 1e-8 * scale;
  }

  auto draw = [&](SplitMix64& g, double mag) {
    AffineDisturbance dist = AffineDisturbance::zero(ocp, N);
    if (params.perturb_xi)
      for (int j = 0; j < N; ++j)
        for (int c = 0; c < ocp.n; ++c) dist.xi(j, c) = g.next_symmetric();
    if (params.perturb_pi)
      for (int j = 0; j < N; ++j)
        for (int c = 0; c < ocp.n; ++c) dist.pi(j, c) = g.next_symmetric();
    if (params.perturb_rho && params.rho_constant) {
      VectorXd dir(ocp.m);
      double norm = 0.0;
      while (norm < 1e-3) {
        for (int c = 0; c < ocp.m; ++c) dir(c) = g.next_symmetric();
        norm = dir.norm();
      }
      dist.rho = (dir / norm).transpose().replicate(N + 1, 1);
    } else if (params.perturb_rho)
      dist.rho = sigma_perturbation(N, ocp.m, h, 1.0, g);
    const double norm = disturbance_strong_norm(dist, h);
    const double c = mag / norm;
    dist.xi *= c;
    dist.pi *= c;
    dist.rho *= c;
    return dist;
  };
  auto domain_dist = [&](const AffineTriple& s1, const AffineTriple& s2) {
    const MetricSpec w11 = MetricSpec::grid(NormKind::W11, h);
    const MetricSpec l1 = MetricSpec::grid(NormKind::L1, h);
    return eval_norm(MatrixXd(s1.x - s2.x), w11) +
           eval_norm(MatrixXd(s1.p - s2.p), w11) +
           eval_norm(MatrixXd(s1.u - s2.u), l1);
  };

  const int total = int(params.magnitudes.size()) * params.directions_per_magnitude;
  report.records.resize(size_t(total));
  parallel_for(total, params.jobs, [&](int idx) {
    const double mag =
        params.magnitudes[size_t(idx / params.directions_per_magnitude)];
    PerturbationRecord rec;
    if (params.mode == AffineRegularityMode::Smsr) {
      SplitMix64 g(SplitMix64::derive(params.seed, std::uint64_t(idx)));
      const AffineDisturbance dist = draw(g, mag);
      const auto sol = solve_affine_pmp(ocp, N, ref.s.u, &dist, params.solve);
      rec.strong_image_dist = mag;
      rec.weak_image_dist = disturbance_weak_norm(dist, h);
      rec.weak_domain_dist = domain_dist(sol.s, ref.s);
      rec.solver_converged = sol.converged && !sol.bound_exceeded;
    } else {
      SplitMix64 g1(SplitMix64::derive(params.seed, 2 * std::uint64_t(idx)));
      SplitMix64 g2(SplitMix64::derive(params.seed, 2 * std::uint64_t(idx) + 1));
      const AffineDisturbance d1 = draw(g1, mag);
      const AffineDisturbance d2 = draw(g2, mag);
      const auto sol1 = solve_affine_pmp(ocp, N, ref.s.u, &d1, params.solve);
      const auto sol2 = solve_affine_pmp(ocp, N, ref.s.u, &d2, params.solve);
      AffineDisturbance diff;
      diff.xi = d1.xi - d2.xi;
      diff.pi = d1.pi - d2.pi;
      diff.rho = d1.rho - d2.rho;
      rec.strong_image_dist = disturbance_strong_norm(diff, h);
      rec.weak_image_dist = disturbance_weak_norm(diff, h);
      rec.weak_domain_dist = domain_dist(sol1.s, sol2.s);
      rec.solver_converged = sol1.converged && sol2.converged &&
                             !sol1.bound_exceeded && !sol2.bound_exceeded;
    }
    report.records[size_t(idx)] = rec;
  });
  return report;
}

EulerStudy euler_error_study(
    const std::function<std::pair<MatrixXd, MatrixXd>(int)>& solve_grid,
    const std::vector<int>& grid_counts, int ref_grid, double T) {
  if (grid_counts.empty())
    throw std::invalid_argument("euler_error_study: no grids requested");
  int max_n = 0;
  for (int n : grid_counts) {
    if (n < 1) throw std::invalid_argument("euler_error_study: bad grid count");
    max_n = std::max(max_n, n);
  }
  if (ref_grid < 8 * max_n)
    throw std::invalid_argument(
        "euler_error_study: reference grid must be at least 8x the finest");
  for (int n : grid_counts)
    if (ref_grid % n != 0)
      throw std::invalid_argument(
          "euler_error_study: grids must divide the reference grid");

  const auto [u_ref, x_ref] = solve_grid(ref_grid);
  const double h_ref = T / ref_grid;

  EulerStudy study;
  for (int n : grid_counts) {
    const auto [u, x] = solve_grid(n);
    const int r = ref_grid / n;
    double err_u = 0.0;
    for (int f = 0; f < ref_grid; ++f)
      err_u += h_ref * (u.row(f / r) - u_ref.row(f)).norm();
    double err_x = 0.0;
    for (int j = 0; j <= n; ++j)
      err_x = std::max(err_x, (x.row(j) - x_ref.row(j * r)).norm());
    study.rows.push_back({n, T / n, err_u, err_x});
  }

  auto fit_slope = [&](auto field) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int cnt = 0;
    for (const auto& row : study.rows) {
      const double e = field(row);
      if (!(e > 0.0)) continue;
      const double lx = std::log(row.h), ly = std::log(e);
      ++cnt;
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    if (cnt < 2)
      throw std::invalid_argument(
          "euler_error_study: degenerate error table, cannot fit a rate");
    return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  };
  study.slope_u = fit_slope([](const EulerStudyRow& r) { return r.err_u_l1; });
  study.slope_x = fit_slope([](const EulerStudyRow& r) { return r.err_x_linf; });
  return study;
}

}  // namespace mrlab
