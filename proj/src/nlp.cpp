#include "mrlab/nlp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mrlab/cone_quadratic.hpp"
#include "mrlab/derivatives.hpp"
#include "mrlab/parallel.hpp"
#include "mrlab/rng.hpp"

namespace mrlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Eigen::VectorXd NlpProblem::grad_objective(const VectorXd& x) const {
  if (objective_gradient) return objective_gradient(x);
  return fd_gradient(objective, x);
}

Eigen::MatrixXd NlpProblem::hess_objective(const VectorXd& x) const {
  if (objective_hessian) return objective_hessian(x);
  auto g = [this](const VectorXd& y) { return grad_objective(y); };
  return fd_hessian_from_gradient(g, x);
}

Eigen::VectorXd NlpProblem::eval_inequality(const VectorXd& x) const {
  if (m == 0) return VectorXd();
  return inequality(x);
}

Eigen::MatrixXd NlpProblem::jac_inequality(const VectorXd& x) const {
  if (m == 0) return MatrixXd(0, n);
  if (inequality_jacobian) return inequality_jacobian(x);
  return fd_jacobian(inequality, x);
}

Eigen::MatrixXd NlpProblem::hess_inequality(int i, const VectorXd& x) const {
  if (i < int(inequality_hessians.size()) && inequality_hessians[size_t(i)])
    return inequality_hessians[size_t(i)](x);
  auto gi = [this, i](const VectorXd& y) {
    return VectorXd(jac_inequality(y).row(i).transpose());
  };
  return fd_hessian_from_gradient(gi, x);
}

Eigen::VectorXd NlpProblem::eval_equality(const VectorXd& x) const {
  if (p == 0) return VectorXd();
  return equality(x);
}

Eigen::MatrixXd NlpProblem::jac_equality(const VectorXd& x) const {
  if (p == 0) return MatrixXd(0, n);
  if (equality_jacobian) return equality_jacobian(x);
  return fd_jacobian(equality, x);
}

Eigen::MatrixXd NlpProblem::hess_equality(int j, const VectorXd& x) const {
  if (j < int(equality_hessians.size()) && equality_hessians[size_t(j)])
    return equality_hessians[size_t(j)](x);
  auto gj = [this, j](const VectorXd& y) {
    return VectorXd(jac_equality(y).row(j).transpose());
  };
  return fd_hessian_from_gradient(gj, x);
}

void NlpProblem::validate(const std::vector<VectorXd>& samples) const {
  if (n <= 0) throw std::invalid_argument("NlpProblem: n must be positive");
  if (!objective) throw std::invalid_argument("NlpProblem: missing objective");
  if (m > 0 && !inequality)
    throw std::invalid_argument("NlpProblem: missing inequality evaluator");
  if (p > 0 && !equality)
    throw std::invalid_argument("NlpProblem: missing equality evaluator");
  for (const auto& x : samples) {
    if (x.size() != n)
      throw std::invalid_argument("NlpProblem: sample dimension mismatch");
    if (eval_inequality(x).size() != m)
      throw std::invalid_argument("NlpProblem: inequality dimension mismatch");
    if (eval_equality(x).size() != p)
      throw std::invalid_argument("NlpProblem: equality dimension mismatch");
    const MatrixXd H = hess_objective(x);
    const double scale = std::max(1.0, H.norm());
    if ((H - H.transpose()).norm() > 1e-8 * scale)
      throw std::invalid_argument("NlpProblem: objective Hessian asymmetric");
    for (int i = 0; i < m; ++i) {
      const MatrixXd Hi = hess_inequality(i, x);
      if ((Hi - Hi.transpose()).norm() > 1e-8 * std::max(1.0, Hi.norm()))
        throw std::invalid_argument("NlpProblem: inequality Hessian asymmetric");
    }
    for (int j = 0; j < p; ++j) {
      const MatrixXd Hj = hess_equality(j, x);
      if ((Hj - Hj.transpose()).norm() > 1e-8 * std::max(1.0, Hj.norm()))
        throw std::invalid_argument("NlpProblem: equality Hessian asymmetric");
    }
  }
}

KktDisturbance KktDisturbance::zero(const NlpProblem& p) {
  KktDisturbance d;
  d.zeta = VectorXd::Zero(p.n);
  d.xi = VectorXd::Zero(p.m);
  d.eta = VectorXd::Zero(p.p);
  return d;
}

Eigen::MatrixXd lagrangian_hessian(const NlpProblem& problem,
                                   const KktTriple& s) {
  MatrixXd H = problem.hess_objective(s.x);
  for (int i = 0; i < problem.m; ++i)
    H += s.lambda(i) * problem.hess_inequality(i, s.x);
  for (int j = 0; j < problem.p; ++j)
    H += s.ystar(j) * problem.hess_equality(j, s.x);
  return H;
}

KktResidual kkt_residual(const NlpProblem& problem, const KktTriple& s) {
  KktResidual r;
  r.defect.zeta = problem.grad_objective(s.x) +
                  problem.jac_inequality(s.x).transpose() * s.lambda +
                  problem.jac_equality(s.x).transpose() * s.ystar;
  r.defect.eta = problem.eval_equality(s.x);
  const VectorXd f = problem.eval_inequality(s.x);
  r.defect.xi = VectorXd::Zero(problem.m);
  for (int i = 0; i < problem.m; ++i) {
    if (s.lambda(i) > 0.0)
      r.defect.xi(i) = f(i);
    else if (s.lambda(i) == 0.0)
      r.defect.xi(i) = std::max(f(i), 0.0);
    else {
      r.defect.xi(i) = f(i);
      r.multiplier_infeasible = true;
    }
  }
  r.image_norm = r.multiplier_infeasible
                     ? kInf
                     : r.defect.zeta.norm() + r.defect.xi.norm() +
                           r.defect.eta.norm();
  return r;
}

Eigen::VectorXd pack_triple(const KktTriple& s) {
  VectorXd z(s.x.size() + s.lambda.size() + s.ystar.size());
  z << s.x, s.lambda, s.ystar;
  return z;
}

KktTriple unpack_triple(const NlpProblem& problem, const VectorXd& z) {
  KktTriple s;
  s.x = z.head(problem.n);
  s.lambda = z.segment(problem.n, problem.m);
  s.ystar = z.tail(problem.p);
  return s;
}

Eigen::VectorXd pack_disturbance(const NlpProblem& problem,
                                 const KktDisturbance& d) {
  VectorXd rhs(problem.n + problem.m + problem.p);
  rhs << d.zeta, -d.xi, d.eta;
  return rhs;
}

GeneralizedEquation to_generalized_equation(const NlpProblem& problem) {
  GeneralizedEquation geq;
  geq.dim = problem.n + problem.m + problem.p;
  geq.cone = ConeSpec::orthant(problem.m);
  geq.cone_offset = problem.n;
  geq.smooth = [&problem](const VectorXd& z) {
    const KktTriple s = unpack_triple(problem, z);
    VectorXd out(problem.n + problem.m + problem.p);
    out.head(problem.n) = problem.grad_objective(s.x) +
                          problem.jac_inequality(s.x).transpose() * s.lambda +
                          problem.jac_equality(s.x).transpose() * s.ystar;
    out.segment(problem.n, problem.m) = -problem.eval_inequality(s.x);
    out.tail(problem.p) = problem.eval_equality(s.x);
    return out;
  };
  geq.jacobian = [&problem](const VectorXd& z) {
    const KktTriple s = unpack_triple(problem, z);
    const int n = problem.n, m = problem.m, p = problem.p;
    MatrixXd J = MatrixXd::Zero(n + m + p, n + m + p);
    const MatrixXd fj = problem.jac_inequality(s.x);
    const MatrixXd gj = problem.jac_equality(s.x);
    J.topLeftCorner(n, n) = lagrangian_hessian(problem, s);
    J.block(0, n, n, m) = fj.transpose();
    J.block(0, n + m, n, p) = gj.transpose();
    J.block(n, 0, m, n) = -fj;
    J.block(n + m, 0, p, n) = gj;
    return J;
  };
  return geq;
}

PerturbedKktResult solve_perturbed_kkt(const NlpProblem& problem,
                                       const KktTriple& start,
                                       const KktDisturbance& disturbance,
                                       const NewtonOptions& opts) {
  const GeneralizedEquation geq = to_generalized_equation(problem);
  const auto res = josephy_newton(geq, pack_triple(start),
                                  pack_disturbance(problem, disturbance), opts);
  PerturbedKktResult out;
  out.s = unpack_triple(problem, res.solution);
  out.converged = res.converged;
  out.residual_history = res.residual_history;
  out.error = res.error;
  return out;
}

namespace {

// Unconstrained-in-face minimum of |C_F lam|^2 on the affine slice
// sum(lam) = 1; exact simplex minimum is the best feasible face value.
struct SimplexMin {
  double value = kInf;
  VectorXd lambda;  // on the full index set, zeros off the face
};

SimplexMin min_over_simplex(const MatrixXd& C) {
  const int d = int(C.cols());
  if (d > 16)
    throw std::invalid_argument(
        "check_strict_mfcq: too many degenerate constraints");
  SimplexMin best;
  for (unsigned mask = 1; mask < (1u << d); ++mask) {
    std::vector<int> face;
    for (int i = 0; i < d; ++i)
      if (mask & (1u << i)) face.push_back(i);
    const int k = int(face.size());
    MatrixXd Cf(C.rows(), k);
    for (int i = 0; i < k; ++i) Cf.col(i) = C.col(face[size_t(i)]);
    const MatrixXd G = Cf.transpose() * Cf;
    MatrixXd K(k + 1, k + 1);
    K.setZero();
    K.topLeftCorner(k, k) = 2.0 * G;
    K.topRightCorner(k, 1).setOnes();
    K.bottomLeftCorner(1, k).setOnes();
    VectorXd b = VectorXd::Zero(k + 1);
    b(k) = 1.0;
    const VectorXd sol = K.completeOrthogonalDecomposition().solve(b);
    const VectorXd lam_f = sol.head(k);
    if (std::abs(lam_f.sum() - 1.0) > 1e-9) continue;
    if ((lam_f.array() < -1e-12).any()) continue;
    const double val = lam_f.dot(G * lam_f);
    if (val < best.value) {
      best.value = val;
      best.lambda = VectorXd::Zero(d);
      for (int i = 0; i < k; ++i) best.lambda(face[size_t(i)]) = lam_f(i);
    }
  }
  return best;
}

}  // namespace

MfcqResult check_strict_mfcq(const NlpProblem& problem, const KktTriple& s,
                             double active_tol) {
  MfcqResult res;
  res.lambda_certificate = VectorXd::Zero(problem.m);
  res.ystar_certificate = VectorXd::Zero(problem.p);

  const VectorXd f = problem.eval_inequality(s.x);
  const MatrixXd fj = problem.jac_inequality(s.x);
  const MatrixXd gj = problem.jac_equality(s.x);

  std::vector<int> strong, degen;
  for (int i = 0; i < problem.m; ++i) {
    if (f(i) < -active_tol) continue;  // inactive
    if (s.lambda(i) > active_tol)
      strong.push_back(i);
    else
      degen.push_back(i);
  }

  // unsigned part: equality gradients and strongly active gradients
  const int nf = int(strong.size()) + problem.p;
  MatrixXd M(problem.n, nf);
  for (size_t i = 0; i < strong.size(); ++i)
    M.col(Eigen::Index(i)) = fj.row(strong[i]).transpose();
  for (int j = 0; j < problem.p; ++j)
    M.col(Eigen::Index(strong.size()) + j) = gj.row(j).transpose();

  if (nf > 0) {
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(M);
    cod.setThreshold(1e-10);
    if (cod.rank() < nf) {
      // linear dependence among the unsigned gradients alone
      res.holds = false;
      const MatrixXd kernel =
          Eigen::FullPivLU<MatrixXd>(M).kernel();
      VectorXd k = kernel.col(0);
      k /= k.cwiseAbs().maxCoeff();
      for (size_t i = 0; i < strong.size(); ++i)
        res.lambda_certificate(strong[i]) = k(Eigen::Index(i));
      for (int j = 0; j < problem.p; ++j)
        res.ystar_certificate(j) = k(Eigen::Index(strong.size()) + j);
      return res;
    }
  }

  if (degen.empty()) return res;

  MatrixXd Ad(problem.n, degen.size());
  for (size_t i = 0; i < degen.size(); ++i)
    Ad.col(Eigen::Index(i)) = fj.row(degen[i]).transpose();
  MatrixXd C = Ad;
  if (nf > 0) {
    // project out the span of the unsigned gradients
    Eigen::HouseholderQR<MatrixXd> qr(M);
    const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(problem.n, nf);
    C -= Q * (Q.transpose() * Ad);
  }

  const double scale = 1.0 + Ad.colwise().norm().maxCoeff();
  const auto sm = min_over_simplex(C);
  if (sm.value > 1e-18 * scale * scale) return res;  // only zero combination

  res.holds = false;
  VectorXd lam_d = sm.lambda;
  VectorXd coeff;
  if (nf > 0)
    coeff = -M.completeOrthogonalDecomposition().solve(Ad * lam_d);
  else
    coeff = VectorXd();
  for (size_t i = 0; i < degen.size(); ++i)
    res.lambda_certificate(degen[i]) = lam_d(Eigen::Index(i));
  for (size_t i = 0; i < strong.size(); ++i)
    res.lambda_certificate(strong[i]) = coeff(Eigen::Index(i));
  for (int j = 0; j < problem.p; ++j)
    res.ystar_certificate(j) = coeff(Eigen::Index(strong.size()) + j);
  const double mx = std::max(res.lambda_certificate.cwiseAbs().maxCoeff(),
                             res.ystar_certificate.size() > 0
                                 ? res.ystar_certificate.cwiseAbs().maxCoeff()
                                 : 0.0);
  if (mx > 0) {
    res.lambda_certificate /= mx;
    res.ystar_certificate /= mx;
  }
  return res;
}

CoercivityResult check_coercivity(const NlpProblem& problem,
                                  const KktTriple& s,
                                  const MetricSpec& domain_norm,
                                  double active_tol) {
  const int n = problem.n;
  MatrixXd W = MatrixXd::Identity(n, n);
  if (domain_norm.kind == NormKind::WeightedEuclidean) {
    if (domain_norm.weights.size() != n)
      throw std::invalid_argument("check_coercivity: weight size mismatch");
    W = domain_norm.weights.asDiagonal();
  } else if (domain_norm.kind != NormKind::Euclidean) {
    throw std::invalid_argument(
        "check_coercivity: domain norm must be Euclidean or weighted");
  }

  const MatrixXd H = lagrangian_hessian(problem, s);
  const VectorXd f = problem.eval_inequality(s.x);
  const MatrixXd fj = problem.jac_inequality(s.x);
  const MatrixXd gj = problem.jac_equality(s.x);

  std::vector<Eigen::RowVectorXd> eq_rows, in_rows;
  for (int j = 0; j < problem.p; ++j) eq_rows.emplace_back(gj.row(j));
  for (int i = 0; i < problem.m; ++i) {
    if (f(i) < -active_tol) continue;
    if (s.lambda(i) > active_tol)
      eq_rows.emplace_back(fj.row(i));
    else
      in_rows.emplace_back(fj.row(i));
  }
  auto drop_zero = [](std::vector<Eigen::RowVectorXd>& rows) {
    std::erase_if(rows, [](const Eigen::RowVectorXd& r) {
      return r.norm() < 1e-14;
    });
  };
  drop_zero(eq_rows);
  drop_zero(in_rows);

  MatrixXd E(eq_rows.size(), n), C(in_rows.size(), n);
  for (size_t r = 0; r < eq_rows.size(); ++r)
    E.row(Eigen::Index(r)) = eq_rows[r];
  for (size_t r = 0; r < in_rows.size(); ++r)
    C.row(Eigen::Index(r)) = in_rows[r];

  const auto min = cone_quadratic_minimum(H, W, E, C);
  CoercivityResult out;
  out.cone_trivial = min.trivial;
  out.c0 = min.value;
  out.direction = min.direction;
  return out;
}

std::vector<PerturbationRecord> smsr_experiment(const NlpProblem& problem,
                                                const KktTriple& s,
                                                const NlpSweepParams& params) {
  if (!params.perturb_zeta && !params.perturb_xi && !params.perturb_eta)
    throw std::invalid_argument("smsr_experiment: no disturbance block enabled");
  if (params.magnitudes.empty())
    throw std::invalid_argument("smsr_experiment: no magnitudes");
  const int total =
      int(params.magnitudes.size()) * params.directions_per_magnitude;
  std::vector<PerturbationRecord> records(static_cast<size_t>(total));
  parallel_for(total, params.jobs, [&](int idx) {
    const int mag_i = idx / params.directions_per_magnitude;
    const double mag = params.magnitudes[size_t(mag_i)];
    SplitMix64 g(SplitMix64::derive(params.seed, std::uint64_t(idx)));
    KktDisturbance d = KktDisturbance::zero(problem);
    double norm = 0.0;
    while (norm == 0.0) {
      if (params.perturb_zeta)
        for (int i = 0; i < problem.n; ++i) d.zeta(i) = g.next_symmetric();
      if (params.perturb_xi)
        for (int i = 0; i < problem.m; ++i) d.xi(i) = g.next_symmetric();
      if (params.perturb_eta)
        for (int i = 0; i < problem.p; ++i) d.eta(i) = g.next_symmetric();
      norm = d.zeta.norm() + d.xi.norm() + d.eta.norm();
    }
    const double c = mag / norm;
    d.zeta *= c;
    d.xi *= c;
    d.eta *= c;
    const auto sol = solve_perturbed_kkt(problem, s, d, params.newton);
    PerturbationRecord rec;
    rec.weak_image_dist = rec.strong_image_dist = mag;
    rec.weak_domain_dist = (sol.s.x - s.x).norm() +
                           (sol.s.lambda - s.lambda).norm() +
                           (sol.s.ystar - s.ystar).norm();
    rec.solver_converged = sol.converged;
    records[size_t(idx)] = rec;
  });
  return records;
}

}  // namespace mrlab
