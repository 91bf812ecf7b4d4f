#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mrlab/nlp.hpp"
#include "mrlab/rng.hpp"

using namespace mrlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// min tau |x|^2  s.t.  1 - x1 - x2 <= 0; solution x = (1/2, 1/2), lambda = tau
NlpProblem make_scaled_qp(double tau) {
  NlpProblem p;
  p.n = 2;
  p.m = 1;
  p.p = 0;
  p.objective = [tau](const VectorXd& x) { return tau * x.squaredNorm(); };
  p.objective_gradient = [tau](const VectorXd& x) {
    return VectorXd(2.0 * tau * x);
  };
  p.objective_hessian = [tau](const VectorXd&) {
    return MatrixXd(2.0 * tau * MatrixXd::Identity(2, 2));
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
  p.inequality_hessians = {[](const VectorXd&) { return MatrixXd::Zero(2, 2); }};
  return p;
}

KktTriple scaled_qp_point(double tau) {
  KktTriple s;
  s.x = VectorXd::Constant(2, 0.5);
  s.lambda = VectorXd::Constant(1, tau);
  s.ystar = VectorXd();
  return s;
}

// same feasible set with the constraint listed twice; lambda = (1, 0)
NlpProblem make_duplicated_qp() {
  NlpProblem p = make_scaled_qp(1.0);
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

// min |x|^2 s.t. x1 + x2 = 1; solution x = (1/2, 1/2), ystar = -1
NlpProblem make_equality_qp() {
  NlpProblem p;
  p.n = 2;
  p.m = 0;
  p.p = 1;
  p.objective = [](const VectorXd& x) { return x.squaredNorm(); };
  p.objective_gradient = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  p.objective_hessian = [](const VectorXd&) {
    return MatrixXd(2.0 * MatrixXd::Identity(2, 2));
  };
  p.equality = [](const VectorXd& x) {
    VectorXd g(1);
    g << x(0) + x(1) - 1.0;
    return g;
  };
  p.equality_jacobian = [](const VectorXd&) {
    MatrixXd J(1, 2);
    J << 1.0, 1.0;
    return J;
  };
  p.equality_hessians = {[](const VectorXd&) { return MatrixXd::Zero(2, 2); }};
  return p;
}

// brute-force minimizer of tau|x|^2 - zeta.x subject to 1 - x1 - x2 <= xi,
// by nested grid refinement; accuracy ~ final step
VectorXd brute_force_qp(double tau, const VectorXd& zeta, double xi) {
  VectorXd best(2);
  double lo0 = -1.0, hi0 = 2.0, lo1 = -1.0, hi1 = 2.0;
  for (int level = 0; level < 5; ++level) {
    const int grid = 60;
    double best_val = 1e100;
    double bx = lo0, by = lo1;
    for (int i = 0; i <= grid; ++i) {
      for (int j = 0; j <= grid; ++j) {
        const double x0 = lo0 + (hi0 - lo0) * i / grid;
        const double x1 = lo1 + (hi1 - lo1) * j / grid;
        if (1.0 - x0 - x1 > xi) continue;
        const double val =
            tau * (x0 * x0 + x1 * x1) - zeta(0) * x0 - zeta(1) * x1;
        if (val < best_val) {
          best_val = val;
          bx = x0;
          by = x1;
        }
      }
    }
    const double w0 = (hi0 - lo0) / grid, w1 = (hi1 - lo1) / grid;
    lo0 = bx - 1.5 * w0;
    hi0 = bx + 1.5 * w0;
    lo1 = by - 1.5 * w1;
    hi1 = by + 1.5 * w1;
    best << bx, by;
  }
  return best;
}

}  // namespace

TEST_CASE("kkt_residual: exact point, hand-computed defect, bad multiplier") {
  auto p = make_scaled_qp(1.0);
  p.validate({VectorXd::Zero(2), VectorXd::Constant(2, 0.7)});
  auto s = scaled_qp_point(1.0);
  auto r = kkt_residual(p, s);
  CHECK(!r.multiplier_infeasible);
  CHECK(r.image_norm <= 1e-14);

  s.x << 0.6, 0.5;  // constraint slack 0.1 but multiplier positive
  r = kkt_residual(p, s);
  CHECK(r.defect.zeta(0) == doctest::Approx(0.2));
  CHECK(r.defect.zeta(1) == doctest::Approx(0.0));
  CHECK(r.defect.xi(0) == doctest::Approx(-0.1));
  CHECK(r.image_norm == doctest::Approx(0.3));

  s = scaled_qp_point(1.0);
  s.lambda(0) = -0.1;
  r = kkt_residual(p, s);
  CHECK(r.multiplier_infeasible);
  CHECK(std::isinf(r.image_norm));
}

TEST_CASE("solve_perturbed_kkt: closed-form responses") {
  const auto p = make_scaled_qp(1.0);
  const auto s = scaled_qp_point(1.0);
  for (double eps : {1e-3, 1e-2, 1e-1}) {
    auto d = KktDisturbance::zero(p);
    d.zeta = VectorXd::Constant(2, eps);
    auto res = solve_perturbed_kkt(p, s, d);
    REQUIRE(res.converged);
    CHECK(std::abs(res.s.x(0) - 0.5) <= 1e-8);
    CHECK(std::abs(res.s.x(1) - 0.5) <= 1e-8);
    CHECK(std::abs(res.s.lambda(0) - (1.0 - eps)) <= 1e-8);

    d = KktDisturbance::zero(p);
    d.xi = VectorXd::Constant(1, eps);
    res = solve_perturbed_kkt(p, s, d);
    REQUIRE(res.converged);
    CHECK(std::abs(res.s.x(0) - (1.0 - eps) / 2.0) <= 1e-8);
    CHECK(std::abs(res.s.lambda(0) - (1.0 - eps)) <= 1e-8);
  }
}

TEST_CASE("solve_perturbed_kkt: agrees with brute-force minimization") {
  const auto p = make_scaled_qp(1.0);
  const auto s = scaled_qp_point(1.0);
  SplitMix64 g(314159);
  for (int trial = 0; trial < 5; ++trial) {
    auto d = KktDisturbance::zero(p);
    d.zeta << 0.05 * g.next_symmetric(), 0.05 * g.next_symmetric();
    d.xi << 0.05 * g.next_symmetric();
    const auto res = solve_perturbed_kkt(p, s, d);
    REQUIRE(res.converged);
    const VectorXd oracle = brute_force_qp(1.0, d.zeta, d.xi(0));
    CHECK((res.s.x - oracle).norm() <= 5e-5);
  }
}

TEST_CASE("check_strict_mfcq: holds on the clean problem") {
  const auto p = make_scaled_qp(1.0);
  const auto res = check_strict_mfcq(p, scaled_qp_point(1.0));
  CHECK(res.holds);
  CHECK(res.lambda_certificate.cwiseAbs().maxCoeff() == 0.0);

  const auto peq = make_equality_qp();
  KktTriple seq;
  seq.x = VectorXd::Constant(2, 0.5);
  seq.lambda = VectorXd();
  seq.ystar = VectorXd::Constant(1, -1.0);
  CHECK(check_strict_mfcq(peq, seq).holds);
}

TEST_CASE("check_strict_mfcq: duplicated constraint yields a certificate") {
  const auto p = make_duplicated_qp();
  KktTriple s;
  s.x = VectorXd::Constant(2, 0.5);
  s.lambda = VectorXd(2);
  s.lambda << 1.0, 0.0;
  s.ystar = VectorXd();
  const auto res = check_strict_mfcq(p, s);
  CHECK(!res.holds);
  // combination -grad f1 + grad f2 = 0, scaled to max-abs one
  CHECK(res.lambda_certificate(0) == doctest::Approx(-1.0));
  CHECK(res.lambda_certificate(1) == doctest::Approx(1.0));
  // certificate really sums to zero in gradient space
  const MatrixXd J = p.jac_inequality(s.x);
  CHECK((J.transpose() * res.lambda_certificate).norm() <= 1e-12);
}

TEST_CASE("check_coercivity: quadratic over the critical subspace") {
  const auto p = make_scaled_qp(1.0);
  const auto s = scaled_qp_point(1.0);
  const auto res = check_coercivity(p, s);
  CHECK(!res.cone_trivial);
  CHECK(res.c0 == doctest::Approx(2.0).epsilon(1e-9));
  REQUIRE(res.direction.size() == 2);
  CHECK(res.direction.norm() == doctest::Approx(1.0).epsilon(1e-10));
  // direction lies in the cone and attains the reported value
  CHECK(std::abs(res.direction(0) + res.direction(1)) <= 1e-10);
  const MatrixXd H = lagrangian_hessian(p, s);
  CHECK(res.direction.dot(H * res.direction) ==
        doctest::Approx(res.c0).epsilon(1e-8));

  // oracle: dense sweep of the unit circle restricted to the cone
  double oracle = 1e100;
  for (int k = 0; k < 200000; ++k) {
    const double th = 2.0 * M_PI * k / 200000.0;
    VectorXd d(2);
    d << std::cos(th), std::sin(th);
    if (std::abs(d(0) + d(1)) > 1e-4) continue;
    oracle = std::min(oracle, d.dot(H * d));
  }
  CHECK(res.c0 == doctest::Approx(oracle).epsilon(1e-4));
}

TEST_CASE("check_coercivity: weighted norm rescales the value") {
  const auto p = make_scaled_qp(1.0);
  const auto s = scaled_qp_point(1.0);
  VectorXd w = VectorXd::Constant(2, 2.0);
  const auto res = check_coercivity(p, s, MetricSpec::weighted(w));
  CHECK(res.c0 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("check_coercivity: trivial cone is flagged") {
  NlpProblem p;
  p.n = 2;
  p.m = 0;
  p.p = 2;
  p.objective = [](const VectorXd& x) { return x.squaredNorm(); };
  p.objective_gradient = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  p.objective_hessian = [](const VectorXd&) {
    return MatrixXd(2.0 * MatrixXd::Identity(2, 2));
  };
  p.equality = [](const VectorXd& x) { return x; };
  p.equality_jacobian = [](const VectorXd&) {
    return MatrixXd(MatrixXd::Identity(2, 2));
  };
  p.equality_hessians = {
      [](const VectorXd&) { return MatrixXd::Zero(2, 2); },
      [](const VectorXd&) { return MatrixXd::Zero(2, 2); }};
  KktTriple s;
  s.x = VectorXd::Zero(2);
  s.lambda = VectorXd();
  s.ystar = VectorXd::Zero(2);
  const auto res = check_coercivity(p, s);
  CHECK(res.cone_trivial);
  CHECK(std::isinf(res.c0));
}

TEST_CASE("smsr_experiment: near-linear fit with small modulus") {
  const auto p = make_scaled_qp(1.0);
  const auto s = scaled_qp_point(1.0);
  NlpSweepParams params;
  params.seed = 42;
  for (int k = 0; k <= 6; ++k) params.magnitudes.push_back(std::pow(10.0, -4.0 + 0.5 * k));
  const auto records = smsr_experiment(p, s, params);
  CHECK(int(records.size()) == 7 * 20);
  for (const auto& r : records) CHECK(r.solver_converged);
  const auto fit = fit_regularity(records);
  CHECK(fit.beta >= 0.95);
  CHECK(fit.beta <= 1.05);
  CHECK(fit.kappa <= 3.0);

  // determinism: identical seeds reproduce records bit for bit
  const auto again = smsr_experiment(p, s, params);
  REQUIRE(again.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(again[i].weak_domain_dist == records[i].weak_domain_dist);
    CHECK(again[i].weak_image_dist == records[i].weak_image_dist);
  }
  // thread count must not change values either
  NlpSweepParams par4 = params;
  par4.jobs = 4;
  const auto parallel = smsr_experiment(p, s, par4);
  for (size_t i = 0; i < records.size(); ++i)
    CHECK(parallel[i].weak_domain_dist == records[i].weak_domain_dist);
}

TEST_CASE("smsr_experiment: modulus blows up as the curvature degenerates") {
  NlpSweepParams params;
  params.seed = 77;
  for (int k = 0; k <= 6; ++k)
    params.magnitudes.push_back(std::pow(10.0, -4.0 + 0.5 * k));
  const auto fit_big =
      fit_regularity(smsr_experiment(make_scaled_qp(1.0), scaled_qp_point(1.0), params));
  const auto fit_small = fit_regularity(
      smsr_experiment(make_scaled_qp(0.01), scaled_qp_point(0.01), params));
  CHECK(fit_small.kappa >= 10.0 * fit_big.kappa);
}

TEST_CASE("NlpProblem::validate rejects asymmetric Hessians") {
  auto p = make_scaled_qp(1.0);
  p.objective_hessian = [](const VectorXd&) {
    MatrixXd H(2, 2);
    H << 1.0, 0.5, -0.5, 1.0;
    return H;
  };
  CHECK_THROWS_AS(p.validate({VectorXd::Zero(2)}),
                  std::invalid_argument);
}
