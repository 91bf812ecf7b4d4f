#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mrlab/cone.hpp"
#include "mrlab/generalized_equation.hpp"
#include "mrlab/metric.hpp"
#include "mrlab/regularity.hpp"
#include "mrlab/rng.hpp"

using namespace mrlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// independent rectangle-rule oracle for the Sobolev grid norm
double w11_oracle(const VectorXd& nodes, double h) {
  double value = 0.0, deriv = 0.0;
  for (int j = 0; j + 1 < nodes.size(); ++j) {
    value += h * std::abs(nodes(j));
    deriv += std::abs(nodes(j + 1) - nodes(j));
  }
  return value + deriv;
}

MatrixXd random_samples(SplitMix64& g, int rows, int cols) {
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g.next_symmetric();
  return m;
}

}  // namespace

TEST_CASE("eval_norm: rectangle rule on constants and ramps") {
  MatrixXd ones = MatrixXd::Ones(10, 1);
  CHECK(eval_norm(ones, MetricSpec::grid(NormKind::L1, 0.1)) == 1.0);

  const int cells = 1000;
  VectorXd ramp(cells + 1);
  for (int j = 0; j <= cells; ++j) ramp(j) = double(j) / cells;
  const double h = 1.0 / cells;
  const double got = eval_norm(ramp, MetricSpec::grid(NormKind::W11, h));
  CHECK(got == doctest::Approx(w11_oracle(ramp, h)).epsilon(1e-14));
  CHECK(got == doctest::Approx(1.5).epsilon(2e-3));

  VectorXd v(2);
  v << 3.0, 4.0;
  CHECK(eval_norm(v, MetricSpec::euclidean()) == doctest::Approx(5.0));
  VectorXd w(2);
  w << 4.0, 1.0;
  CHECK(eval_norm(v, MetricSpec::weighted(w)) ==
        doctest::Approx(std::sqrt(4 * 9 + 16.0)));
}

TEST_CASE("eval_norm: rejects bad input") {
  CHECK_THROWS(eval_norm(MatrixXd(), MetricSpec::euclidean()));
  CHECK_THROWS(eval_norm(MatrixXd(MatrixXd::Ones(3, 1)),
                         MetricSpec::grid(NormKind::L1, 0.0)));
  CHECK_THROWS(eval_norm(MatrixXd(MatrixXd::Ones(1, 2)),
                         MetricSpec::grid(NormKind::W11, 0.1)));
  VectorXd w(1);
  w << 1.0;
  CHECK_THROWS(
      eval_norm(MatrixXd(MatrixXd::Ones(3, 1)), MetricSpec::weighted(w)));
}

TEST_CASE("eval_norm: triangle inequality and homogeneity") {
  SplitMix64 g(20260814);
  const MetricSpec specs[] = {
      MetricSpec::grid(NormKind::L1, 0.05),
      MetricSpec::grid(NormKind::L2, 0.05),
      MetricSpec::grid(NormKind::Linf, 0.05),
      MetricSpec::grid(NormKind::W11, 0.05),
      MetricSpec::grid(NormKind::W1inf, 0.05),
      MetricSpec::euclidean(),
  };
  for (const auto& spec : specs) {
    for (int trial = 0; trial < 25; ++trial) {
      MatrixXd a = random_samples(g, 20, 3);
      MatrixXd b = random_samples(g, 20, 3);
      const double na = eval_norm(a, spec), nb = eval_norm(b, spec);
      CHECK(eval_norm(MatrixXd(a + b), spec) <= na + nb + 1e-12);
      const double c = 2.0 * g.next_double() - 1.0;
      CHECK(eval_norm(MatrixXd(c * a), spec) ==
            doctest::Approx(std::abs(c) * na).epsilon(1e-12));
      CHECK(na >= 0.0);
    }
  }
}

TEST_CASE("cone_residual: orthant activity split") {
  auto cone = ConeSpec::orthant(2);
  VectorXd lam(2), w(2);
  lam << 1.0, 0.0;
  w << 0.3, -0.2;  // strict part must vanish, inactive part must be <= 0
  auto d = cone_residual(cone, lam, w);
  CHECK(!d.primal_infeasible);
  CHECK(d.value == doctest::Approx(0.3));
  w << 0.0, 0.7;
  CHECK(cone_residual(cone, lam, w).value == doctest::Approx(0.7));
  lam << -0.1, 0.0;
  CHECK(cone_residual(cone, lam, w).primal_infeasible);
}

TEST_CASE("cone_residual: box interior and bounds") {
  VectorXd lo(2), hi(2), u(2), w(2);
  lo << -1.0, -1.0;
  hi << 1.0, 1.0;
  auto cone = ConeSpec::box(lo, hi);
  u << 0.2, -0.5;
  w << 0.3, -0.4;
  CHECK(cone_residual(cone, u, w).value == doctest::Approx(0.5));
  u << -1.0, 1.0;  // lower active needs w<=0, upper active needs w>=0
  w << -2.0, 3.0;
  CHECK(cone_residual(cone, u, w).value == doctest::Approx(0.0));
  w << 0.3, -0.4;
  CHECK(cone_residual(cone, u, w).value == doctest::Approx(0.5));
  u << 1.5, 0.0;
  CHECK(cone_residual(cone, u, w).primal_infeasible);
}

TEST_CASE("cone_residual: polytope normal cone") {
  MatrixXd V(2, 3);
  V << 0, 1, 0,
       0, 0, 1;  // simplex conv{(0,0),(1,0),(0,1)}
  auto cone = ConeSpec::polytope(V);
  VectorXd u(2), w(2);
  u << 0.0, 0.0;
  w << -1.0, -2.0;  // nonpositive orthant is the normal cone at this vertex
  CHECK(cone_residual(cone, u, w).value == doctest::Approx(0.0));
  w << 1.0, 1.0;
  CHECK(cone_residual(cone, u, w).value == doctest::Approx(std::sqrt(2.0)));
  u << 0.5, 0.0;  // edge midpoint: cone is {s1 = 0, s2 <= 0}
  w << 0.1, -1.0;
  CHECK(cone_residual(cone, u, w).value == doctest::Approx(0.1));
  u << 0.4, 0.4;
  w << 0.0, 0.0;
  CHECK(cone_residual(cone, u, w).value == doctest::Approx(0.0));
  u << 0.8, 0.8;
  CHECK(cone_residual(cone, u, w).primal_infeasible);
}

TEST_CASE("cone_residual: zero iff member, nonnegative") {
  SplitMix64 g(7);
  auto cone = ConeSpec::orthant(4);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd lam(4), w(4);
    for (int i = 0; i < 4; ++i) {
      lam(i) = g.next_double() < 0.5 ? 0.0 : g.next_double();
      // draw a genuine member of the normal cone, then a violation
      w(i) = lam(i) > 0.0 ? 0.0 : -g.next_double();
    }
    CHECK(cone_residual(cone, lam, w).value == doctest::Approx(0.0));
    w(0) += 1.0 + g.next_double();
    const bool member = lam(0) == 0.0 && w(0) <= 0.0;
    if (!member) CHECK(cone_residual(cone, lam, w).value > 0.0);
  }
}

TEST_CASE("josephy_newton: linear equation solves in one step") {
  GeneralizedEquation geq;
  geq.dim = 1;
  geq.smooth = [](const VectorXd& z) { return VectorXd(2.0 * z); };
  geq.jacobian = [](const VectorXd&) {
    return MatrixXd::Constant(1, 1, 2.0);
  };
  VectorXd rhs(1), start(1);
  rhs << 1.0;
  start << 0.0;
  auto res = josephy_newton(geq, start, rhs);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK(res.solution(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("josephy_newton: cubic equation converges superlinearly") {
  GeneralizedEquation geq;
  geq.dim = 1;
  geq.smooth = [](const VectorXd& z) {
    VectorXd v(1);
    v << z(0) + z(0) * z(0) * z(0);
    return v;
  };
  geq.jacobian = [](const VectorXd& z) {
    return MatrixXd::Constant(1, 1, 1.0 + 3.0 * z(0) * z(0));
  };
  VectorXd rhs = VectorXd::Zero(1);
  VectorXd start(1);
  start << 0.5;
  auto res = josephy_newton(geq, start, rhs);
  CHECK(res.converged);
  CHECK(std::abs(res.solution(0)) <= 1e-12);
  // successive residual ratios shrink
  const auto& h = res.residual_history;
  REQUIRE(h.size() >= 3);
  double prev_ratio = 1.0;
  for (size_t k = 1; k + 1 < h.size(); ++k) {
    if (h[k + 1] <= 0.0 || h[k] < 1e-14) break;
    const double ratio = h[k + 1] / h[k];
    CHECK(ratio < prev_ratio + 1e-12);
    prev_ratio = ratio;
  }
}

TEST_CASE("josephy_newton: scalar variational inequality vs projection oracle") {
  GeneralizedEquation geq;
  geq.dim = 1;
  geq.smooth = [](const VectorXd& z) { return VectorXd(z.array() - 2.0); };
  geq.jacobian = [](const VectorXd&) { return MatrixXd::Identity(1, 1); };
  geq.cone = ConeSpec::orthant(1);
  geq.cone_offset = 0;
  VectorXd rhs = VectorXd::Zero(1);
  VectorXd start = VectorXd::Zero(1);

  // oracle: projected fixed point x <- max(0, x - 0.5 F(x))
  double x = 0.0;
  for (int k = 0; k < 200; ++k) x = std::max(0.0, x - 0.5 * (x - 2.0));

  auto res = josephy_newton(geq, start, rhs);
  CHECK(res.converged);
  CHECK(res.solution(0) == doctest::Approx(x).epsilon(1e-10));
  CHECK(res.solution(0) == doctest::Approx(2.0));

  // boundary-active case: 0 <= x  ⟂  x + 2 >= 0 pins x at the origin
  geq.smooth = [](const VectorXd& z) { return VectorXd(z.array() + 2.0); };
  res = josephy_newton(geq, start, rhs);
  CHECK(res.converged);
  CHECK(res.solution(0) == doctest::Approx(0.0));
}

TEST_CASE("josephy_newton: mixed free and complementarity rows") {
  // rows: 2 z0 + z1 = 4 (free), VI in z1: 0 <= z1 ⟂ z1 - z0 >= 0
  GeneralizedEquation geq;
  geq.dim = 2;
  geq.smooth = [](const VectorXd& z) {
    VectorXd v(2);
    v << 2.0 * z(0) + z(1), z(1) - z(0);
    return v;
  };
  geq.jacobian = [](const VectorXd&) {
    MatrixXd J(2, 2);
    J << 2, 1, -1, 1;
    return J;
  };
  geq.cone = ConeSpec::orthant(1);
  geq.cone_offset = 1;
  VectorXd rhs(2), start(2);
  rhs << 4.0, 0.0;
  start << 0.0, 0.0;
  auto res = josephy_newton(geq, start, rhs);
  CHECK(res.converged);
  // interior branch: z1 = z0 -> 3 z0 = 4
  CHECK(res.solution(0) == doctest::Approx(4.0 / 3.0));
  CHECK(res.solution(1) == doctest::Approx(4.0 / 3.0));
  CHECK(ge_residual(geq, res.solution, rhs).value <= 1e-10);
}

TEST_CASE("josephy_newton: singular subproblem is a structural error") {
  GeneralizedEquation geq;
  geq.dim = 1;
  geq.smooth = [](const VectorXd&) { return VectorXd::Ones(1); };
  geq.jacobian = [](const VectorXd&) { return MatrixXd::Zero(1, 1); };
  VectorXd rhs = VectorXd::Zero(1);
  VectorXd start = VectorXd::Zero(1);
  auto res = josephy_newton(geq, start, rhs);
  CHECK(!res.converged);
  CHECK(res.error.find("iterate") != std::string::npos);
}

TEST_CASE("fit_regularity: exact linear law") {
  std::vector<PerturbationRecord> recs;
  for (int i = 0; i < 6; ++i) {
    PerturbationRecord r;
    r.weak_image_dist = std::pow(10.0, -3 + 0.5 * i);
    r.weak_domain_dist = 2.0 * r.weak_image_dist;
    r.strong_image_dist = r.weak_image_dist;
    r.solver_converged = true;
    recs.push_back(r);
  }
  auto fit = fit_regularity(recs);
  CHECK(fit.beta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.kappa == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.n_records == 6);
}

TEST_CASE("fit_regularity: square-root law and filtering") {
  std::vector<PerturbationRecord> recs;
  for (int i = 0; i < 8; ++i) {
    PerturbationRecord r;
    r.weak_image_dist = std::pow(10.0, -4 + 0.5 * i);
    r.weak_domain_dist = 3.0 * std::sqrt(r.weak_image_dist);
    r.strong_image_dist = r.weak_image_dist;
    r.solver_converged = true;
    recs.push_back(r);
  }
  // non-converged and sub-threshold records must be ignored
  PerturbationRecord junk;
  junk.weak_image_dist = 1.0;
  junk.weak_domain_dist = 1e9;
  junk.solver_converged = false;
  recs.push_back(junk);
  auto fit = fit_regularity(recs, 5e-4);
  CHECK(fit.beta == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fit.kappa == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(fit.n_records == 6);  // the two smallest magnitudes fall below 5e-4
}

TEST_CASE("fit_regularity: envelope covers every used record") {
  SplitMix64 g(99);
  std::vector<PerturbationRecord> recs;
  for (int i = 0; i < 40; ++i) {
    PerturbationRecord r;
    r.weak_image_dist = std::pow(10.0, -4.0 + 4.0 * g.next_double());
    r.weak_domain_dist =
        1.7 * std::pow(r.weak_image_dist, 0.8) * (0.5 + g.next_double());
    r.strong_image_dist = r.weak_image_dist;
    r.solver_converged = true;
    recs.push_back(r);
  }
  auto fit = fit_regularity(recs);
  for (const auto& r : recs)
    CHECK(r.weak_domain_dist <=
          fit.kappa * std::pow(r.weak_image_dist, fit.beta) * (1 + 1e-12));
}

TEST_CASE("fit_regularity: error cases") {
  std::vector<PerturbationRecord> recs(3);
  for (auto& r : recs) {
    r.weak_image_dist = 0.1;
    r.weak_domain_dist = 0.2;
    r.solver_converged = true;
  }
  CHECK_THROWS_AS(fit_regularity(recs), std::invalid_argument);
  recs.resize(8, recs[0]);
  for (auto& r : recs) r.solver_converged = true;
  // all image distances equal -> degenerate spread
  CHECK_THROWS_AS(fit_regularity(recs), std::invalid_argument);
  // min_dist above every record
  for (size_t i = 0; i < recs.size(); ++i)
    recs[i].weak_image_dist = 1e-4 * double(i + 1);
  CHECK_THROWS_AS(fit_regularity(recs, 1.0), std::invalid_argument);
}

namespace {

// SMsR records for  rhs in F(z)  solved from the origin, fitted empirically
RegularityFit fit_smooth_map(
    const std::function<VectorXd(const VectorXd&)>& F,
    const std::function<MatrixXd(const VectorXd&)>& J, std::uint64_t seed) {
  GeneralizedEquation geq;
  geq.dim = 3;
  geq.smooth = F;
  geq.jacobian = J;
  std::vector<PerturbationRecord> recs;
  SplitMix64 g(seed);
  for (int mag_i = 0; mag_i < 6; ++mag_i) {
    const double mag = std::pow(10.0, -3.0 + 0.5 * mag_i);
    for (int dir = 0; dir < 12; ++dir) {
      VectorXd y(3);
      for (int i = 0; i < 3; ++i) y(i) = g.next_symmetric();
      y *= mag / y.norm();
      auto res = josephy_newton(geq, VectorXd::Zero(3), y);
      PerturbationRecord r;
      r.weak_image_dist = r.strong_image_dist = mag;
      r.weak_domain_dist = res.solution.norm();
      r.solver_converged = res.converged;
      recs.push_back(r);
    }
  }
  return fit_regularity(recs);
}

}  // namespace

TEST_CASE("regularity modulus survives small Lipschitz perturbations") {
  // base map A z with A = diag(2, 1, 0.5); adding a mu-Lipschitz term keeps
  // the inclusion regular with modulus at most kappa / (1 - mu kappa)
  MatrixXd A = VectorXd::LinSpaced(3, 0, 0).asDiagonal();
  A.setZero();
  A(0, 0) = 2.0;
  A(1, 1) = 1.0;
  A(2, 2) = 0.5;
  auto base = fit_smooth_map(
      [A](const VectorXd& z) { return VectorXd(A * z); },
      [A](const VectorXd&) { return A; }, 555);
  CHECK(base.beta == doctest::Approx(1.0).epsilon(0.1));
  // envelope with fitted beta may exceed the analytic modulus 2 slightly
  CHECK(base.kappa >= 1.5);
  CHECK(base.kappa <= 3.5);

  const double mu = 0.2;
  REQUIRE(mu * base.kappa < 1.0);
  auto perturbed = fit_smooth_map(
      [A, mu](const VectorXd& z) {
        return VectorXd(A * z - mu * z.array().sin().matrix());
      },
      [A, mu](const VectorXd& z) {
        MatrixXd J = A;
        for (int i = 0; i < 3; ++i) J(i, i) -= mu * std::cos(z(i));
        return J;
      },
      555);
  CHECK(perturbed.beta == doctest::Approx(1.0).epsilon(0.08));
  CHECK(perturbed.kappa <= base.kappa / (1.0 - mu * base.kappa) * 1.1);
}
