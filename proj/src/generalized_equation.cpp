#include "mrlab/generalized_equation.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace mrlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-coordinate bounds of the cone block seen as a box; orthant rows are
// [0, inf), zero-cone rows carry no bound at all.
struct BlockBounds {
  Eigen::VectorXd lo, hi;
};

BlockBounds block_bounds(const ConeSpec& cone) {
  BlockBounds b;
  b.lo = Eigen::VectorXd::Constant(cone.dim, -kInf);
  b.hi = Eigen::VectorXd::Constant(cone.dim, kInf);
  switch (cone.kind) {
    case ConeSpec::Kind::Zero:
      break;
    case ConeSpec::Kind::Orthant:
      b.lo.setZero();
      break;
    case ConeSpec::Kind::Box:
      b.lo = cone.lo;
      b.hi = cone.hi;
      break;
    case ConeSpec::Kind::Polytope:
      throw std::invalid_argument(
          "josephy_newton: polytope cone blocks are not supported");
  }
  return b;
}

// Pattern entry per cone coordinate: 0 = equation row, 1 = pinned at lo,
// 2 = pinned at hi.
using Pattern = std::vector<char>;

Pattern pattern_at(const Eigen::VectorXd& z, const Eigen::VectorXd& grad,
                   const BlockBounds& bb, int offset) {
  Pattern p(size_t(bb.lo.size()), 0);
  for (int t = 0; t < bb.lo.size(); ++t) {
    const double q = z(offset + t) - grad(t);
    if (q <= bb.lo(t)) p[size_t(t)] = 1;
    else if (q >= bb.hi(t)) p[size_t(t)] = 2;
  }
  return p;
}

struct LinearSolveOutcome {
  Eigen::VectorXd z;
  bool singular = false;
};

// Solve the patterned linear system: equation rows of (A z = b - c) with
// pinned rows replaced by z_v = bound.
LinearSolveOutcome solve_pattern_dense(const Eigen::MatrixXd& A,
                                       const Eigen::VectorXd& rhs_eq,
                                       const Pattern& pat,
                                       const BlockBounds& bb, int offset) {
  const int n = int(A.rows());
  Eigen::MatrixXd M = A;
  Eigen::VectorXd b = rhs_eq;
  for (size_t t = 0; t < pat.size(); ++t) {
    if (pat[t] == 0) continue;
    const int i = offset + int(t);
    M.row(i).setZero();
    M(i, i) = 1.0;
    b(i) = pat[t] == 1 ? bb.lo(Eigen::Index(t)) : bb.hi(Eigen::Index(t));
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  LinearSolveOutcome out;
  if (qr.rank() < n) {
    out.singular = true;
    return out;
  }
  out.z = qr.solve(b);
  return out;
}

LinearSolveOutcome solve_pattern_sparse(const Eigen::SparseMatrix<double>& A,
                                        const Eigen::VectorXd& rhs_eq,
                                        const Pattern& pat,
                                        const BlockBounds& bb, int offset) {
  const int n = int(A.rows());
  std::vector<char> pinned(size_t(n), 0);
  Eigen::VectorXd b = rhs_eq;
  for (size_t t = 0; t < pat.size(); ++t) {
    if (pat[t] == 0) continue;
    const int i = offset + int(t);
    pinned[size_t(i)] = 1;
    b(i) = pat[t] == 1 ? bb.lo(Eigen::Index(t)) : bb.hi(Eigen::Index(t));
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(size_t(A.nonZeros()) + pat.size());
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      if (!pinned[size_t(it.row())])
        trips.emplace_back(int(it.row()), int(it.col()), it.value());
  for (int i = 0; i < n; ++i)
    if (pinned[size_t(i)]) trips.emplace_back(i, i, 1.0);
  Eigen::SparseMatrix<double> M(n, n);
  M.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(M);
  LinearSolveOutcome out;
  if (lu.info() != Eigen::Success) {
    out.singular = true;
    return out;
  }
  out.z = lu.solve(b);
  if (lu.info() != Eigen::Success) out.singular = true;
  return out;
}

}  // namespace

GeResidual ge_residual(const GeneralizedEquation& geq, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& rhs) {
  if (z.size() != geq.dim || rhs.size() != geq.dim)
    throw std::invalid_argument("ge_residual: dimension mismatch");
  const Eigen::VectorXd defect = geq.smooth(z) - rhs;
  double sq = 0.0;
  for (int i = 0; i < geq.dim; ++i) {
    const bool cone_row = i >= geq.cone_offset &&
                          i < geq.cone_offset + geq.cone.dim &&
                          geq.cone.kind != ConeSpec::Kind::Zero;
    if (!cone_row) sq += defect(i) * defect(i);
  }
  GeResidual r;
  if (geq.cone.dim > 0 && geq.cone.kind != ConeSpec::Kind::Zero) {
    const auto cd = cone_residual(
        geq.cone, z.segment(geq.cone_offset, geq.cone.dim),
        -defect.segment(geq.cone_offset, geq.cone.dim));
    if (cd.primal_infeasible) {
      r.value = kInf;
      r.primal_infeasible = true;
      return r;
    }
    sq += cd.value * cd.value;
  }
  r.value = std::sqrt(sq);
  return r;
}

NewtonResult josephy_newton(const GeneralizedEquation& geq,
                            const Eigen::VectorXd& start,
                            const Eigen::VectorXd& rhs,
                            const NewtonOptions& opts) {
  if (start.size() != geq.dim || rhs.size() != geq.dim)
    throw std::invalid_argument("josephy_newton: dimension mismatch");
  const BlockBounds bb = block_bounds(geq.cone);
  const bool use_sparse = bool(geq.jacobian_sparse);
  if (!use_sparse && !geq.jacobian)
    throw std::invalid_argument("josephy_newton: no jacobian evaluator");

  NewtonResult res;
  Eigen::VectorXd z = start;
  Eigen::VectorXd z_best = z;
  double best = kInf;

  for (int k = 0; k <= opts.max_iterations; ++k) {
    const double r = ge_residual(geq, z, rhs).value;
    res.residual_history.push_back(r);
    if (r < best) {
      best = r;
      z_best = z;
    }
    if (r <= opts.tol) {
      res.converged = true;
      break;
    }
    if (k == opts.max_iterations) break;
    res.iterations = k + 1;

    // affine model at z: F(z) + A (z_new - z); equation rhs b - c with
    // c = F(z) - A z
    const Eigen::VectorXd Fz = geq.smooth(z);
    Eigen::MatrixXd Ad;
    Eigen::SparseMatrix<double> As;
    Eigen::VectorXd Az;
    if (use_sparse) {
      As = geq.jacobian_sparse(z);
      Az = As * z;
    } else {
      Ad = geq.jacobian(z);
      Az = Ad * z;
    }
    const Eigen::VectorXd rhs_eq = rhs - Fz + Az;

    // grad of the cone rows at iterate w: (A w + c - b) restricted to block
    auto block_grad = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
      if (geq.cone.dim == 0) return Eigen::VectorXd();
      Eigen::VectorXd Aw = use_sparse ? Eigen::VectorXd(As * w)
                                      : Eigen::VectorXd(Ad * w);
      return (Aw - rhs_eq).segment(geq.cone_offset, geq.cone.dim);
    };

    Eigen::VectorXd w = z;
    Pattern pat = pattern_at(w, block_grad(w), bb, geq.cone_offset);
    std::set<Pattern> seen;
    bool solved = false;
    for (int sweep = 0; sweep < opts.max_pattern_sweeps; ++sweep) {
      if (!seen.insert(pat).second) break;  // cycle
      const auto out = use_sparse
                           ? solve_pattern_sparse(As, rhs_eq, pat, bb,
                                                  geq.cone_offset)
                           : solve_pattern_dense(Ad, rhs_eq, pat, bb,
                                                 geq.cone_offset);
      if (out.singular) {
        res.error = "singular linearized subproblem at iterate " +
                    std::to_string(k);
        res.solution = z_best;
        return res;
      }
      w = out.z;
      Pattern next = pattern_at(w, block_grad(w), bb, geq.cone_offset);
      if (next == pat) {
        solved = true;
        break;
      }
      pat = std::move(next);
    }
    if (!solved) break;  // subproblem did not settle; report best iterate
    z = w;
  }
  res.solution = res.converged ? z : z_best;
  if (res.converged) res.iterations = int(res.residual_history.size()) - 1;
  return res;
}

}  // namespace mrlab
