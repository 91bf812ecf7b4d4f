#include "mrlab/cone.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mrlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConeDistance infeasible() {
  ConeDistance d;
  d.value = kInf;
  d.primal_infeasible = true;
  return d;
}

// Projection of w onto { s : <s, g_k> <= 0 } with rows g_k of G, by active-set
// enumeration.  Exact for the small vertex counts used here.
double polyhedral_cone_distance(const Eigen::MatrixXd& G,
                                const Eigen::VectorXd& w) {
  const int k = int(G.rows());
  if (k > 16)
    throw std::invalid_argument("cone_residual: too many polytope vertices");
  const double scale = std::max(1.0, w.norm());
  const double tol = 1e-10 * scale;
  double best = kInf;
  for (unsigned mask = 0; mask < (1u << k); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < k; ++i)
      if (mask & (1u << i)) act.push_back(i);
    Eigen::VectorXd s;
    if (act.empty()) {
      s = w;
    } else {
      Eigen::MatrixXd Ga(act.size(), G.cols());
      for (size_t i = 0; i < act.size(); ++i) Ga.row(Eigen::Index(i)) = G.row(act[i]);
      // project w onto the nullspace of Ga; mu are the KKT multipliers
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(
          Ga * Ga.transpose());
      Eigen::VectorXd mu = cod.solve(Ga * w);
      if ((mu.array() < -tol).any()) continue;
      s = w - Ga.transpose() * mu;
    }
    if ((G * s).maxCoeff() > tol) continue;
    best = std::min(best, (w - s).norm());
  }
  return best;
}

// Membership of u in conv(V): min over the simplex of |V a - u|^2, by face
// enumeration.
bool in_convex_hull(const Eigen::MatrixXd& V, const Eigen::VectorXd& u) {
  const int k = int(V.cols());
  if (k > 16)
    throw std::invalid_argument("cone_residual: too many polytope vertices");
  const double scale = std::max(1.0, u.norm());
  const double tol = 1e-9 * scale;
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    std::vector<int> face;
    for (int i = 0; i < k; ++i)
      if (mask & (1u << i)) face.push_back(i);
    Eigen::MatrixXd Vf(V.rows(), face.size());
    for (size_t i = 0; i < face.size(); ++i) Vf.col(Eigen::Index(i)) = V.col(face[i]);
    // affine coordinates on the face: solve [Vf; 1^T] a = [u; 1]
    Eigen::MatrixXd A(V.rows() + 1, face.size());
    A.topRows(V.rows()) = Vf;
    A.bottomRows(1).setOnes();
    Eigen::VectorXd b(V.rows() + 1);
    b.head(V.rows()) = u;
    b(V.rows()) = 1.0;
    Eigen::VectorXd a =
        A.completeOrthogonalDecomposition().solve(b);
    if ((a.array() < -tol).any()) continue;
    if ((A * a - b).norm() <= tol) return true;
  }
  return false;
}

}  // namespace

ConeSpec ConeSpec::zero(int dim) {
  ConeSpec c;
  c.kind = Kind::Zero;
  c.dim = dim;
  return c;
}

ConeSpec ConeSpec::orthant(int dim) {
  ConeSpec c;
  c.kind = Kind::Orthant;
  c.dim = dim;
  return c;
}

ConeSpec ConeSpec::box(Eigen::VectorXd lo, Eigen::VectorXd hi) {
  if (lo.size() != hi.size() || (lo.array() > hi.array()).any())
    throw std::invalid_argument("ConeSpec::box: invalid bounds");
  ConeSpec c;
  c.kind = Kind::Box;
  c.dim = int(lo.size());
  c.lo = std::move(lo);
  c.hi = std::move(hi);
  return c;
}

ConeSpec ConeSpec::polytope(Eigen::MatrixXd vertices) {
  if (vertices.cols() == 0)
    throw std::invalid_argument("ConeSpec::polytope: no vertices");
  ConeSpec c;
  c.kind = Kind::Polytope;
  c.dim = int(vertices.rows());
  c.vertices = std::move(vertices);
  return c;
}

ConeDistance cone_residual(const ConeSpec& cone, const Eigen::VectorXd& primal,
                           const Eigen::VectorXd& normal_candidate) {
  if (primal.size() != cone.dim || normal_candidate.size() != cone.dim)
    throw std::invalid_argument("cone_residual: dimension mismatch");
  const Eigen::VectorXd& w = normal_candidate;
  switch (cone.kind) {
    case ConeSpec::Kind::Zero: {
      ConeDistance d;
      d.value = w.norm();
      return d;
    }
    case ConeSpec::Kind::Orthant: {
      double sq = 0.0;
      for (int i = 0; i < cone.dim; ++i) {
        if (primal(i) < 0.0) return infeasible();
        const double di = primal(i) > 0.0 ? std::abs(w(i)) : std::max(w(i), 0.0);
        sq += di * di;
      }
      ConeDistance d;
      d.value = std::sqrt(sq);
      return d;
    }
    case ConeSpec::Kind::Box: {
      double sq = 0.0;
      for (int i = 0; i < cone.dim; ++i) {
        const double u = primal(i), lo = cone.lo(i), hi = cone.hi(i);
        if (u < lo || u > hi) return infeasible();
        double di;
        if (lo == hi) di = 0.0;                       // normal cone is all of R
        else if (u == lo) di = std::max(w(i), 0.0);   // need w_i <= 0
        else if (u == hi) di = std::max(-w(i), 0.0);  // need w_i >= 0
        else di = std::abs(w(i));
        sq += di * di;
      }
      ConeDistance d;
      d.value = std::sqrt(sq);
      return d;
    }
    case ConeSpec::Kind::Polytope: {
      if (!in_convex_hull(cone.vertices, primal)) return infeasible();
      Eigen::MatrixXd G(cone.vertices.cols(), cone.dim);
      for (int k = 0; k < cone.vertices.cols(); ++k)
        G.row(k) = (cone.vertices.col(k) - primal).transpose();
      ConeDistance d;
      d.value = polyhedral_cone_distance(G, w);
      return d;
    }
  }
  throw std::logic_error("cone_residual: unknown kind");
}

}  // namespace mrlab
