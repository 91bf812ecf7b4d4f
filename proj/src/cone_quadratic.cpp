#include "mrlab/cone_quadratic.hpp"

#include <limits>
#include <stdexcept>

namespace mrlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ConeQuadraticResult cone_quadratic_minimum(const MatrixXd& H, const MatrixXd& W,
                                           const MatrixXd& E,
                                           const MatrixXd& C) {
  const Eigen::Index n = H.rows();
  ConeQuadraticResult out;

  MatrixXd Z;
  if (E.rows() == 0) {
    Z = MatrixXd::Identity(n, n);
  } else {
    Eigen::FullPivLU<MatrixXd> lu(E);
    lu.setThreshold(1e-10);
    if (lu.dimensionOfKernel() == 0) {
      out.trivial = true;
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
    Z = lu.kernel();
  }

  const MatrixXd Hq = Z.transpose() * H * Z;
  const MatrixXd Wq = Z.transpose() * W * Z;
  const int k = int(C.rows());
  if (k > 16)
    throw std::invalid_argument(
        "cone_quadratic_minimum: too many inequality rows for exact "
        "enumeration");
  const MatrixXd Cq = C * Z;

  double best = std::numeric_limits<double>::infinity();
  VectorXd best_dir;
  for (unsigned mask = 0; mask < (1u << k); ++mask) {
    MatrixXd Z2;
    if (mask == 0) {
      Z2 = MatrixXd::Identity(Z.cols(), Z.cols());
    } else {
      std::vector<int> face;
      for (int i = 0; i < k; ++i)
        if (mask & (1u << i)) face.push_back(i);
      MatrixXd Cf(face.size(), Z.cols());
      for (size_t i = 0; i < face.size(); ++i)
        Cf.row(Eigen::Index(i)) = Cq.row(face[i]);
      Eigen::FullPivLU<MatrixXd> lu(Cf);
      lu.setThreshold(1e-10);
      if (lu.dimensionOfKernel() == 0) continue;
      Z2 = lu.kernel();
    }
    const MatrixXd A2 = Z2.transpose() * Hq * Z2;
    const MatrixXd B2 = Z2.transpose() * Wq * Z2;
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(
        0.5 * (A2 + A2.transpose()), 0.5 * (B2 + B2.transpose()));
    if (ges.info() != Eigen::Success) continue;
    for (int e = 0; e < ges.eigenvalues().size(); ++e) {
      const VectorXd vq = Z2 * ges.eigenvectors().col(e);
      for (double sign : {1.0, -1.0}) {
        const VectorXd cand = sign * vq;
        if (k > 0 && (Cq * cand).maxCoeff() > 1e-10 * cand.norm()) continue;
        if (ges.eigenvalues()(e) < best) {
          best = ges.eigenvalues()(e);
          best_dir = cand;
        }
        break;  // both signs share the Rayleigh value
      }
    }
  }

  if (!std::isfinite(best)) {
    out.trivial = true;
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  VectorXd d = Z * best_dir;
  d /= std::sqrt(d.dot(W * d));
  out.value = d.dot(H * d);
  out.direction = d;
  return out;
}

}  // namespace mrlab
