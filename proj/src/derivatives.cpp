#include "mrlab/derivatives.hpp"

namespace mrlab {

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + step;
    xm(i) = x(i) - step;
    g(i) = (f(xp) - f(xm)) / (2.0 * step);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  return g;
}

Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd xp = x, xm = x;
  Eigen::MatrixXd J;
  for (int i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + step;
    xm(i) = x(i) - step;
    const Eigen::VectorXd col = (f(xp) - f(xm)) / (2.0 * step);
    if (J.size() == 0) J.resize(col.size(), x.size());
    J.col(i) = col;
    xp(i) = x(i);
    xm(i) = x(i);
  }
  return J;
}

Eigen::MatrixXd fd_hessian_from_gradient(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    const Eigen::VectorXd& x, double step) {
  Eigen::MatrixXd H = fd_jacobian(grad, x, step);
  return 0.5 * (H + H.transpose());
}

}  // namespace mrlab
