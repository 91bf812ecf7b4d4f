#pragma once

#include <Eigen/Dense>
#include <functional>

namespace mrlab {

// Central finite differences used as the fallback when analytic derivative
// evaluators are not supplied.  Step 1e-5 balances truncation and roundoff
// for O(1)-scaled data.
inline constexpr double kFdStep = 1e-5;

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step = kFdStep);

Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step = kFdStep);

// Symmetrized Hessian obtained by differencing a gradient evaluator.
Eigen::MatrixXd fd_hessian_from_gradient(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    const Eigen::VectorXd& x, double step = kFdStep);

}  // namespace mrlab
