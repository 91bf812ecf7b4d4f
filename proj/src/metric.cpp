#include "mrlab/metric.hpp"

#include <cmath>
#include <stdexcept>

namespace mrlab {

namespace {

void check_common(const Eigen::MatrixXd& v, const MetricSpec& spec) {
  if (v.size() == 0) throw std::invalid_argument("eval_norm: empty input");
  switch (spec.kind) {
    case NormKind::L1:
    case NormKind::L2:
    case NormKind::Linf:
    case NormKind::W11:
    case NormKind::W1inf:
      if (!(spec.grid_step > 0.0))
        throw std::invalid_argument("eval_norm: grid_step must be positive");
      break;
    default:
      break;
  }
}

// Euclidean length of each sample row.
Eigen::VectorXd row_norms(const Eigen::MatrixXd& v) {
  return v.rowwise().norm();
}

}  // namespace

double eval_norm(const Eigen::MatrixXd& values, const MetricSpec& spec) {
  check_common(values, spec);
  const double h = spec.grid_step;
  switch (spec.kind) {
    case NormKind::L1:
      return h * row_norms(values).sum();
    case NormKind::L2:
      return std::sqrt(h * row_norms(values).squaredNorm());
    case NormKind::Linf:
      return row_norms(values).maxCoeff();
    case NormKind::W11: {
      const Eigen::Index m = values.rows();
      if (m < 2) throw std::invalid_argument("eval_norm: W11 needs >= 2 nodes");
      const auto cells = values.topRows(m - 1);
      const Eigen::MatrixXd diff = values.bottomRows(m - 1) - cells;
      // h * sum |v_j| + h * sum |dv_j / h|
      return h * row_norms(cells).sum() + row_norms(diff).sum();
    }
    case NormKind::W1inf: {
      const Eigen::Index m = values.rows();
      if (m < 2)
        throw std::invalid_argument("eval_norm: W1inf needs >= 2 nodes");
      const Eigen::MatrixXd diff = values.bottomRows(m - 1) - values.topRows(m - 1);
      return row_norms(values).maxCoeff() + row_norms(diff).maxCoeff() / h;
    }
    case NormKind::Euclidean:
      return values.norm();
    case NormKind::WeightedEuclidean: {
      if (spec.weights.size() != values.size())
        throw std::invalid_argument(
            "eval_norm: weight vector does not match flattened size");
      if ((spec.weights.array() <= 0.0).any())
        throw std::invalid_argument("eval_norm: weights must be positive");
      const Eigen::Map<const Eigen::VectorXd> flat(values.data(), values.size());
      return std::sqrt((spec.weights.array() * flat.array().square()).sum());
    }
  }
  throw std::logic_error("eval_norm: unknown kind");
}

double eval_norm(const Eigen::VectorXd& values, const MetricSpec& spec) {
  return eval_norm(Eigen::MatrixXd(values), spec);
}

}  // namespace mrlab
