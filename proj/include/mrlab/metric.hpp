#pragma once

#include <Eigen/Dense>

namespace mrlab {

// Norm selector for grid functions and finite-dimensional vectors.
//
// Grid conventions (grid_step = h):
//   L1, L2, Linf      samples are cell values (left endpoints); a sample row
//                     of a matrix is one vector value, measured Euclidean.
//                     L1 = h * sum |v_j|, L2 = sqrt(h * sum |v_j|^2),
//                     Linf = max |v_j|.
//   W11, W1inf        samples are node values of a piecewise-linear function;
//                     M nodes span M-1 cells.  Value part uses the
//                     left-endpoint rule, derivative part uses forward
//                     differences divided by h.
//   Euclidean         plain |v|_2 of the flattened data, no grid weight.
//   WeightedEuclidean sqrt(sum w_i v_i^2) on the flattened data.
enum class NormKind { L1, L2, Linf, W11, W1inf, Euclidean, WeightedEuclidean };

struct MetricSpec {
  NormKind kind = NormKind::Euclidean;
  double grid_step = 1.0;      // > 0; used by the grid-function kinds
  Eigen::VectorXd weights;     // WeightedEuclidean only; all entries > 0

  static MetricSpec euclidean() { return {}; }
  static MetricSpec weighted(Eigen::VectorXd w) {
    MetricSpec s;
    s.kind = NormKind::WeightedEuclidean;
    s.weights = std::move(w);
    return s;
  }
  static MetricSpec grid(NormKind kind, double h) {
    MetricSpec s;
    s.kind = kind;
    s.grid_step = h;
    return s;
  }
};

// Norm of grid data under `spec`.  Rows of `values` are samples, columns are
// vector components.  Throws std::invalid_argument on empty input, a
// non-positive grid step, a weight vector that does not match the flattened
// size, or a Sobolev kind with fewer than two sample rows.
double eval_norm(const Eigen::MatrixXd& values, const MetricSpec& spec);
double eval_norm(const Eigen::VectorXd& values, const MetricSpec& spec);

}  // namespace mrlab
