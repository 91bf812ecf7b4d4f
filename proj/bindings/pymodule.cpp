#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>

#include "mrlab/cone.hpp"
#include "mrlab/experiment.hpp"
#include "mrlab/library.hpp"
#include "mrlab/metric.hpp"
#include "mrlab/regularity.hpp"

namespace py = pybind11;
using namespace mrlab;

namespace {

NormKind norm_kind(const std::string& name) {
  if (name == "l1") return NormKind::L1;
  if (name == "l2") return NormKind::L2;
  if (name == "linf") return NormKind::Linf;
  if (name == "w11") return NormKind::W11;
  if (name == "w1inf") return NormKind::W1inf;
  if (name == "euclidean") return NormKind::Euclidean;
  if (name == "weighted") return NormKind::WeightedEuclidean;
  throw std::invalid_argument("unknown norm kind '" + name +
                              "' (l1, l2, linf, w11, w1inf, euclidean, "
                              "weighted)");
}

double eval_norm_py(const Eigen::MatrixXd& values, const std::string& kind,
                    double grid_step,
                    const std::optional<Eigen::VectorXd>& weights) {
  MetricSpec spec;
  spec.kind = norm_kind(kind);
  spec.grid_step = grid_step;
  if (weights) spec.weights = *weights;
  return eval_norm(values, spec);
}

py::dict fit_regularity_py(const std::vector<py::tuple>& rows,
                           double min_dist) {
  std::vector<PerturbationRecord> records;
  records.reserve(rows.size());
  for (const auto& row : rows) {
    if (row.size() != 4)
      throw std::invalid_argument(
          "each record must be (weak_image_dist, weak_domain_dist, "
          "strong_image_dist, solver_converged)");
    PerturbationRecord rec;
    rec.weak_image_dist = row[0].cast<double>();
    rec.weak_domain_dist = row[1].cast<double>();
    rec.strong_image_dist = row[2].cast<double>();
    rec.solver_converged = row[3].cast<bool>();
    records.push_back(rec);
  }
  const RegularityFit fit = fit_regularity(records, min_dist);
  py::dict out;
  out["kappa"] = fit.kappa;
  out["beta"] = fit.beta;
  out["r_squared"] = fit.r_squared;
  out["n_records"] = fit.n_records;
  return out;
}

py::tuple cone_residual_py(const std::string& kind,
                           const Eigen::VectorXd& primal,
                           const Eigen::VectorXd& normal_candidate,
                           const std::optional<Eigen::VectorXd>& lo,
                           const std::optional<Eigen::VectorXd>& hi,
                           const std::optional<Eigen::MatrixXd>& vertices) {
  ConeSpec cone;
  const int dim = int(primal.size());
  if (kind == "zero") {
    cone = ConeSpec::zero(dim);
  } else if (kind == "orthant") {
    cone = ConeSpec::orthant(dim);
  } else if (kind == "box") {
    if (!lo || !hi)
      throw std::invalid_argument("box cone needs lo and hi bounds");
    cone = ConeSpec::box(*lo, *hi);
  } else if (kind == "polytope") {
    if (!vertices)
      throw std::invalid_argument("polytope cone needs a vertex matrix");
    cone = ConeSpec::polytope(*vertices);
  } else {
    throw std::invalid_argument("unknown cone kind '" + kind +
                                "' (zero, orthant, box, polytope)");
  }
  const ConeDistance res = cone_residual(cone, primal, normal_candidate);
  return py::make_tuple(res.value, res.primal_infeasible);
}

py::list list_problems_py() {
  py::list out;
  for (const auto& entry : problem_registry()) {
    py::dict item;
    item["id"] = entry.id;
    item["module"] = entry.module;
    item["description"] = entry.description;
    if (entry.default_N > 0) item["default_N"] = entry.default_N;
    if (entry.default_Nx > 0) {
      item["default_Nx"] = entry.default_Nx;
      item["default_Nt"] = entry.default_Nt;
    }
    out.append(item);
  }
  return out;
}

py::dict run_experiment_py(const std::string& config_json, int jobs,
                           const std::optional<std::string>& output_dir) {
  ExperimentConfig config = parse_experiment_config(config_json);
  if (output_dir) config.output_dir = *output_dir;
  const RunOutcome outcome = run_experiment(config, jobs);
  py::dict out;
  out["exit_code"] = outcome.exit_code;
  out["message"] = outcome.message;
  out["warnings"] = outcome.warnings;
  return out;
}

}  // namespace

PYBIND11_MODULE(_mrlab, m) {
  m.doc() = "experiment toolkit for metric sub-regularity of optimality "
            "systems";

  m.def("eval_norm", &eval_norm_py, py::arg("values"), py::arg("kind"),
        py::arg("grid_step") = 1.0, py::arg("weights") = std::nullopt,
        "Grid-function norm: rows are samples, columns vector components.");
  m.def("fit_regularity", &fit_regularity_py, py::arg("records"),
        py::arg("min_dist") = 1e-6,
        "Envelope power-law fit of domain distance against image distance; "
        "records are (weak_image, weak_domain, strong_image, converged) "
        "tuples.");
  m.def("cone_residual", &cone_residual_py, py::arg("kind"), py::arg("primal"),
        py::arg("normal_candidate"), py::arg("lo") = std::nullopt,
        py::arg("hi") = std::nullopt, py::arg("vertices") = std::nullopt,
        "Distance from a candidate to the normal cone at the primal point; "
        "returns (value, primal_infeasible).");
  m.def("list_problems", &list_problems_py,
        "Built-in problem registry as a list of dicts.");
  m.def("run_experiment", &run_experiment_py, py::arg("config_json"),
        py::arg("jobs") = 1, py::arg("output_dir") = std::nullopt,
        "Parse a JSON config string, run it, write records.csv and "
        "report.json; returns {exit_code, message, warnings}.");
}
