#include "mrlab/experiment.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mrlab/library.hpp"
#include "mrlab/metric.hpp"

namespace mrlab {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Reference solve failed: exit code 3 instead of the config code 2.
struct ReferenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void config_error(const std::string& message) {
  throw std::invalid_argument(message);
}

std::string fmt17(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

int round_int(double value, const char* name) {
  const double r = std::round(value);
  if (!(std::abs(r) < 2.0e9))
    config_error(std::string("tolerance '") + name + "' is out of range");
  return static_cast<int>(r);
}

// ---------------------------------------------------------------- parsing

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "problem_id", "experiment", "seed",        "magnitudes",
      "grid",       "grids",      "tolerances",  "components",
      "rho_constant", "variant",  "directions",  "output_dir"};
  return keys;
}

void check_known_keys(const ordered_json& doc) {
  for (const auto& item : doc.items()) {
    bool known = false;
    for (const auto& key : known_config_keys())
      if (item.key() == key) known = true;
    if (!known) config_error("unknown config key '" + item.key() + "'");
  }
}

std::uint64_t parse_seed(const ordered_json& doc) {
  if (!doc.contains("seed"))
    config_error("config is missing the required 'seed' field");
  const auto& seed = doc.at("seed");
  if (seed.is_number_unsigned()) return seed.get<std::uint64_t>();
  if (seed.is_number_integer() && seed.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(seed.get<std::int64_t>());
  config_error("'seed' must be a nonnegative integer");
}

std::vector<double> parse_magnitudes(const ordered_json& doc) {
  std::vector<double> magnitudes;
  if (!doc.contains("magnitudes")) return magnitudes;
  const auto& arr = doc.at("magnitudes");
  if (!arr.is_array()) config_error("'magnitudes' must be an array of reals");
  for (const auto& value : arr) {
    if (!value.is_number()) config_error("'magnitudes' entries must be reals");
    magnitudes.push_back(value.get<double>());
  }
  for (size_t i = 0; i < magnitudes.size(); ++i) {
    if (!(magnitudes[i] > 0.0))
      config_error("'magnitudes' entries must be positive");
    if (i > 0 && !(magnitudes[i] > magnitudes[i - 1]))
      config_error("'magnitudes' must be strictly ascending");
  }
  return magnitudes;
}

void parse_grid(const ordered_json& doc, ExperimentConfig& config) {
  if (!doc.contains("grid")) return;
  const auto& grid = doc.at("grid");
  if (!grid.is_object())
    config_error("'grid' must be an object with N or (Nx, Nt)");
  for (const auto& item : grid.items()) {
    if (item.key() != "N" && item.key() != "Nx" && item.key() != "Nt")
      config_error("unknown grid key '" + item.key() + "'");
    if (!item.value().is_number_integer() || item.value().get<int>() <= 0)
      config_error("grid sizes must be positive integers");
  }
  if (grid.contains("N")) {
    if (grid.contains("Nx") || grid.contains("Nt"))
      config_error("'grid' takes either N or (Nx, Nt), not both");
    config.N = grid.at("N").get<int>();
  } else {
    if (!grid.contains("Nx") || !grid.contains("Nt"))
      config_error("'grid' needs both Nx and Nt for space-time problems");
    config.Nx = grid.at("Nx").get<int>();
    config.Nt = grid.at("Nt").get<int>();
  }
}

std::vector<int> parse_grids(const ordered_json& doc) {
  std::vector<int> grids;
  if (!doc.contains("grids")) return grids;
  const auto& arr = doc.at("grids");
  if (!arr.is_array()) config_error("'grids' must be an array of integers");
  for (const auto& value : arr) {
    if (!value.is_number_integer() || value.get<int>() <= 0)
      config_error("'grids' entries must be positive integers");
    grids.push_back(value.get<int>());
    if (grids.size() > 1 && grids[grids.size() - 2] >= grids.back())
      config_error("'grids' must be strictly ascending");
  }
  return grids;
}

}  // namespace

ExperimentKind to_experiment_kind(const std::string& name) {
  if (name == "smsr") return ExperimentKind::Smsr;
  if (name == "smr") return ExperimentKind::Smr;
  if (name == "holder") return ExperimentKind::Holder;
  if (name == "coercivity") return ExperimentKind::Coercivity;
  if (name == "mfcq") return ExperimentKind::Mfcq;
  if (name == "growth") return ExperimentKind::Growth;
  if (name == "ab_check") return ExperimentKind::AbCheck;
  if (name == "euler_study") return ExperimentKind::EulerStudy;
  if (name == "solve") return ExperimentKind::Solve;
  config_error("unknown experiment '" + name +
               "'; expected one of smsr, smr, holder, coercivity, mfcq, "
               "growth, ab_check, euler_study, solve");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Smsr: return "smsr";
    case ExperimentKind::Smr: return "smr";
    case ExperimentKind::Holder: return "holder";
    case ExperimentKind::Coercivity: return "coercivity";
    case ExperimentKind::Mfcq: return "mfcq";
    case ExperimentKind::Growth: return "growth";
    case ExperimentKind::AbCheck: return "ab_check";
    case ExperimentKind::EulerStudy: return "euler_study";
    case ExperimentKind::Solve: return "solve";
  }
  return "unknown";
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) config_error("config must be a JSON object");
  check_known_keys(doc);

  ExperimentConfig config;
  if (!doc.contains("problem_id") || !doc.at("problem_id").is_string())
    config_error("config needs a string 'problem_id'");
  config.problem_id = doc.at("problem_id").get<std::string>();

  if (!doc.contains("experiment") || !doc.at("experiment").is_string())
    config_error("config needs a string 'experiment'");
  config.experiment =
      to_experiment_kind(doc.at("experiment").get<std::string>());

  config.seed = parse_seed(doc);
  config.magnitudes = parse_magnitudes(doc);
  parse_grid(doc, config);
  config.grids = parse_grids(doc);

  if (doc.contains("tolerances")) {
    const auto& tols = doc.at("tolerances");
    if (!tols.is_object())
      config_error("'tolerances' must be an object of named reals");
    for (const auto& item : tols.items()) {
      if (!item.value().is_number())
        config_error("tolerance '" + item.key() + "' must be a real");
      config.tolerances[item.key()] = item.value().get<double>();
    }
  }

  if (doc.contains("components")) {
    const auto& comps = doc.at("components");
    if (!comps.is_array())
      config_error("'components' must be an array of block names");
    for (const auto& value : comps) {
      if (!value.is_string() || value.get<std::string>().empty())
        config_error("'components' entries must be nonempty strings");
      config.components.push_back(value.get<std::string>());
    }
    if (config.components.empty())
      config_error("'components' must name at least one block");
  }

  if (doc.contains("rho_constant")) {
    if (!doc.at("rho_constant").is_boolean())
      config_error("'rho_constant' must be a boolean");
    config.rho_constant = doc.at("rho_constant").get<bool>();
  }

  if (doc.contains("variant")) {
    if (!doc.at("variant").is_string())
      config_error("'variant' must be a string");
    config.variant = doc.at("variant").get<std::string>();
  }

  if (doc.contains("directions")) {
    if (!doc.at("directions").is_number_integer() ||
        doc.at("directions").get<int>() <= 0)
      config_error("'directions' must be a positive integer");
    config.directions = doc.at("directions").get<int>();
  }

  if (!doc.contains("output_dir") || !doc.at("output_dir").is_string() ||
      doc.at("output_dir").get<std::string>().empty())
    config_error("config needs a nonempty string 'output_dir'");
  config.output_dir = doc.at("output_dir").get<std::string>();

  const bool sweep = config.experiment == ExperimentKind::Smsr ||
                     config.experiment == ExperimentKind::Smr ||
                     config.experiment == ExperimentKind::Holder;
  if (sweep && config.magnitudes.empty())
    config_error("experiment '" + to_string(config.experiment) +
                 "' needs a nonempty 'magnitudes' list");
  if (config.experiment == ExperimentKind::EulerStudy && config.grids.empty())
    config_error("experiment 'euler_study' needs a nonempty 'grids' list");
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

namespace {

// ------------------------------------------------------------- run context

struct RunContext {
  const ExperimentConfig& cfg;
  const ProblemInfo& info;
  int jobs = 1;

  ordered_json results;  // experiment-specific block of report.json
  std::vector<PerturbationRecord> records;
  std::vector<double> record_magnitudes;
  ordered_json fit_control;   // null until a sweep fit succeeds
  ordered_json fit_state;     // parabolic only
  std::vector<std::string> warnings;
  // extra deterministic output files: name -> full content
  std::vector<std::pair<std::string, std::string>> files;
};

double tol_or(const RunContext& ctx, const std::string& name, double fallback) {
  const auto it = ctx.cfg.tolerances.find(name);
  return it == ctx.cfg.tolerances.end() ? fallback : it->second;
}

int itol_or(const RunContext& ctx, const std::string& name, int fallback) {
  const auto it = ctx.cfg.tolerances.find(name);
  return it == ctx.cfg.tolerances.end() ? fallback
                                        : round_int(it->second, name.c_str());
}

// The sweep records all use the requested magnitude of their sample; the
// module experiments emit directions-per-magnitude records per entry in
// sample-index order.
void assign_magnitudes(RunContext& ctx) {
  ctx.record_magnitudes.resize(ctx.records.size(), 0.0);
  if (ctx.cfg.magnitudes.empty() || ctx.records.empty()) return;
  const size_t per = ctx.records.size() / ctx.cfg.magnitudes.size();
  for (size_t i = 0; i < ctx.records.size(); ++i) {
    const size_t m = per == 0 ? 0 : std::min(i / per,
                                             ctx.cfg.magnitudes.size() - 1);
    ctx.record_magnitudes[i] = ctx.cfg.magnitudes[m];
  }
}

ordered_json fit_to_json(const RegularityFit& fit) {
  return ordered_json{{"kappa", fit.kappa},
                      {"beta", fit.beta},
                      {"r_squared", fit.r_squared},
                      {"n_records", fit.n_records}};
}

void fit_records(RunContext& ctx) {
  ctx.fit_control = nullptr;
  if (ctx.records.empty()) return;
  try {
    const RegularityFit fit =
        fit_regularity(ctx.records, tol_or(ctx, "min_dist", 1e-12));
    ctx.fit_control = fit_to_json(fit);
  } catch (const std::invalid_argument& e) {
    ctx.warnings.push_back(std::string("fit skipped: ") + e.what());
  }
}

void check_components(const RunContext& ctx,
                      const std::vector<std::string>& allowed) {
  for (const auto& name : ctx.cfg.components) {
    bool ok = false;
    for (const auto& candidate : allowed)
      if (name == candidate) ok = true;
    if (!ok) {
      std::string list;
      for (const auto& candidate : allowed) {
        if (!list.empty()) list += ", ";
        list += candidate;
      }
      config_error("component '" + name + "' is not a disturbance block of " +
                   ctx.info.module + " (expected one of " + list + ")");
    }
  }
}

bool component_on(const RunContext& ctx, const std::string& name,
                  bool fallback) {
  if (ctx.cfg.components.empty()) return fallback;
  for (const auto& entry : ctx.cfg.components)
    if (entry == name) return true;
  return false;
}

// --------------------------------------------------------------- csv text

std::string shared_records_csv(const RunContext& ctx) {
  std::string out =
      "sample_index,magnitude,weak_image_dist,weak_domain_dist,"
      "strong_image_dist,solver_converged\n";
  for (size_t i = 0; i < ctx.records.size(); ++i) {
    const auto& rec = ctx.records[i];
    out += std::to_string(i);
    out += ',';
    out += fmt17(ctx.record_magnitudes[i]);
    out += ',';
    out += fmt17(rec.weak_image_dist);
    out += ',';
    out += fmt17(rec.weak_domain_dist);
    out += ',';
    out += fmt17(rec.strong_image_dist);
    out += ',';
    out += rec.solver_converged ? '1' : '0';
    out += '\n';
  }
  return out;
}

ordered_json records_json_rows(const RunContext& ctx) {
  ordered_json rows = ordered_json::array();
  for (size_t i = 0; i < ctx.records.size(); ++i) {
    const auto& rec = ctx.records[i];
    rows.push_back(ordered_json{{"sample_index", i},
                                {"magnitude", ctx.record_magnitudes[i]},
                                {"weak_image_dist", rec.weak_image_dist},
                                {"weak_domain_dist", rec.weak_domain_dist},
                                {"strong_image_dist", rec.strong_image_dist},
                                {"solver_converged", rec.solver_converged}});
  }
  return rows;
}

std::string matrix_csv(const std::string& header,
                       const std::vector<double>& times, const MatrixXd& data) {
  std::string out = header + "\n";
  for (int r = 0; r < data.rows(); ++r) {
    out += fmt17(times[r]);
    for (int c = 0; c < data.cols(); ++c) {
      out += ',';
      out += fmt17(data(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string field_csv(const Field2D& field) {
  std::ostringstream out;
  write_field_csv(field, out);
  return out.str();
}

// ------------------------------------------------------------ nlp running

void run_nlp(RunContext& ctx) {
  const NlpProblem problem = make_nlp_problem(ctx.cfg.problem_id);
  const KktTriple reference = nlp_reference_point(ctx.cfg.problem_id);
  if (ctx.cfg.Nx != 0 || ctx.cfg.Nt != 0 || ctx.cfg.N != 0)
    config_error("problem '" + ctx.cfg.problem_id + "' has no grid");

  const KktResidual ref_residual = kkt_residual(problem, reference);
  if (ref_residual.image_norm > 1e-9 || ref_residual.multiplier_infeasible)
    throw ReferenceFailure("reference point does not satisfy the first-order "
                           "system of '" + ctx.cfg.problem_id + "'");

  switch (ctx.cfg.experiment) {
    case ExperimentKind::Smsr: {
      check_components(ctx, {"zeta", "xi", "eta"});
      NlpSweepParams params;
      params.seed = ctx.cfg.seed;
      params.magnitudes = ctx.cfg.magnitudes;
      params.directions_per_magnitude = ctx.cfg.directions;
      params.perturb_zeta = component_on(ctx, "zeta", true);
      params.perturb_xi = component_on(ctx, "xi", true);
      params.perturb_eta = component_on(ctx, "eta", true);
      params.newton.tol = tol_or(ctx, "newton_tol", 1e-10);
      params.newton.max_iterations = itol_or(ctx, "max_iterations", 50);
      params.jobs = ctx.jobs;
      ctx.records = smsr_experiment(problem, reference, params);
      break;
    }
    case ExperimentKind::Coercivity: {
      const CoercivityResult res = check_coercivity(
          problem, reference, MetricSpec::euclidean(),
          tol_or(ctx, "active_tol", 1e-8));
      ctx.results["c0"] = res.c0;
      ctx.results["cone_trivial"] = res.cone_trivial;
      break;
    }
    case ExperimentKind::Mfcq: {
      const MfcqResult res = check_strict_mfcq(problem, reference,
                                               tol_or(ctx, "active_tol", 1e-8));
      ctx.results["holds"] = res.holds;
      ctx.results["lambda_certificate"] =
          std::vector<double>(res.lambda_certificate.begin(),
                              res.lambda_certificate.end());
      ctx.results["ystar_certificate"] =
          std::vector<double>(res.ystar_certificate.begin(),
                              res.ystar_certificate.end());
      break;
    }
    case ExperimentKind::Solve: {
      KktTriple start;
      start.x = VectorXd::Zero(problem.n);
      start.lambda = VectorXd::Zero(problem.m);
      start.ystar = VectorXd::Zero(problem.p);
      NewtonOptions opts;
      opts.tol = tol_or(ctx, "newton_tol", 1e-10);
      opts.max_iterations = itol_or(ctx, "max_iterations", 50);
      const PerturbedKktResult res = solve_perturbed_kkt(
          problem, start, KktDisturbance::zero(problem), opts);
      if (!res.converged)
        throw ReferenceFailure("first-order solve of '" + ctx.cfg.problem_id +
                               "' did not converge: " + res.error);
      ctx.results["converged"] = res.converged;
      ctx.results["iterations"] = res.residual_history.empty()
                                      ? 0
                                      : int(res.residual_history.size()) - 1;
      ctx.results["residual_history"] = res.residual_history;
      std::string csv = "component,index,value\n";
      for (int i = 0; i < res.s.x.size(); ++i)
        csv += "x," + std::to_string(i) + "," + fmt17(res.s.x(i)) + "\n";
      for (int i = 0; i < res.s.lambda.size(); ++i)
        csv += "lambda," + std::to_string(i) + "," + fmt17(res.s.lambda(i)) +
               "\n";
      for (int i = 0; i < res.s.ystar.size(); ++i)
        csv += "ystar," + std::to_string(i) + "," + fmt17(res.s.ystar(i)) +
               "\n";
      ctx.files.emplace_back("solution.csv", csv);
      break;
    }
    default:
      config_error("experiment '" + to_string(ctx.cfg.experiment) +
                   "' is not available for module nlp-kkt (use smsr, "
                   "coercivity, mfcq or solve)");
  }
}

// ----------------------------------------------------------- mayer running

void run_mayer(RunContext& ctx) {
  const MayerOcp ocp = make_mayer_problem(ctx.cfg.problem_id);
  if (ctx.cfg.Nx != 0 || ctx.cfg.Nt != 0)
    config_error("problem '" + ctx.cfg.problem_id +
                 "' uses a trajectory grid (set grid.N)");
  const int N = ctx.cfg.N > 0 ? ctx.cfg.N : ctx.info.default_N;
  const DiscreteQuadruple reference =
      mayer_reference_solution(ocp, ctx.cfg.problem_id, N);
  const OcpResidual ref_residual = pmp_residual(ocp, reference);
  if (ref_residual.strong_norm > 1e-9 || ref_residual.multiplier_infeasible)
    throw ReferenceFailure("reference solution does not satisfy the discrete "
                           "optimality system of '" + ctx.cfg.problem_id + "'");
  ctx.results["N"] = N;

  switch (ctx.cfg.experiment) {
    case ExperimentKind::Smsr: {
      check_components(ctx, {"xi", "pi", "nu", "rho", "eta"});
      OcpSweepParams params;
      params.seed = ctx.cfg.seed;
      params.magnitudes = ctx.cfg.magnitudes;
      params.directions_per_magnitude = ctx.cfg.directions;
      params.perturb_xi = component_on(ctx, "xi", true);
      params.perturb_pi = component_on(ctx, "pi", true);
      params.perturb_nu = component_on(ctx, "nu", true);
      params.perturb_rho = component_on(ctx, "rho", true);
      params.perturb_eta = component_on(ctx, "eta", true);
      params.newton_tol = tol_or(ctx, "newton_tol", 1e-10);
      params.max_iterations = itol_or(ctx, "max_iterations", 30);
      params.jobs = ctx.jobs;
      ctx.records = smsr_experiment(ocp, reference, params);
      break;
    }
    case ExperimentKind::Coercivity: {
      const ConeQuadraticResult res = coercivity_on_cone(
          ocp, reference, tol_or(ctx, "delta", 0.1),
          tol_or(ctx, "active_tol", 1e-8));
      ctx.results["c0"] = res.value;
      ctx.results["cone_trivial"] = res.trivial;
      break;
    }
    case ExperimentKind::Solve: {
      // start away from the solution so the iteration count is meaningful
      DiscreteQuadruple start = reference;
      start.u.setConstant(0.5);
      start.x = forward_simulate(ocp, ocp.x_init, start.u);
      const PmpSolveResult res =
          solve_pmp(ocp, start, OcpDisturbance::zero(ocp, N),
                    tol_or(ctx, "newton_tol", 1e-10),
                    itol_or(ctx, "max_iterations", 30));
      if (!res.converged)
        throw ReferenceFailure("optimality-system solve of '" +
                               ctx.cfg.problem_id +
                               "' did not converge: " + res.error);
      ctx.results["converged"] = res.converged;
      ctx.results["iterations"] = int(res.residual_history.size());
      ctx.results["residual_history"] = res.residual_history;
      ctx.results["strong_residual"] = res.strong_residual;

      const double h = 1.0 / N;
      std::vector<double> node_times(N + 1), cell_times(N);
      for (int j = 0; j <= N; ++j) node_times[j] = h * j;
      for (int j = 0; j < N; ++j) cell_times[j] = h * j;
      MatrixXd nodes(N + 1, 2 * ocp.n);
      nodes << res.s.x, res.s.p;
      MatrixXd cells(N, ocp.m + ocp.k);
      cells << res.s.u, res.s.lam;
      std::string state_header = "t";
      for (int c = 0; c < ocp.n; ++c)
        state_header += ",x" + std::to_string(c);
      for (int c = 0; c < ocp.n; ++c)
        state_header += ",p" + std::to_string(c);
      std::string cell_header = "t";
      for (int c = 0; c < ocp.m; ++c)
        cell_header += ",u" + std::to_string(c);
      for (int c = 0; c < ocp.k; ++c)
        cell_header += ",lam" + std::to_string(c);
      ctx.files.emplace_back("states.csv",
                             matrix_csv(state_header, node_times, nodes));
      ctx.files.emplace_back("controls.csv",
                             matrix_csv(cell_header, cell_times, cells));
      break;
    }
    default:
      config_error("experiment '" + to_string(ctx.cfg.experiment) +
                   "' is not available for module ocp-mayer (use smsr, "
                   "coercivity or solve)");
  }
}

// ---------------------------------------------------------- affine running

AffineSolveOptions affine_options(const RunContext& ctx) {
  AffineSolveOptions opts;
  opts.tol = tol_or(ctx, "solve_tol", 1e-9);
  opts.max_sweeps = itol_or(ctx, "max_sweeps", 300);
  return opts;
}

GrowthVariant parse_growth_variant(const std::string& name) {
  if (name == "AA2") return GrowthVariant::AA2;
  if (name == "AA2prime") return GrowthVariant::AA2prime;
  if (name == "AA2p") return GrowthVariant::AA2p;
  config_error("unknown growth variant '" + name +
               "' (expected AA2, AA2prime or AA2p)");
}

void run_affine(RunContext& ctx) {
  const AffineOcp ocp = make_affine_problem(ctx.cfg.problem_id);
  if (ctx.cfg.Nx != 0 || ctx.cfg.Nt != 0)
    config_error("problem '" + ctx.cfg.problem_id +
                 "' uses a trajectory grid (set grid.N)");
  const int N = ctx.cfg.N > 0 ? ctx.cfg.N : ctx.info.default_N;
  ctx.results["N"] = N;

  const auto solve_reference = [&](int grid_count) {
    const AffineSolveResult res =
        solve_affine_pmp(ocp, grid_count, MatrixXd::Zero(grid_count, ocp.m),
                         nullptr, affine_options(ctx));
    if (!res.converged)
      throw ReferenceFailure("reference sweep solve of '" +
                             ctx.cfg.problem_id + "' did not converge at N = " +
                             std::to_string(grid_count) +
                             (res.error.empty() ? "" : ": " + res.error));
    return res;
  };

  switch (ctx.cfg.experiment) {
    case ExperimentKind::Smsr:
    case ExperimentKind::Smr: {
      check_components(ctx, {"xi", "pi", "rho"});
      const AffineSolveResult reference = solve_reference(N);
      AffineSweepParams params;
      params.mode = ctx.cfg.experiment == ExperimentKind::Smr
                        ? AffineRegularityMode::Smr
                        : AffineRegularityMode::Smsr;
      params.seed = ctx.cfg.seed;
      params.magnitudes = ctx.cfg.magnitudes;
      params.directions_per_magnitude = ctx.cfg.directions;
      params.perturb_xi = component_on(ctx, "xi", false);
      params.perturb_pi = component_on(ctx, "pi", false);
      params.perturb_rho = component_on(ctx, "rho", true);
      params.rho_constant = ctx.cfg.rho_constant;
      params.solve = affine_options(ctx);
      params.jobs = ctx.jobs;
      const AffineRegularityReport report =
          regularity_experiment(ocp, reference, params);
      ctx.records = report.records;
      ctx.results["hux_b_symmetric"] = report.hux_b_symmetric;
      break;
    }
    case ExperimentKind::AbCheck: {
      const AffineSolveResult reference = solve_reference(N);
      const ABCheckResult res = check_assumption_AB(
          reference.sigma, ocp.U, tol_or(ctx, "tau", 0.1),
          tol_or(ctx, "min_slope", 1e-3), tol_or(ctx, "flat_threshold", 0.05));
      ctx.results["holds"] = res.holds;
      if (std::isfinite(res.kappa_est))
        ctx.results["kappa_est"] = res.kappa_est;
      else
        ctx.results["kappa_est"] = nullptr;  // no zeros located
      ordered_json zeros = ordered_json::array();
      std::string csv = "edge,t,slope\n";
      for (const auto& zero : res.zeros) {
        zeros.push_back(ordered_json{
            {"edge", zero.edge}, {"t", zero.t}, {"slope", zero.slope}});
        csv += std::to_string(zero.edge) + "," + fmt17(zero.t) + "," +
               fmt17(zero.slope) + "\n";
      }
      ctx.results["zeros"] = zeros;
      ctx.files.emplace_back("zeros.csv", csv);
      break;
    }
    case ExperimentKind::Growth: {
      const AffineSolveResult reference = solve_reference(N);
      GrowthCheckParams params;
      params.variant = parse_growth_variant(ctx.cfg.variant);
      params.c0 = tol_or(ctx, "c0", 0.1);
      params.alpha0 = tol_or(ctx, "alpha", 0.5);
      params.gamma0 = tol_or(ctx, "gamma0", 0.1);
      params.seed = ctx.cfg.seed;
      params.n_samples = itol_or(ctx, "n_samples", 500);
      params.kappa_exp = tol_or(ctx, "kappa_exp", 2.0);
      params.min_support_cells = itol_or(ctx, "min_support_cells", 4);
      params.jobs = ctx.jobs;
      const GrowthCheckResult res = check_growth(ocp, reference, params);
      ctx.results["holds"] = res.holds;
      ctx.results["c0_empirical"] = res.c0_empirical;
      ctx.results["n_samples"] = res.n_samples;
      std::vector<double> cell_times(res.worst_control.rows());
      for (size_t j = 0; j < cell_times.size(); ++j)
        cell_times[j] = ocp.T * double(j) / double(cell_times.size());
      std::string header = "t";
      for (int c = 0; c < res.worst_control.cols(); ++c)
        header += ",u" + std::to_string(c);
      ctx.files.emplace_back("worst_control.csv",
                             matrix_csv(header, cell_times, res.worst_control));
      break;
    }
    case ExperimentKind::EulerStudy: {
      const int finest = ctx.cfg.grids.back();
      const int ref_grid = itol_or(ctx, "ref_grid", 8 * finest);
      const auto solve_grid = [&](int grid_count) {
        const AffineSolveResult res = solve_reference(grid_count);
        return std::make_pair(res.s.u, res.s.x);
      };
      const EulerStudy study =
          euler_error_study(solve_grid, ctx.cfg.grids, ref_grid, ocp.T);
      ctx.results["slope_u"] = study.slope_u;
      ctx.results["slope_x"] = study.slope_x;
      ctx.results["ref_grid"] = ref_grid;
      std::string csv = "N,h,err_u_l1,err_x_linf\n";
      ordered_json rows = ordered_json::array();
      for (const auto& row : study.rows) {
        csv += std::to_string(row.N) + "," + fmt17(row.h) + "," +
               fmt17(row.err_u_l1) + "," + fmt17(row.err_x_linf) + "\n";
        rows.push_back(ordered_json{{"N", row.N},
                                    {"h", row.h},
                                    {"err_u_l1", row.err_u_l1},
                                    {"err_x_linf", row.err_x_linf}});
      }
      ctx.results["rows"] = rows;
      ctx.files.emplace_back("euler.csv", csv);
      break;
    }
    case ExperimentKind::Solve: {
      const AffineSolveResult res = solve_reference(N);
      ctx.results["converged"] = res.converged;
      ctx.results["sweeps"] = res.sweeps;
      ctx.results["residual"] = res.residual;
      const double h = ocp.T / N;
      std::vector<double> node_times(N + 1), cell_times(N);
      for (int j = 0; j <= N; ++j) node_times[j] = h * j;
      for (int j = 0; j < N; ++j) cell_times[j] = h * j;
      MatrixXd nodes(N + 1, 2 * ocp.n + ocp.m);
      nodes << res.s.x, res.s.p, res.sigma.values;
      std::string node_header = "t";
      for (int c = 0; c < ocp.n; ++c) node_header += ",x" + std::to_string(c);
      for (int c = 0; c < ocp.n; ++c) node_header += ",p" + std::to_string(c);
      for (int c = 0; c < ocp.m; ++c)
        node_header += ",sigma" + std::to_string(c);
      std::string cell_header = "t";
      for (int c = 0; c < ocp.m; ++c) cell_header += ",u" + std::to_string(c);
      ctx.files.emplace_back("states.csv",
                             matrix_csv(node_header, node_times, nodes));
      ctx.files.emplace_back("controls.csv",
                             matrix_csv(cell_header, cell_times, res.s.u));
      break;
    }
    default:
      config_error("experiment '" + to_string(ctx.cfg.experiment) +
                   "' is not available for module ocp-affine (use smsr, smr, "
                   "ab_check, growth, euler_study or solve)");
  }
}

// ------------------------------------------------------- parabolic running

void run_parabolic(RunContext& ctx) {
  if (ctx.cfg.N != 0)
    config_error("problem '" + ctx.cfg.problem_id +
                 "' uses a space-time grid (set grid.Nx and grid.Nt)");
  const int Nx = ctx.cfg.Nx > 0 ? ctx.cfg.Nx : ctx.info.default_Nx;
  const int Nt = ctx.cfg.Nt > 0 ? ctx.cfg.Nt : ctx.info.default_Nt;
  const ParabolicOcp ocp = make_parabolic_problem(ctx.cfg.problem_id, Nx, Nt);
  const Field2D reference =
      parabolic_reference_control(ocp, ctx.cfg.problem_id);
  ctx.results["Nx"] = Nx;
  ctx.results["Nt"] = Nt;

  ParabolicSolveOptions solve_opts;
  solve_opts.tol = tol_or(ctx, "solve_tol", 1e-9);
  solve_opts.max_sweeps = itol_or(ctx, "max_sweeps", 50);

  const auto require_reference = [&]() {
    Field2D y, p;
    try {
      y = solve_state(ocp, reference);
      p = solve_adjoint(ocp, y);
    } catch (const std::runtime_error& e) {
      throw ReferenceFailure("reference state/adjoint solve of '" +
                             ctx.cfg.problem_id + "' failed: " + e.what());
    }
    const ParabolicResidual residual = optimality_residual(ocp, y, p, reference);
    if (residual.norm > 1e-8)
      throw ReferenceFailure(
          "reference control does not solve the optimality system of '" +
          ctx.cfg.problem_id + "' (defect " + fmt17(residual.norm) + ")");
  };

  switch (ctx.cfg.experiment) {
    case ExperimentKind::Holder: {
      check_components(ctx, {"xi", "eta", "rho"});
      require_reference();
      ParabolicSweepParams params;
      params.seed = ctx.cfg.seed;
      params.magnitudes = ctx.cfg.magnitudes;
      params.directions_per_magnitude = ctx.cfg.directions;
      params.perturb_xi = component_on(ctx, "xi", false);
      params.perturb_eta = component_on(ctx, "eta", false);
      params.perturb_rho = component_on(ctx, "rho", true);
      params.rho_constant = ctx.cfg.rho_constant;
      params.jobs = ctx.jobs;
      params.solve = solve_opts;
      const ParabolicHolderReport report =
          holder_experiment(ocp, reference, params);
      ctx.records.reserve(report.records.size());
      std::string csv =
          "sample_index,magnitude,image_dist,u_dist,yp_dist,converged,"
          "sweeps\n";
      for (const auto& rec : report.records) {
        PerturbationRecord shared;
        shared.weak_image_dist = rec.image_dist;
        shared.strong_image_dist = rec.image_dist;
        shared.weak_domain_dist = rec.u_dist;
        shared.solver_converged = rec.converged;
        ctx.records.push_back(shared);
        csv += std::to_string(rec.sample_index) + "," + fmt17(rec.magnitude) +
               "," + fmt17(rec.image_dist) + "," + fmt17(rec.u_dist) + "," +
               fmt17(rec.yp_dist) + "," + (rec.converged ? "1" : "0") + "," +
               std::to_string(rec.sweeps) + "\n";
      }
      ctx.files.emplace_back("holder.csv", csv);
      ctx.fit_control = fit_to_json(report.fit_control);
      ctx.fit_state = fit_to_json(report.fit_state);
      break;
    }
    case ExperimentKind::Growth: {
      require_reference();
      ParabolicGrowthParams params;
      params.c0 = tol_or(ctx, "c0", 0.05);
      params.alpha = tol_or(ctx, "alpha", 0.5);
      params.gamma = tol_or(ctx, "gamma", 1.0);
      params.seed = ctx.cfg.seed;
      params.n_samples = itol_or(ctx, "n_samples", 300);
      params.min_support_cells = itol_or(ctx, "min_support_cells", 4);
      params.jobs = ctx.jobs;
      const ParabolicGrowthResult res =
          check_growth_parabolic(ocp, reference, params);
      ctx.results["holds"] = res.holds;
      ctx.results["c_empirical"] = res.c_empirical;
      ctx.results["n_samples"] = res.n_samples;
      Field2D worst;
      worst.values = res.worst_control;
      worst.hx = ocp.hx();
      worst.ht = ocp.ht();
      ctx.files.emplace_back("worst_control.csv", field_csv(worst));
      break;
    }
    case ExperimentKind::Solve: {
      if (ctx.cfg.problem_id == "heat-analytic") {
        // pure state solve; the analytic solution grades the discretisation
        Field2D y;
        try {
          y = solve_state(ocp, reference);
        } catch (const std::runtime_error& e) {
          throw ReferenceFailure(std::string("state solve failed: ") +
                                 e.what());
        }
        double max_err = 0.0;
        const double decay = std::exp(-M_PI * M_PI * ocp.T);
        for (int i = 0; i < Nx; ++i)
          max_err = std::max(max_err,
                             std::abs(y.values(Nt, i) -
                                      decay * std::sin(M_PI * ocp.xnode(i))));
        ctx.results["max_final_error"] = max_err;
        ctx.files.emplace_back("state.csv", field_csv(y));
        break;
      }
      require_reference();
      const ParabolicSolveResult res =
          solve_parabolic_system(ocp, reference, nullptr, solve_opts);
      if (!res.converged)
        throw ReferenceFailure("optimality-system sweep of '" +
                               ctx.cfg.problem_id + "' did not converge");
      ctx.results["converged"] = res.converged;
      ctx.results["sweeps"] = res.sweeps;
      ctx.results["residual"] = res.residual;
      const ParabolicResidual residual =
          optimality_residual(ocp, res.y, res.p, res.u);
      ctx.results["optimality_defect"] = residual.norm;
      ctx.files.emplace_back("state.csv", field_csv(res.y));
      ctx.files.emplace_back("adjoint.csv", field_csv(res.p));
      ctx.files.emplace_back("control.csv", field_csv(res.u));
      break;
    }
    default:
      config_error("experiment '" + to_string(ctx.cfg.experiment) +
                   "' is not available for module parabolic-1d (use holder, "
                   "growth or solve)");
  }
}

// ------------------------------------------------------------ file output

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for writing");
  out << content;
  out.flush();
  if (!out)
    throw std::runtime_error("write to '" + path.string() + "' failed");
}

ordered_json config_echo(const ExperimentConfig& cfg) {
  ordered_json echo;
  echo["problem_id"] = cfg.problem_id;
  echo["experiment"] = to_string(cfg.experiment);
  echo["seed"] = cfg.seed;
  if (!cfg.magnitudes.empty()) echo["magnitudes"] = cfg.magnitudes;
  if (cfg.N > 0) echo["grid"] = ordered_json{{"N", cfg.N}};
  if (cfg.Nx > 0) echo["grid"] = ordered_json{{"Nx", cfg.Nx}, {"Nt", cfg.Nt}};
  if (!cfg.grids.empty()) echo["grids"] = cfg.grids;
  if (!cfg.tolerances.empty()) {
    ordered_json tols;
    for (const auto& [name, value] : cfg.tolerances) tols[name] = value;
    echo["tolerances"] = tols;
  }
  if (!cfg.components.empty()) echo["components"] = cfg.components;
  echo["rho_constant"] = cfg.rho_constant;
  if (cfg.experiment == ExperimentKind::Growth) echo["variant"] = cfg.variant;
  echo["directions"] = cfg.directions;
  echo["output_dir"] = cfg.output_dir;
  return echo;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, int jobs,
                          bool json_records) {
  const auto start_time = std::chrono::steady_clock::now();
  RunOutcome outcome;

  const ProblemInfo* info = find_problem(config.problem_id);
  if (info == nullptr) {
    std::string known;
    for (const auto& entry : problem_registry()) {
      if (!known.empty()) known += ", ";
      known += entry.id;
    }
    outcome.exit_code = 2;
    outcome.message =
        "unknown problem id '" + config.problem_id + "'; known ids: " + known;
    return outcome;
  }
  if (config.output_dir.empty()) {
    outcome.exit_code = 2;
    outcome.message = "no output directory given (config output_dir or --out)";
    return outcome;
  }

  RunContext ctx{config, *info};
  ctx.jobs = jobs < 1 ? 1 : jobs;
  ctx.fit_control = nullptr;
  ctx.fit_state = nullptr;

  try {
    if (info->module == "nlp-kkt") {
      run_nlp(ctx);
    } else if (info->module == "ocp-mayer") {
      run_mayer(ctx);
    } else if (info->module == "ocp-affine") {
      run_affine(ctx);
    } else {
      run_parabolic(ctx);
    }

    assign_magnitudes(ctx);
    if (!ctx.records.empty() && ctx.fit_control.is_null()) fit_records(ctx);

    int n_converged = 0;
    for (const auto& rec : ctx.records) n_converged += rec.solver_converged;
    if (!ctx.records.empty() && n_converged < int(ctx.records.size()))
      ctx.warnings.push_back(
          std::to_string(int(ctx.records.size()) - n_converged) + " of " +
          std::to_string(ctx.records.size()) +
          " perturbed samples did not converge");

    const fs::path out_dir(config.output_dir);
    fs::create_directories(out_dir);

    write_file(out_dir / "records.csv", shared_records_csv(ctx));
    if (json_records)
      write_file(out_dir / "records.json", records_json_rows(ctx).dump(2) + "\n");
    for (const auto& [name, content] : ctx.files)
      write_file(out_dir / name, content);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_time)
            .count();

    ordered_json report;
    report["config"] = config_echo(config);
    report["problem"] = ordered_json{{"id", info->id},
                                     {"module", info->module},
                                     {"description", info->description}};
    report["jobs"] = ctx.jobs;
    report["results"] = ctx.results;
    if (!ctx.records.empty() || ctx.cfg.experiment == ExperimentKind::Holder) {
      report["fit"] = ctx.fit_control;
      if (!ctx.fit_state.is_null()) report["fit_state"] = ctx.fit_state;
      report["n_records"] = ctx.records.size();
      report["n_converged"] = n_converged;
      ordered_json flags = ordered_json::array();
      for (const auto& rec : ctx.records)
        flags.push_back(rec.solver_converged);
      report["converged_flags"] = flags;
    }
    report["warnings"] = ctx.warnings;
    report["wall_time_seconds"] = wall;
    write_file(out_dir / "report.json", report.dump(2) + "\n");

    outcome.warnings = ctx.warnings;
    outcome.exit_code = 0;
    outcome.message = "wrote " + (out_dir / "report.json").string();
    return outcome;
  } catch (const ReferenceFailure& e) {
    outcome.exit_code = 3;
    outcome.message = e.what();
    return outcome;
  } catch (const std::invalid_argument& e) {
    outcome.exit_code = 2;
    outcome.message = e.what();
    return outcome;
  } catch (const std::exception& e) {
    outcome.exit_code = 3;
    outcome.message = e.what();
    return outcome;
  }
}

}  // namespace mrlab
