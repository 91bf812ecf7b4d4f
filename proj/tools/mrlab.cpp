#include <CLI11.hpp>
#include <json.hpp>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mrlab/experiment.hpp"
#include "mrlab/library.hpp"
#include "mrlab/regularity.hpp"

namespace {

using nlohmann::ordered_json;

std::string fmt17(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

int run_command(const std::string& config_path, const std::string& out_dir,
                int jobs, const std::string& format) {
  mrlab::ExperimentConfig config;
  try {
    config = mrlab::load_experiment_config(config_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (!out_dir.empty()) config.output_dir = out_dir;

  const mrlab::RunOutcome outcome =
      mrlab::run_experiment(config, jobs, format == "json");
  for (const auto& warning : outcome.warnings)
    std::cerr << "warning: " << warning << "\n";
  if (outcome.exit_code == 0)
    std::cout << outcome.message << "\n";
  else
    std::cerr << "error: " << outcome.message << "\n";
  return outcome.exit_code;
}

int list_command(const std::string& module_filter, const std::string& format) {
  if (format == "json") {
    for (const auto& entry : mrlab::problem_registry()) {
      if (!module_filter.empty() && entry.module != module_filter) continue;
      ordered_json line;
      line["id"] = entry.id;
      line["module"] = entry.module;
      line["description"] = entry.description;
      if (entry.default_N > 0) line["default_grid"] = {{"N", entry.default_N}};
      if (entry.default_Nx > 0)
        line["default_grid"] = {{"Nx", entry.default_Nx},
                                {"Nt", entry.default_Nt}};
      std::cout << line.dump() << "\n";
    }
    return 0;
  }
  std::cout << mrlab::format_problem_table(module_filter);
  return 0;
}

// Records re-fit: the CSV must carry the header written by `run`, with at
// least weak_image_dist and weak_domain_dist columns.
int fit_command(const std::string& records_path, double min_dist,
                const std::string& format) {
  std::ifstream in(records_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read '" << records_path << "'\n";
    return 2;
  }
  std::string header;
  if (!std::getline(in, header)) {
    std::cerr << "error: malformed records CSV: empty file\n";
    return 2;
  }
  if (!header.empty() && header.back() == '\r') header.pop_back();

  std::vector<std::string> columns;
  std::stringstream header_stream(header);
  std::string cell;
  while (std::getline(header_stream, cell, ',')) columns.push_back(cell);
  int weak_image = -1, weak_domain = -1, strong_image = -1, converged = -1;
  for (size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == "weak_image_dist") weak_image = int(c);
    if (columns[c] == "weak_domain_dist") weak_domain = int(c);
    if (columns[c] == "strong_image_dist") strong_image = int(c);
    if (columns[c] == "solver_converged") converged = int(c);
  }
  if (weak_image < 0 || weak_domain < 0) {
    std::cerr << "error: malformed records CSV: header must name "
                 "weak_image_dist and weak_domain_dist columns\n";
    return 2;
  }

  std::vector<mrlab::PerturbationRecord> records;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream line_stream(line);
    while (std::getline(line_stream, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns.size()) {
      std::cerr << "error: malformed records CSV: line " << line_no << " has "
                << cells.size() << " cells, expected " << columns.size()
                << "\n";
      return 2;
    }
    const auto number = [&](int index) {
      errno = 0;
      char* end = nullptr;
      const double value = std::strtod(cells[index].c_str(), &end);
      if (end == cells[index].c_str() || *end != '\0' || errno == ERANGE) {
        std::cerr << "error: malformed records CSV: line " << line_no
                  << ", cell '" << cells[index] << "' is not a number\n";
        std::exit(2);
      }
      return value;
    };
    mrlab::PerturbationRecord rec;
    rec.weak_image_dist = number(weak_image);
    rec.weak_domain_dist = number(weak_domain);
    rec.strong_image_dist =
        strong_image >= 0 ? number(strong_image) : rec.weak_image_dist;
    rec.solver_converged = converged >= 0 ? number(converged) != 0.0 : true;
    records.push_back(rec);
  }

  mrlab::RegularityFit fit;
  try {
    fit = mrlab::fit_regularity(records, min_dist);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (format == "json") {
    ordered_json out;
    out["kappa"] = fit.kappa;
    out["beta"] = fit.beta;
    out["r_squared"] = fit.r_squared;
    out["n_points"] = fit.n_records;
    std::cout << out.dump() << "\n";
  } else {
    std::cout << "kappa = " << fmt17(fit.kappa) << "\n"
              << "beta = " << fmt17(fit.beta) << "\n"
              << "r_squared = " << fmt17(fit.r_squared) << "\n"
              << "n_points = " << fit.n_records << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metric regularity experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format = "csv", module_filter;
  std::string records_path;
  int jobs = 1;
  double min_dist = 1e-6;

  auto* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("--config", config_path, "JSON experiment config")
      ->required();
  run->add_option("--out", out_dir, "override the config output_dir");
  run->add_option("--jobs", jobs, "worker threads for independent samples")
      ->check(CLI::PositiveNumber);
  run->add_option("--format", format, "records format: csv adds nothing, "
                                      "json writes records.json as well")
      ->check(CLI::IsMember({"csv", "json"}));

  auto* list = app.add_subcommand("list", "list built-in problems");
  list->add_option("--module", module_filter, "only this module's problems");
  list->add_option("--format", format,
                   "json prints one object per line, csv a padded table")
      ->check(CLI::IsMember({"csv", "json"}));

  auto* fit = app.add_subcommand("fit", "re-fit stored records.csv");
  fit->add_option("records", records_path, "records CSV written by run")
      ->required();
  fit->add_option("--min-dist", min_dist,
                  "ignore records at or below this image distance");
  fit->add_option("--format", format, "json prints one object")
      ->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage problems count as configuration errors
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) return run_command(config_path, out_dir, jobs, format);
  if (list->parsed()) return list_command(module_filter, format);
  return fit_command(records_path, min_dist, format);
}
