#pragma once

#include <string>
#include <vector>

#include "mrlab/affine.hpp"
#include "mrlab/mayer.hpp"
#include "mrlab/nlp.hpp"
#include "mrlab/parabolic.hpp"

namespace mrlab {

// Built-in problem registry.  Every entry names the module whose experiment
// machinery drives it and carries default grid sizes; the typed factories
// below build the problem data and the reference point the sweeps start
// from.  Reference points are exact solutions of the respective discrete
// optimality systems (closed forms where available), so a zero-disturbance
// solve starting there converges immediately.
struct ProblemInfo {
  std::string id;
  std::string module;  // nlp-kkt | ocp-mayer | ocp-affine | parabolic-1d
  std::string description;
  int default_N = 0;                   // trajectory grids
  int default_Nx = 0, default_Nt = 0;  // space-time grids
};

const std::vector<ProblemInfo>& problem_registry();

// nullptr when the id is unknown.
const ProblemInfo* find_problem(const std::string& id);

// One line per entry: "id  module  description" padded into columns.
std::string format_problem_table(const std::string& module_filter = "");

// Typed factories; each throws std::invalid_argument when the id does not
// belong to the module it builds for.
NlpProblem make_nlp_problem(const std::string& id);
KktTriple nlp_reference_point(const std::string& id);

MayerOcp make_mayer_problem(const std::string& id);
DiscreteQuadruple mayer_reference_solution(const MayerOcp& ocp,
                                           const std::string& id, int N);

AffineOcp make_affine_problem(const std::string& id);

ParabolicOcp make_parabolic_problem(const std::string& id, int Nx, int Nt);
Field2D parabolic_reference_control(const ParabolicOcp& ocp,
                                    const std::string& id);

}  // namespace mrlab
