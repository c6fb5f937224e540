#pragma once

#include "hydrosddp/case_model.hpp"
#include "hydrosddp/consistency.hpp"
#include "hydrosddp/sddp.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace hydro {

// Case files. `.json` is the native schema; `.m` is the matrix exchange layout
// with hydro plants in a `<stem>.hydro.json` sidecar (or an explicit path).
RawCase parse_case(const std::string& path);
RawCase parse_case_json(const std::string& text, const std::string& source = "<string>");
RawCase parse_matpower(const std::string& text, const std::string& sidecar_text, const std::string& source = "<string>");
void write_case_json(std::ostream& os, const RawCase& raw);

// Inflow table: stage,outcome,probability,inflow_<plant id>... Probabilities
// off by at most 1e-6 are renormalized and a warning is appended.
ScenarioLattice parse_inflows(const std::string& path, const NetworkCase& network,
                              std::vector<std::string>* warnings = nullptr);
ScenarioLattice parse_inflows_csv(const std::string& text, const NetworkCase& network,
                                  std::vector<std::string>* warnings = nullptr,
                                  const std::string& source = "<string>");
void write_inflows_csv(std::ostream& os, const ScenarioLattice& lattice, const NetworkCase& network);

// Policy files hold the cuts (17 significant digits) and iteration counts; no
// timings, so reruns with the same seed produce identical bytes.
void save_policy(std::ostream& os, const Policy& policy);
Policy load_policy_json(const std::string& text, const std::string& source = "<string>");
Policy load_policy(const std::string& path);

// Reports.
void write_report_json(std::ostream& os, const EvaluationReport& report);
/// One row per (scenario, stage).
void write_report_csv(std::ostream& os, const EvaluationReport& report, const NetworkCase& network);
/// Expected per-stage series: reservoir, thermal, spot price.
void write_trajectory_csv(std::ostream& os, const EvaluationReport& report, const NetworkCase& network);
/// Policy,Planning,Implementation,GAP%,Time plus standard errors and status.
void write_comparison_csv(std::ostream& os, const Comparison& comparison);
void write_comparison_json(std::ostream& os, const Comparison& comparison);

std::string read_file(const std::string& path);

}  // namespace hydro
