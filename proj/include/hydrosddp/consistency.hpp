#pragma once

#include "hydrosddp/acopf.hpp"
#include "hydrosddp/case_model.hpp"
#include "hydrosddp/formulation.hpp"
#include "hydrosddp/sddp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hydro {

// ---------------------------------------------------------------------------
// Policy refinement: AC forward passes, planning-model backward passes.
// ---------------------------------------------------------------------------

struct RefineConfig {
  TrainConfig train;  ///< same stopping rule; max_iterations is the refinement budget
  AcOptions ac;
};

/// Returns a copy of `policy` with the refinement cuts appended and the
/// refinement log filled. max_iterations = 0 returns the policy unchanged.
Policy refine_policy(const NetworkCase& network, const ScenarioLattice& lattice, const Policy& policy,
                     const RefineConfig& config, const IterationCallback& on_iteration = {});

/// One AC roll-forward along `path`; throws NoLocalSolution with stage context.
/// If `audit` is given it receives the independent residual check of every stage.
Trajectory forward_pass_ac(const NetworkCase& network, const ScenarioLattice& lattice, const CostToGo& ctg,
                           std::span<const int> path, const AcOptions& options = {},
                           std::vector<double>* audit = nullptr);

// ---------------------------------------------------------------------------
// Out-of-sample simulation.
// ---------------------------------------------------------------------------

/// Sampled outcome paths, one row per scenario.
struct ScenarioSet {
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> paths;

  int size() const { return static_cast<int>(paths.size()); }
};

ScenarioSet sample_scenarios(const ScenarioLattice& lattice, int count, std::uint64_t seed);

struct StageRecord {
  double cost = 0.0;            ///< immediate cost, $
  Eigen::VectorXd volume;       ///< end-of-stage storage per plant, hm³
  double thermal_mw = 0.0;      ///< total thermal generation
  double hydro_mw = 0.0;        ///< total hydro generation
  Eigen::VectorXd spot_price;   ///< per bus, $/MWh
  double deficit_mw = 0.0;      ///< total load shed
  double audit_residual = 0.0;  ///< AC only: worst audited residual, p.u.
};

struct ScenarioRecord {
  bool ok = false;
  std::string failure;
  std::vector<StageRecord> stages;
  double total_cost = 0.0;
};

struct EvaluationReport {
  FormulationKind plan_kind = FormulationKind::NFA;
  FormulationKind sim_kind = FormulationKind::NFA;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> paths;
  std::vector<ScenarioRecord> scenarios;  ///< same order as paths
  int failures = 0;
  double expected_cost = 0.0;   ///< mean over successful scenarios
  double standard_error = 0.0;
  double max_audit_residual = 0.0;  ///< over every simulated AC stage

  int n_scenarios() const { return static_cast<int>(scenarios.size()); }
  /// False when more than 1% of the scenarios failed.
  bool valid() const { return failures * 100 <= n_scenarios(); }
};

struct SimulationConfig {
  int workers = 1;
  LpTolerances lp;
  AcOptions ac;
};

/// Roll every path forward with `kind` (any planning kind or AC) and the
/// policy's cuts. Failed scenarios are kept with ok = false and excluded from
/// the statistics. Results do not depend on the worker count.
EvaluationReport simulate(const NetworkCase& network, const ScenarioLattice& lattice, const Policy& policy,
                          FormulationKind kind, const ScenarioSet& scenarios, const SimulationConfig& config = {});

/// Per-scenario mean spot price over stages and buses (NaN for failed scenarios).
std::vector<double> scenario_mean_spot_price(const EvaluationReport& report);

/// Expected per-stage series over successful scenarios.
struct StageSeries {
  std::vector<Eigen::VectorXd> volume;      ///< per stage, per plant
  std::vector<double> thermal_mw, hydro_mw, deficit_mw, cost;
  std::vector<Eigen::VectorXd> spot_price;  ///< per stage, per bus
};
StageSeries expected_series(const EvaluationReport& report);

// ---------------------------------------------------------------------------
// Gap and comparison.
// ---------------------------------------------------------------------------

struct GapResult {
  double planning_cost = 0.0;
  double implementation_cost = 0.0;
  double gap_percent = 0.0;
  double gap_standard_error = 0.0;  ///< of the gap, in percentage points, from paired differences
  double train_seconds = 0.0;       ///< Step-1 training time
  double refine_seconds = 0.0;
};

/// gap = 100 (implementation - planning) / planning.
double gap_percent(double planning, double implementation);

/// Throws MismatchedScenarios unless both reports share the scenario set.
GapResult inconsistency_gap(const EvaluationReport& plan, const EvaluationReport& impl, double train_seconds,
                            double refine_seconds = 0.0);

struct CompareConfig {
  TrainConfig train;
  int refine_max_iterations = 200;
  int scenarios = 500;
  std::uint64_t simulation_seed = 2;
  SimulationConfig simulation;
};

struct ComparisonRow {
  FormulationKind kind = FormulationKind::NFA;
  bool ok = false;
  std::string error;
  Policy policy;  ///< refined
  double step1_lower_bound = 0.0;
  GapResult gap;
  EvaluationReport plan, impl;
};

struct Comparison {
  ScenarioSet scenarios;
  std::vector<ComparisonRow> rows;
};

using ProgressCallback = std::function<void(const std::string&)>;

Comparison compare(const NetworkCase& network, const ScenarioLattice& lattice, std::span<const FormulationKind> kinds,
                   const CompareConfig& config, const ProgressCallback& progress = {});

}  // namespace hydro
