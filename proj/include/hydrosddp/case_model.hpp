#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace hydro {

// ---------------------------------------------------------------------------
// Raw case data in physical units (MW, MVAr, MVA, $/MWh, hm³). This is what
// the file readers produce and what load_validate() consumes.
// ---------------------------------------------------------------------------

struct RawBus {
  int id = 0;
  bool is_reference = false;
  double v_min = 0.9;
  double v_max = 1.1;
  double shunt_g_mw = 0.0;    ///< MW consumed at 1 p.u. voltage
  double shunt_b_mvar = 0.0;  ///< MVAr injected at 1 p.u. voltage (capacitive > 0)
  double load_mw = 0.0;
  std::vector<double> load_mw_by_stage;  ///< optional per-stage override
  double deficit_cost = 0.0;             ///< $/MWh
};

struct RawBranch {
  int from = 0;
  int to = 0;
  double r = 0.0;  ///< p.u. on the system base
  double x = 0.0;
  double g_c = 0.0;  ///< total pi-section shunt conductance, split half per end
  double b_c = 0.0;  ///< total line charging susceptance, split half per end
  double rate_mva = 0.0;
};

struct RawThermal {
  int id = 0;
  int bus = 0;
  double p_max_mw = 0.0;
  double q_min_mvar = 0.0;
  double q_max_mvar = 0.0;
  double cost = 0.0;  ///< $/MWh
  std::vector<double> cost_by_stage;
};

struct RawHydro {
  int id = 0;
  int bus = 0;
  double v_max = 0.0;      ///< hm³
  double v_initial = 0.0;  ///< hm³
  double u_max = 0.0;      ///< hm³ per stage
  double rho_mw = 0.0;     ///< MW of average stage power per hm³/stage of outflow
  std::optional<int> downstream_turbine;
  // Spill follows the turbine link unless the file says otherwise; an
  // explicit "no spill recipient" is spill_specified && !downstream_spill.
  bool spill_specified = false;
  std::optional<int> downstream_spill;
  double q_min_mvar = 0.0;
  double q_max_mvar = 0.0;
};

struct RawCase {
  std::string name;
  double base_mva = 100.0;
  double hours_per_stage = 730.0;
  std::vector<RawBus> buses;
  std::vector<RawBranch> branches;
  std::vector<RawThermal> thermals;
  std::vector<RawHydro> hydros;
};

// ---------------------------------------------------------------------------
// Validated, per-unit network. Cross references are indices into the
// owning vectors; ids are kept for reporting.
// ---------------------------------------------------------------------------

struct Bus {
  int id = 0;
  bool is_reference = false;
  double v_min = 0.9;
  double v_max = 1.1;
  double shunt_g = 0.0;
  double shunt_b = 0.0;
  double load_p = 0.0;
  std::vector<double> load_p_by_stage;
  double deficit_cost = 0.0;

  double load_at(int stage) const {
    if (!load_p_by_stage.empty()) return load_p_by_stage[static_cast<std::size_t>(stage - 1)];
    return load_p;
  }
};

/// Series admittance g + jb of a line. from > to by bus id.
struct Branch {
  int from_id = 0;
  int to_id = 0;
  int from = 0;  ///< bus index
  int to = 0;    ///< bus index
  double r = 0.0;
  double x = 0.0;
  double g_c = 0.0;
  double b_c = 0.0;
  double f_max = 0.0;
  double g = 0.0;
  double b = 0.0;

  /// Resistance recovered from the admittance, g/(g²+b²); equals r.
  double loss_factor() const { return g / (g * g + b * b); }
};

struct ThermalGenerator {
  int id = 0;
  int bus = 0;  ///< bus index
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double cost = 0.0;
  std::vector<double> cost_by_stage;

  double cost_at(int stage) const {
    if (!cost_by_stage.empty()) return cost_by_stage[static_cast<std::size_t>(stage - 1)];
    return cost;
  }
};

struct HydroPlant {
  int id = 0;
  int bus = 0;  ///< bus index
  double v_max = 0.0;
  double v_initial = 0.0;
  double u_max = 0.0;
  double rho = 0.0;  ///< p.u. power per hm³/stage
  std::optional<int> downstream_turbine;  ///< plant index
  std::optional<int> downstream_spill;    ///< plant index
  double q_min = 0.0;
  double q_max = 0.0;
};

/// Plants feeding a given plant through turbined outflow and through spill.
struct UpstreamSets {
  std::vector<int> turbine;
  std::vector<int> spill;
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  double hours_per_stage = 730.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<ThermalGenerator> thermals;
  std::vector<HydroPlant> hydros;
  std::vector<std::string> warnings;

  int reference_bus() const;
  int bus_index(int id) const;
  /// $ per (p.u. power × $/MWh) over one stage.
  double energy_scale() const { return hours_per_stage * base_mva; }
  double max_deficit_cost() const;

 private:
  friend NetworkCase load_validate(const RawCase&);
  std::unordered_map<int, int> bus_lookup_;
};

NetworkCase load_validate(const RawCase& raw);

/// Inverse of the per-unit normalization performed by load_validate.
RawCase to_raw(const NetworkCase& network);

std::vector<UpstreamSets> upstream_sets(const NetworkCase& network);

// ---------------------------------------------------------------------------
// Stagewise-independent inflow lattice.
// ---------------------------------------------------------------------------

struct Outcome {
  Eigen::VectorXd inflow;  ///< hm³ per plant (plant index order)
  double probability = 0.0;
};

struct ScenarioLattice {
  std::vector<std::vector<Outcome>> stages;

  int n_stages() const { return static_cast<int>(stages.size()); }
  int n_outcomes(int stage) const { return static_cast<int>(stages.at(static_cast<std::size_t>(stage - 1)).size()); }
  const Outcome& outcome(int stage, int index) const;
  bool deterministic() const;

  /// Throws ProbabilitySumError / NegativeInflow / DimensionMismatch.
  void validate(int n_plants) const;
};

/// Snapshot of everything a stage problem needs; immutable once built.
struct StageData {
  const NetworkCase* network = nullptr;
  int stage = 1;  ///< 1-based
  int outcome = 0;
  Eigen::VectorXd inflow;
  Eigen::VectorXd load;          ///< per bus, p.u.
  Eigen::VectorXd thermal_cost;  ///< per thermal, $/MWh

  const NetworkCase& net() const { return *network; }
};

StageData stage_data(const NetworkCase& network, const ScenarioLattice& lattice, int stage, int outcome);

/// Stage data with an explicit inflow vector, for callers that sample off-lattice.
StageData stage_data(const NetworkCase& network, int stage, const Eigen::VectorXd& inflow);

}  // namespace hydro
