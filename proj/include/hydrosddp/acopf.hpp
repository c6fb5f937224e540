#pragma once

#include "hydrosddp/case_model.hpp"
#include "hydrosddp/formulation.hpp"
#include "hydrosddp/lp.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace hydro {

struct PolarState {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;

  static PolarState flat(const NetworkCase& network);
};

enum class BusType { PQ, PV, Slack };

/// Specified net injections (generation minus load, p.u.) for the power flow.
/// P is ignored at the slack bus; Q is ignored at PV and slack buses.
struct PowerFlowInput {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  std::vector<BusType> type;
};

enum class PowerFlowStatus { Converged, Diverged };

struct PowerFlowResult {
  PowerFlowStatus status = PowerFlowStatus::Diverged;
  PolarState state;
  int iterations = 0;
  double max_mismatch = 0.0;
  Eigen::VectorXd p_injection;  ///< computed net injection per bus
  Eigen::VectorXd q_injection;

  bool converged() const { return status == PowerFlowStatus::Converged; }
};

/// Full Newton-Raphson in polar coordinates. PV and slack magnitudes (and the
/// slack angle) are taken from `start`.
PowerFlowResult newton_power_flow(const NetworkCase& network, const PowerFlowInput& input, const PolarState& start,
                                  int max_iterations = 30, double tolerance = 1e-8);

/// Pi-model flows at a polar point, from-end and to-end.
struct BranchFlows {
  Eigen::VectorXd p_nm, q_nm, p_mn, q_mn;
};
BranchFlows branch_flows(const NetworkCase& network, const PolarState& state);

struct AcOptions {
  int max_iterations = 60;
  double initial_radius = 0.3;  ///< rad; the magnitude radius is a quarter of it
  double min_radius = 1e-7;
  double tolerance = 1e-6;
  /// stop once the model predicts less than this relative decrease
  double objective_tolerance = 1e-6;
  LpTolerances lp;
};

struct AcStageSolution {
  StageSolution dispatch;  ///< p, u, s, nu, delta, costs, spot prices, flows
  PolarState state;
  Eigen::VectorXd q_thermal, q_hydro;
  Eigen::VectorXd fq_nm, fq_mn;
  Eigen::VectorXd loss;  ///< per bus
  double max_residual = 0.0;  ///< solver-side KCL mismatch
  int iterations = 0;
  bool warm_started = false;  ///< second start (relaxation warm start) was used
};

/// Local solve of the AC stage problem. Throws NoLocalSolution when both the
/// flat start and the SOC warm start fail.
AcStageSolution solve_stage_ac(const StageData& data, const Eigen::VectorXd& state, std::span<const BendersCut> cuts,
                               bool terminal, const AcOptions& options = {});

/// Independent audit of an AC stage solution: KCL (active and reactive), flow
/// definitions, limits and water balance recomputed with complex arithmetic.
struct AcAudit {
  double kcl_p = 0.0;
  double kcl_q = 0.0;
  double flow_definition = 0.0;
  double flow_limit = 0.0;
  double voltage_bound = 0.0;
  double reactive_bound = 0.0;
  double water_balance = 0.0;
  double bounds = 0.0;

  double worst() const;
};

AcAudit audit_ac_solution(const StageData& data, const Eigen::VectorXd& state, const AcStageSolution& solution);

}  // namespace hydro
