#pragma once

#include "hydrosddp/case_model.hpp"
#include "hydrosddp/lp.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace hydro {

enum class FormulationKind { NFA, DC, DCLL, SOC, SDP, AC };

const char* to_string(FormulationKind kind);
/// Case-insensitive; throws UnsupportedKind on anything unknown.
FormulationKind parse_kind(const std::string& text);

/// alpha >= intercept + slope . nu  (intercept in $, slope in $/hm³).
struct BendersCut {
  double intercept = 0.0;
  Eigen::VectorXd slope;

  double value(const Eigen::VectorXd& volumes) const { return intercept + slope.dot(volumes); }
};

/// Entry (i, j), i < j, of the Hermitian W = R + jI: R = x[re], I = im_sign * x[im].
struct WEntry {
  int i = 0;
  int j = 0;
  int re = -1;
  int im = -1;
  double im_sign = 1.0;
};

/// Column and row indices of one stage problem. Missing symbols are -1 / empty.
struct StageVariables {
  std::vector<int> p, q;           // per thermal
  std::vector<int> u, s, nu, qh;   // per hydro
  std::vector<int> f_nm, f_mn;     // per branch, from-end and to-end active flow
  std::vector<int> fq_nm, fq_mn;   // per branch, reactive
  std::vector<int> delta, loss;    // per bus
  std::vector<int> theta;          // DC / DCLL
  std::vector<int> w;              // per bus, squared magnitude
  std::vector<int> w_re, w_im;     // per branch
  std::vector<WEntry> w_pairs;     // every off-diagonal entry used by the PSD oracle
  int alpha = -1;

  std::vector<int> kcl;            // active balance per bus
  std::vector<int> kcl_q;          // reactive balance per bus
  std::vector<int> water;          // water balance per hydro
};

struct StageProblem {
  FormulationKind kind = FormulationKind::NFA;
  LinearProgram lp;
  StageVariables vars;
  std::vector<SeparationOracle> oracles;
  const NetworkCase* network = nullptr;
  bool terminal = false;
  /// The LP objective is in $ / obj_scale (obj_scale = hours * base_mva), which
  /// keeps cost coefficients in $/MWh and makes KCL duals spot prices directly.
  double obj_scale = 1.0;
};

/// KCL, water balance, bounds, deficit and the alpha epigraph with every cut given.
StageProblem build_common(const StageData& data, const Eigen::VectorXd& state, std::span<const BendersCut> cuts,
                          bool terminal);
void attach_nfa(StageProblem& problem);
void attach_dc(StageProblem& problem);
/// Requires attach_dc first. `grid_points` tangents over [-F, F] per branch.
void attach_dcll(StageProblem& problem, int grid_points = 5);
/// kind is SOC or SDP.
void attach_wspace(StageProblem& problem, FormulationKind kind);

StageProblem build(FormulationKind kind, const StageData& data, const Eigen::VectorXd& state,
                   std::span<const BendersCut> cuts, bool terminal);

/// Rotated-cone cuts ||(2wRe, 2wIm, w_nn - w_mm)|| <= w_nn + w_mm, one per violated branch.
std::vector<Cut> separate_soc(const StageVariables& vars, const NetworkCase& network, const Eigen::VectorXd& x,
                              int arity, double tol = 1e-6);
/// Eigenvalue cuts v'Mv >= 0 on the real embedding of W.
std::vector<Cut> separate_psd(const StageVariables& vars, int n_bus, const Eigen::VectorXd& x, int arity,
                              double tol = 1e-7);
std::vector<Cut> separate_circle(const StageVariables& vars, const NetworkCase& network, const Eigen::VectorXd& x,
                                 int arity, double tol = 1e-6);
std::vector<Cut> separate_dcll(const StageVariables& vars, const NetworkCase& network, const Eigen::VectorXd& x,
                               int arity, double tol = 1e-6);

/// Complex W (n_bus x n_bus) assembled from an LP point.
Eigen::MatrixXcd assemble_w(const StageVariables& vars, int n_bus, const Eigen::VectorXd& x);
/// Real 2n x 2n embedding [[R, -I], [I, R]].
Eigen::MatrixXd real_embedding(const Eigen::MatrixXcd& w);
/// Smallest eigenvalue by cyclic Jacobi; throws EigenFailure beyond `max_sweeps`.
double jacobi_min_eigenvalue(Eigen::MatrixXd a, int max_sweeps = 100);

struct StageSolution {
  bool ok = false;
  double objective = 0.0;       ///< immediate + future, $
  double immediate_cost = 0.0;  ///< $
  double future_cost = 0.0;     ///< alpha, $
  Eigen::VectorXd volume, turbined, spilled;  // per hydro, hm³
  Eigen::VectorXd thermal;                    // per thermal, p.u.
  Eigen::VectorXd deficit;                    // per bus, p.u.
  Eigen::VectorXd spot_price;                 // per bus, $/MWh
  Eigen::VectorXd water_dual;                 // per hydro, $/hm³
  Eigen::VectorXd flow_nm, flow_mn;           // per branch, p.u.
  int separation_rounds = 0;
  bool round_limit = false;
  double max_violation = 0.0;
  Eigen::VectorXd x;  ///< raw LP point
};

StageSolution extract_solution(const StageProblem& problem, const LpSolution& lp);

/// Solve with the problem's own oracles plus any extra ones.
/// Throws StageSolveFailure if the LP is not optimal.
StageSolution solve_stage(StageProblem& problem, const LpTolerances& tol = {},
                          std::span<const SeparationOracle> extra = {}, const Basis* warm = nullptr,
                          Basis* basis_out = nullptr);

/// A stage problem kept alive across solves. The state only changes the water
/// balance right-hand sides; Benders cuts are appended when first violated.
class StageModel {
 public:
  StageModel(FormulationKind kind, const StageData& data, bool terminal);

  void set_state(const Eigen::VectorXd& previous_volume);
  StageSolution solve(std::span<const BendersCut> cuts, const LpTolerances& tol = {});

  const StageProblem& problem() const { return problem_; }
  const StageData& data() const { return data_; }
  int cuts_in_model() const;

 private:
  StageData data_;
  StageProblem problem_;
  Basis basis_;
  std::vector<char> added_;
};

}  // namespace hydro
