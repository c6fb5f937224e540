#pragma once

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hydro {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { LessEqual, Equal, GreaterEqual };

enum class CutSource { Benders, SocSeparation, PsdSeparation, DcllTangent, FlowLimit, Other };

const char* to_string(CutSource source);

/// Solver tolerances. Feasibility and optimality are applied to the
/// row-equilibrated, cost-normalized problem the simplex works on.
struct LpTolerances {
  double feasibility = 1e-8;
  double optimality = 1e-9;
  double separation = 1e-6;
  double pivot = 1e-9;
  int max_pivots = 50000;
  int degenerate_before_bland = 1000;
  int refactor_interval = 100;
  int max_separation_rounds = 200;
};

/// A linear inequality produced by a separation oracle. `arity` is the number
/// of LP columns the cut was generated against.
struct Cut {
  int arity = 0;
  std::vector<int> index;
  std::vector<double> value;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
  CutSource source = CutSource::Other;

  /// Signed violation at x: positive when x violates the cut.
  double violation(const Eigen::VectorXd& x) const;
};

struct Row {
  std::vector<int> index;
  std::vector<double> value;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
  std::string name;
};

/// min cᵀx  s.t.  rows, lb <= x <= ub.
class LinearProgram {
 public:
  int add_variable(double lb, double ub, double cost, std::string name = {});
  int add_row(std::span<const int> index, std::span<const double> value, Sense sense, double rhs,
              std::string name = {});
  int add_row(std::initializer_list<std::pair<int, double>> terms, Sense sense, double rhs, std::string name = {});
  /// Appends a cut as a new row; throws DimensionMismatch on arity or index errors.
  int append_cut(const Cut& cut);

  void set_rhs(int row, double rhs) { rows_.at(static_cast<std::size_t>(row)).rhs = rhs; }
  void set_bounds(int var, double lb, double ub);
  void set_cost(int var, double cost) { cost_.at(static_cast<std::size_t>(var)) = cost; }
  /// Overwrites (or inserts) a single coefficient.
  void set_coefficient(int row, int var, double value);
  /// Replaces a row's coefficients in place, keeping its sense.
  void set_row(int row, std::span<const int> index, std::span<const double> value, double rhs);

  int num_variables() const { return static_cast<int>(cost_.size()); }
  int num_rows() const { return static_cast<int>(rows_.size()); }
  double lower(int var) const { return lb_[static_cast<std::size_t>(var)]; }
  double upper(int var) const { return ub_[static_cast<std::size_t>(var)]; }
  double cost(int var) const { return cost_[static_cast<std::size_t>(var)]; }
  const Row& row(int i) const { return rows_[static_cast<std::size_t>(i)]; }
  const std::string& variable_name(int var) const { return names_[static_cast<std::size_t>(var)]; }

  double row_activity(int i, const Eigen::VectorXd& x) const;
  double objective(const Eigen::VectorXd& x) const;

  /// Free-format MPS dump for cross-checking with external solvers.
  void write_mps(std::ostream& os, const std::string& problem_name = "HYDRO") const;

 private:
  std::vector<double> lb_, ub_, cost_;
  std::vector<std::string> names_;
  std::vector<Row> rows_;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(LpStatus status);

enum class VarStatus : unsigned char { Basic, AtLower, AtUpper, Free, Fixed };

/// Simplex basis over structural columns followed by one slack per row.
struct Basis {
  std::vector<VarStatus> status;
  int n_structural = 0;

  bool empty() const { return status.empty(); }
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  /// d(objective)/d(rhs) per row, minimization convention.
  Eigen::VectorXd duals;
  Eigen::VectorXd reduced_costs;
  double objective = 0.0;
  Basis basis;
  int iterations = 0;

  bool optimal() const { return status == LpStatus::Optimal; }
};

/// Bounded revised simplex (composite phase 1, Dantzig pricing with Bland
/// fallback, Harris ratio test, dense inverse refactored periodically).
LpSolution solve(const LinearProgram& lp, const Basis* warm_start = nullptr, const LpTolerances& tol = {});

using SeparationOracle = std::function<std::vector<Cut>(const Eigen::VectorXd& x)>;

struct SeparationResult {
  LpSolution solution;
  int rounds = 0;
  int cuts_added = 0;
  bool round_limit = false;
  /// Largest violation among cuts found on the final round (0 when clean).
  double max_violation = 0.0;
  std::vector<double> objective_trace;

  bool optimal() const { return solution.optimal() && !round_limit; }
};

/// Solve, ask the oracles for violated cuts, append them and re-solve from the
/// previous basis until no oracle reports a violation or the round cap is hit.
SeparationResult solve_with_separation(LinearProgram& lp, std::span<const SeparationOracle> oracles,
                                       const Basis* warm_start = nullptr, const LpTolerances& tol = {});

}  // namespace hydro
