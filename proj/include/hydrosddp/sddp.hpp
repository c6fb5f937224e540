#pragma once

#include "hydrosddp/case_model.hpp"
#include "hydrosddp/formulation.hpp"
#include "hydrosddp/lp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hydro {

/// Cuts for alpha_t, t = 1..T. Stage T never holds cuts (alpha_T = 0).
struct CostToGo {
  std::vector<std::vector<BendersCut>> stages;

  explicit CostToGo(int n_stages = 0) : stages(static_cast<std::size_t>(n_stages)) {}

  int n_stages() const { return static_cast<int>(stages.size()); }
  const std::vector<BendersCut>& at(int stage) const { return stages.at(static_cast<std::size_t>(stage - 1)); }
  void add(int stage, BendersCut cut) { stages.at(static_cast<std::size_t>(stage - 1)).push_back(std::move(cut)); }
  int total_cuts() const;
  /// max(0, max_k cut_k(volumes)) for stage t.
  double evaluate(int stage, const Eigen::VectorXd& volumes) const;
};

struct TrainingLogEntry {
  int iteration = 0;
  double lower_bound = 0.0;
  double forward_cost = 0.0;
  double elapsed_seconds = 0.0;
};

struct Policy {
  FormulationKind kind = FormulationKind::NFA;
  std::string case_name;
  CostToGo cost_to_go;
  std::vector<TrainingLogEntry> log;
  double train_seconds = 0.0;
  std::vector<TrainingLogEntry> refinement_log;  ///< Step 2; LB from the planning model
  double refine_seconds = 0.0;
};

struct TrainConfig {
  int max_iterations = 200;
  int window = 10;           ///< K
  double tolerance = 1e-4;   ///< epsilon, relative
  std::uint64_t seed = 1;
  int forward_scenarios = 1;
  int workers = 1;
  LpTolerances lp;
};

/// Throws InvalidData unless tolerance > 0, window >= 1, max_iterations >= 0.
void validate(const TrainConfig& config);

/// Uniform doubles from the top 53 bits of a 64-bit Mersenne Twister, so the
/// stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  int pick(std::span<const Outcome> outcomes);

 private:
  std::mt19937_64 gen_;
};

/// One outcome index per stage.
std::vector<int> sample_path(const ScenarioLattice& lattice, Rng& rng);

/// Run f(0..n-1) on up to `workers` threads. Exceptions are rethrown for the
/// lowest failing index.
void parallel_for(int n, int workers, const std::function<void(int)>& f);

/// Persistent stage models, one per (stage, outcome).
class ModelCache {
 public:
  ModelCache(const NetworkCase& network, const ScenarioLattice& lattice, FormulationKind kind);

  StageModel& model(int stage, int outcome);
  FormulationKind kind() const { return kind_; }
  const NetworkCase& network() const { return *network_; }
  const ScenarioLattice& lattice() const { return *lattice_; }

 private:
  const NetworkCase* network_;
  const ScenarioLattice* lattice_;
  FormulationKind kind_;
  std::vector<std::vector<std::unique_ptr<StageModel>>> models_;
};

struct Trajectory {
  std::vector<int> outcomes;             ///< per stage
  std::vector<Eigen::VectorXd> volumes;  ///< nu_0 .. nu_T
  std::vector<double> stage_cost;        ///< immediate cost per stage, $
  std::vector<StageSolution> stages;
  double total_cost = 0.0;
};

Eigen::VectorXd initial_volumes(const NetworkCase& network);

Trajectory forward_pass(ModelCache& cache, const CostToGo& ctg, std::span<const int> path,
                        const LpTolerances& tol = {});

/// Cuts for stages T-1..1 at the trajectory volumes nu_1..nu_{T-1}. Returns the
/// number of cuts appended.
int backward_pass(ModelCache& cache, CostToGo& ctg, std::span<const Eigen::VectorXd> volumes, int workers = 1,
                  const LpTolerances& tol = {});

/// Expected stage-1 objective at nu_0 with the current cuts.
double lower_bound(ModelCache& cache, const CostToGo& ctg, const LpTolerances& tol = {});

/// Stage-1 expectation of one stage solve per outcome; used by lower_bound.
BendersCut expected_cut(ModelCache& cache, const CostToGo& ctg, int stage, const Eigen::VectorXd& state, int workers,
                        const LpTolerances& tol, double* expected_objective = nullptr);

/// Stopping rule shared by training and refinement.
bool converged(std::span<const TrainingLogEntry> log, const TrainConfig& config, bool deterministic);

using IterationCallback = std::function<void(const TrainingLogEntry&)>;

Policy train(const NetworkCase& network, const ScenarioLattice& lattice, FormulationKind kind,
             const TrainConfig& config, const IterationCallback& on_iteration = {});

/// Training log as CSV: iteration,lower_bound,forward_cost,elapsed_seconds.
void write_training_log(std::ostream& os, std::span<const TrainingLogEntry> log);

}  // namespace hydro
