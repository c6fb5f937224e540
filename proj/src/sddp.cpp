#include "hydrosddp/sddp.hpp"

#include "hydrosddp/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <locale>
#include <mutex>
#include <ostream>
#include <thread>

namespace hydro {

int CostToGo::total_cuts() const {
  int n = 0;
  for (const auto& s : stages) n += static_cast<int>(s.size());
  return n;
}

double CostToGo::evaluate(int stage, const Eigen::VectorXd& volumes) const {
  double best = 0.0;
  for (const auto& c : at(stage)) best = std::max(best, c.value(volumes));
  return best;
}

void validate(const TrainConfig& c) {
  if (!(c.tolerance > 0.0)) throw Error(ErrorKind::InvalidData, "tolerance must be positive");
  if (c.window < 1) throw Error(ErrorKind::InvalidData, "convergence window must be at least 1");
  if (c.max_iterations < 0) throw Error(ErrorKind::InvalidData, "max iterations must be nonnegative");
  if (c.forward_scenarios < 1) throw Error(ErrorKind::InvalidData, "forward scenarios must be at least 1");
}

int Rng::pick(std::span<const Outcome> outcomes) {
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    acc += outcomes[k].probability;
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(outcomes.size()) - 1;
}

std::vector<int> sample_path(const ScenarioLattice& lattice, Rng& rng) {
  std::vector<int> path;
  path.reserve(lattice.stages.size());
  for (const auto& st : lattice.stages) path.push_back(rng.pick(st));
  return path;
}

void parallel_for(int n, int workers, const std::function<void(int)>& f) {
  if (n <= 0) return;
  const int nt = std::clamp(workers, 1, n);
  if (nt == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto work = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ModelCache::ModelCache(const NetworkCase& network, const ScenarioLattice& lattice, FormulationKind kind)
    : network_(&network), lattice_(&lattice), kind_(kind) {
  if (kind == FormulationKind::AC) throw Error(ErrorKind::UnsupportedKind, "AC cannot be a planning model");
  models_.resize(lattice.stages.size());
  for (std::size_t t = 0; t < lattice.stages.size(); ++t) models_[t].resize(lattice.stages[t].size());
}

StageModel& ModelCache::model(int stage, int outcome) {
  auto& slot = models_.at(static_cast<std::size_t>(stage - 1)).at(static_cast<std::size_t>(outcome));
  if (!slot) {
    slot = std::make_unique<StageModel>(kind_, stage_data(*network_, *lattice_, stage, outcome),
                                        stage == lattice_->n_stages());
  }
  return *slot;
}

Eigen::VectorXd initial_volumes(const NetworkCase& net) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(net.hydros.size()));
  for (std::size_t j = 0; j < net.hydros.size(); ++j) v[static_cast<Eigen::Index>(j)] = net.hydros[j].v_initial;
  return v;
}

Trajectory forward_pass(ModelCache& cache, const CostToGo& ctg, std::span<const int> path, const LpTolerances& tol) {
  const int T = cache.lattice().n_stages();
  if (static_cast<int>(path.size()) != T) throw Error(ErrorKind::DimensionMismatch, "path length differs from T");
  Trajectory tr;
  tr.outcomes.assign(path.begin(), path.end());
  tr.volumes.push_back(initial_volumes(cache.network()));
  for (int t = 1; t <= T; ++t) {
    StageModel& m = cache.model(t, path[static_cast<std::size_t>(t - 1)]);
    m.set_state(tr.volumes.back());
    StageSolution s = m.solve(ctg.at(t), tol);
    tr.stage_cost.push_back(s.immediate_cost);
    tr.total_cost += s.immediate_cost;
    tr.volumes.push_back(s.volume);
    tr.stages.push_back(std::move(s));
  }
  return tr;
}

BendersCut expected_cut(ModelCache& cache, const CostToGo& ctg, int stage, const Eigen::VectorXd& state, int workers,
                        const LpTolerances& tol, double* expected_objective) {
  const auto& outcomes = cache.lattice().stages.at(static_cast<std::size_t>(stage - 1));
  const int n = static_cast<int>(outcomes.size());
  std::vector<double> obj(static_cast<std::size_t>(n));
  std::vector<Eigen::VectorXd> dual(static_cast<std::size_t>(n));
  // make sure every model exists before threads touch the cache
  for (int k = 0; k < n; ++k) cache.model(stage, k);
  parallel_for(n, workers, [&](int k) {
    StageModel& m = cache.model(stage, k);
    m.set_state(state);
    StageSolution s = m.solve(ctg.at(stage), tol);
    obj[static_cast<std::size_t>(k)] = s.objective;
    dual[static_cast<std::size_t>(k)] = s.water_dual;
  });
  BendersCut cut;
  cut.slope = Eigen::VectorXd::Zero(state.size());
  double mean = 0.0;
  for (int k = 0; k < n; ++k) {
    const double p = outcomes[static_cast<std::size_t>(k)].probability;
    mean += p * obj[static_cast<std::size_t>(k)];
    cut.slope += p * dual[static_cast<std::size_t>(k)];
  }
  cut.intercept = mean - cut.slope.dot(state);
  if (expected_objective) *expected_objective = mean;
  return cut;
}

int backward_pass(ModelCache& cache, CostToGo& ctg, std::span<const Eigen::VectorXd> volumes, int workers,
                  const LpTolerances& tol) {
  const int T = cache.lattice().n_stages();
  if (static_cast<int>(volumes.size()) < T) throw Error(ErrorKind::DimensionMismatch, "trajectory too short");
  int added = 0;
  for (int t = T - 1; t >= 1; --t) {
    ctg.add(t, expected_cut(cache, ctg, t + 1, volumes[static_cast<std::size_t>(t)], workers, tol));
    ++added;
  }
  return added;
}

double lower_bound(ModelCache& cache, const CostToGo& ctg, const LpTolerances& tol) {
  double lb = 0.0;
  expected_cut(cache, ctg, 1, initial_volumes(cache.network()), 1, tol, &lb);
  return lb;
}

bool converged(std::span<const TrainingLogEntry> log, const TrainConfig& cfg, bool deterministic) {
  if (log.empty()) return false;
  const auto& last = log.back();
  const double scale = std::abs(last.lower_bound);
  if (deterministic) {
    return last.forward_cost - last.lower_bound <= cfg.tolerance * scale + 1e-9;
  }
  const auto k = static_cast<std::size_t>(cfg.window);
  if (log.size() <= k) return false;
  const double gain = last.lower_bound - log[log.size() - 1 - k].lower_bound;
  if (gain <= cfg.tolerance * scale) return true;
  double mean = 0.0;
  for (std::size_t i = log.size() - k; i < log.size(); ++i) mean += log[i].forward_cost;
  mean /= static_cast<double>(k);
  return std::abs(mean - last.lower_bound) <= cfg.tolerance * scale;
}

Policy train(const NetworkCase& network, const ScenarioLattice& lattice, FormulationKind kind, const TrainConfig& cfg,
             const IterationCallback& on_iteration) {
  validate(cfg);
  lattice.validate(static_cast<int>(network.hydros.size()));
  Policy pol;
  pol.kind = kind;
  pol.case_name = network.name;
  pol.cost_to_go = CostToGo(lattice.n_stages());
  ModelCache cache(network, lattice, kind);
  Rng rng(cfg.seed);
  const auto start = std::chrono::steady_clock::now();
  const bool det = lattice.deterministic();
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    std::vector<Trajectory> trs;
    double fwd = 0.0;
    try {
      for (int s = 0; s < cfg.forward_scenarios; ++s) {
        const auto path = sample_path(lattice, rng);
        trs.push_back(forward_pass(cache, pol.cost_to_go, path, cfg.lp));
        fwd += trs.back().total_cost;
      }
      for (const auto& tr : trs) backward_pass(cache, pol.cost_to_go, tr.volumes, cfg.workers, cfg.lp);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string("training iteration ") + std::to_string(it) + ": " + e.what());
    }
    TrainingLogEntry entry;
    entry.iteration = it;
    entry.forward_cost = fwd / cfg.forward_scenarios;
    entry.lower_bound = lower_bound(cache, pol.cost_to_go, cfg.lp);
    entry.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    pol.log.push_back(entry);
    if (on_iteration) on_iteration(entry);
    if (converged(pol.log, cfg, det)) break;
  }
  pol.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return pol;
}

void write_training_log(std::ostream& os, std::span<const TrainingLogEntry> log) {
  os.imbue(std::locale::classic());
  os << "iteration,lower_bound,forward_cost,elapsed_seconds\n";
  os << std::setprecision(17);
  for (const auto& e : log) {
    os << e.iteration << ',' << e.lower_bound << ',' << e.forward_cost << ',' << e.elapsed_seconds << '\n';
  }
}

}  // namespace hydro
