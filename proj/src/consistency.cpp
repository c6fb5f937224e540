#include "hydrosddp/consistency.hpp"

#include "hydrosddp/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace hydro {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

StageRecord record_of(const NetworkCase& net, const StageSolution& s) {
  StageRecord r;
  r.cost = s.immediate_cost;
  r.volume = s.volume;
  r.thermal_mw = s.thermal.sum() * net.base_mva;
  double h = 0.0;
  for (std::size_t j = 0; j < net.hydros.size(); ++j) h += net.hydros[j].rho * s.turbined[static_cast<Eigen::Index>(j)];
  r.hydro_mw = h * net.base_mva;
  r.spot_price = s.spot_price;
  r.deficit_mw = s.deficit.sum() * net.base_mva;
  return r;
}

std::string context(int stage, const Eigen::VectorXd& state) {
  std::string out = "stage " + std::to_string(stage) + ", state (";
  for (Eigen::Index j = 0; j < state.size(); ++j) {
    if (j) out += ", ";
    out += std::to_string(state[j]);
  }
  return out + ")";
}

// Planning-kind roll-forward with fresh stage models, so every scenario is
// a pure function of its path.
ScenarioRecord roll_planning(const NetworkCase& net, const ScenarioLattice& lattice, const CostToGo& ctg,
                             FormulationKind kind, std::span<const int> path, const LpTolerances& tol) {
  ScenarioRecord rec;
  const int T = lattice.n_stages();
  Eigen::VectorXd state = initial_volumes(net);
  for (int t = 1; t <= T; ++t) {
    StageModel m(kind, stage_data(net, lattice, t, path[static_cast<std::size_t>(t - 1)]), t == T);
    m.set_state(state);
    StageSolution s = m.solve(ctg.at(t), tol);
    rec.stages.push_back(record_of(net, s));
    rec.total_cost += s.immediate_cost;
    state = s.volume;
  }
  rec.ok = true;
  return rec;
}

}  // namespace

// ---------------------------------------------------------------------------
// refinement
// ---------------------------------------------------------------------------

Trajectory forward_pass_ac(const NetworkCase& net, const ScenarioLattice& lattice, const CostToGo& ctg,
                           std::span<const int> path, const AcOptions& options, std::vector<double>* audit) {
  const int T = lattice.n_stages();
  if (static_cast<int>(path.size()) != T) throw Error(ErrorKind::DimensionMismatch, "path length differs from T");
  Trajectory tr;
  tr.outcomes.assign(path.begin(), path.end());
  tr.volumes.push_back(initial_volumes(net));
  for (int t = 1; t <= T; ++t) {
    const StageData d = stage_data(net, lattice, t, path[static_cast<std::size_t>(t - 1)]);
    AcStageSolution ac;
    try {
      ac = solve_stage_ac(d, tr.volumes.back(), ctg.at(t), t == T, options);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoLocalSolution) throw;
      throw Error(ErrorKind::NoLocalSolution, context(t, tr.volumes.back()) + ", outcome " +
                                                  std::to_string(path[static_cast<std::size_t>(t - 1)]) + ": " +
                                                  e.what());
    }
    if (audit) audit->push_back(audit_ac_solution(d, tr.volumes.back(), ac).worst());
    tr.stage_cost.push_back(ac.dispatch.immediate_cost);
    tr.total_cost += ac.dispatch.immediate_cost;
    tr.volumes.push_back(ac.dispatch.volume);
    tr.stages.push_back(std::move(ac.dispatch));
  }
  return tr;
}

Policy refine_policy(const NetworkCase& net, const ScenarioLattice& lattice, const Policy& policy,
                     const RefineConfig& cfg, const IterationCallback& on_iteration) {
  validate(cfg.train);
  Policy pol = policy;
  if (cfg.train.max_iterations == 0) return pol;
  if (pol.cost_to_go.n_stages() != lattice.n_stages()) {
    throw Error(ErrorKind::DimensionMismatch, "policy has " + std::to_string(pol.cost_to_go.n_stages()) +
                                                  " stages, lattice " + std::to_string(lattice.n_stages()));
  }
  ModelCache cache(net, lattice, pol.kind);
  // a different stream from training so Step 2 visits new paths
  Rng rng(cfg.train.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto start = std::chrono::steady_clock::now();
  std::vector<TrainingLogEntry> log;
  for (int it = 1; it <= cfg.train.max_iterations; ++it) {
    double fwd = 0.0;
    for (int s = 0; s < cfg.train.forward_scenarios; ++s) {
      const auto path = sample_path(lattice, rng);
      Trajectory tr;
      try {
        tr = forward_pass_ac(net, lattice, pol.cost_to_go, path, cfg.ac);
      } catch (const Error& e) {
        throw Error(e.kind(), "refinement iteration " + std::to_string(it) + ", scenario " + std::to_string(s) +
                                  ": " + e.what());
      }
      fwd += tr.total_cost;
      backward_pass(cache, pol.cost_to_go, tr.volumes, cfg.train.workers, cfg.train.lp);
    }
    TrainingLogEntry e;
    e.iteration = it;
    e.forward_cost = fwd / cfg.train.forward_scenarios;
    e.lower_bound = lower_bound(cache, pol.cost_to_go, cfg.train.lp);
    e.elapsed_seconds = seconds_since(start);
    log.push_back(e);
    if (on_iteration) on_iteration(e);
    // forward costs come from a different model than the bound, so only the
    // stalled-bound branch of the stopping rule can fire reliably
    if (converged(log, cfg.train, false)) break;
  }
  pol.refinement_log.insert(pol.refinement_log.end(), log.begin(), log.end());
  pol.refine_seconds += seconds_since(start);
  return pol;
}

// ---------------------------------------------------------------------------
// simulation
// ---------------------------------------------------------------------------

ScenarioSet sample_scenarios(const ScenarioLattice& lattice, int count, std::uint64_t seed) {
  if (count < 0) throw Error(ErrorKind::InvalidData, "scenario count must be nonnegative");
  ScenarioSet set;
  set.seed = seed;
  Rng rng(seed);
  set.paths.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) set.paths.push_back(sample_path(lattice, rng));
  return set;
}

EvaluationReport simulate(const NetworkCase& net, const ScenarioLattice& lattice, const Policy& policy,
                          FormulationKind kind, const ScenarioSet& scenarios, const SimulationConfig& cfg) {
  lattice.validate(static_cast<int>(net.hydros.size()));
  if (policy.cost_to_go.n_stages() != lattice.n_stages()) {
    throw Error(ErrorKind::DimensionMismatch, "policy and lattice stage counts differ");
  }
  for (const auto& p : scenarios.paths) {
    if (static_cast<int>(p.size()) != lattice.n_stages()) {
      throw Error(ErrorKind::DimensionMismatch, "scenario path length differs from T");
    }
  }
  EvaluationReport rep;
  rep.plan_kind = policy.kind;
  rep.sim_kind = kind;
  rep.seed = scenarios.seed;
  rep.paths = scenarios.paths;
  const int n = scenarios.size();
  rep.scenarios.resize(static_cast<std::size_t>(n));
  parallel_for(n, cfg.workers, [&](int i) {
    const auto& path = scenarios.paths[static_cast<std::size_t>(i)];
    ScenarioRecord& rec = rep.scenarios[static_cast<std::size_t>(i)];
    try {
      if (kind == FormulationKind::AC) {
        std::vector<double> audit;
        const Trajectory tr = forward_pass_ac(net, lattice, policy.cost_to_go, path, cfg.ac, &audit);
        for (std::size_t t = 0; t < tr.stages.size(); ++t) {
          rec.stages.push_back(record_of(net, tr.stages[t]));
          rec.stages.back().audit_residual = audit[t];
        }
        rec.total_cost = tr.total_cost;
        rec.ok = true;
      } else {
        rec = roll_planning(net, lattice, policy.cost_to_go, kind, path, cfg.lp);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoLocalSolution && e.kind() != ErrorKind::StageSolveFailure) throw;
      rec = ScenarioRecord{};
      rec.failure = "scenario " + std::to_string(i) + ": " + e.what();
    }
  });
  // reduce in index order
  double sum = 0.0, sq = 0.0;
  int ok = 0;
  for (const auto& r : rep.scenarios) {
    if (!r.ok) {
      ++rep.failures;
      continue;
    }
    ++ok;
    sum += r.total_cost;
    for (const auto& st : r.stages) rep.max_audit_residual = std::max(rep.max_audit_residual, st.audit_residual);
  }
  rep.expected_cost = ok > 0 ? sum / ok : std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rep.scenarios) {
    if (r.ok) sq += (r.total_cost - rep.expected_cost) * (r.total_cost - rep.expected_cost);
  }
  rep.standard_error = ok > 1 ? std::sqrt(sq / (ok - 1) / ok) : 0.0;
  return rep;
}

std::vector<double> scenario_mean_spot_price(const EvaluationReport& rep) {
  std::vector<double> out;
  out.reserve(rep.scenarios.size());
  for (const auto& r : rep.scenarios) {
    if (!r.ok || r.stages.empty()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double s = 0.0;
    Eigen::Index cnt = 0;
    for (const auto& st : r.stages) {
      s += st.spot_price.sum();
      cnt += st.spot_price.size();
    }
    out.push_back(cnt > 0 ? s / static_cast<double>(cnt) : 0.0);
  }
  return out;
}

StageSeries expected_series(const EvaluationReport& rep) {
  StageSeries out;
  int ok = 0;
  for (const auto& r : rep.scenarios) {
    if (!r.ok) continue;
    if (ok == 0) {
      const std::size_t T = r.stages.size();
      out.volume.assign(T, Eigen::VectorXd::Zero(r.stages.front().volume.size()));
      out.spot_price.assign(T, Eigen::VectorXd::Zero(r.stages.front().spot_price.size()));
      out.thermal_mw.assign(T, 0.0);
      out.hydro_mw.assign(T, 0.0);
      out.deficit_mw.assign(T, 0.0);
      out.cost.assign(T, 0.0);
    }
    ++ok;
    for (std::size_t t = 0; t < r.stages.size(); ++t) {
      const auto& st = r.stages[t];
      out.volume[t] += st.volume;
      out.spot_price[t] += st.spot_price;
      out.thermal_mw[t] += st.thermal_mw;
      out.hydro_mw[t] += st.hydro_mw;
      out.deficit_mw[t] += st.deficit_mw;
      out.cost[t] += st.cost;
    }
  }
  if (ok == 0) return out;
  const double inv = 1.0 / ok;
  for (std::size_t t = 0; t < out.cost.size(); ++t) {
    out.volume[t] *= inv;
    out.spot_price[t] *= inv;
    out.thermal_mw[t] *= inv;
    out.hydro_mw[t] *= inv;
    out.deficit_mw[t] *= inv;
    out.cost[t] *= inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// gap
// ---------------------------------------------------------------------------

double gap_percent(double planning, double implementation) {
  if (planning == 0.0) {
    return implementation == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), implementation);
  }
  return 100.0 * (implementation - planning) / planning;
}

GapResult inconsistency_gap(const EvaluationReport& plan, const EvaluationReport& impl, double train_seconds,
                            double refine_seconds) {
  if (plan.paths != impl.paths) {
    throw Error(ErrorKind::MismatchedScenarios, "planning and implementation reports use different scenario sets");
  }
  GapResult g;
  g.planning_cost = plan.expected_cost;
  g.implementation_cost = impl.expected_cost;
  g.gap_percent = gap_percent(plan.expected_cost, impl.expected_cost);
  g.train_seconds = train_seconds;
  g.refine_seconds = refine_seconds;
  // paired differences over scenarios that succeeded in both
  std::vector<double> d;
  for (std::size_t i = 0; i < plan.scenarios.size(); ++i) {
    if (plan.scenarios[i].ok && impl.scenarios[i].ok) {
      d.push_back(impl.scenarios[i].total_cost - plan.scenarios[i].total_cost);
    }
  }
  if (d.size() > 1 && plan.expected_cost != 0.0) {
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    double sq = 0.0;
    for (double x : d) sq += (x - mean) * (x - mean);
    const double se = std::sqrt(sq / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
    g.gap_standard_error = 100.0 * se / std::abs(plan.expected_cost);
  }
  return g;
}

Comparison compare(const NetworkCase& net, const ScenarioLattice& lattice, std::span<const FormulationKind> kinds,
                   const CompareConfig& cfg, const ProgressCallback& progress) {
  Comparison out;
  out.scenarios = sample_scenarios(lattice, cfg.scenarios, cfg.simulation_seed);
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  for (FormulationKind k : kinds) {
    ComparisonRow row;
    row.kind = k;
    try {
      if (k == FormulationKind::AC) throw Error(ErrorKind::UnsupportedKind, "AC is the implementation model");
      say(std::string("training ") + to_string(k));
      Policy p = train(net, lattice, k, cfg.train);
      row.step1_lower_bound = p.log.empty() ? 0.0 : p.log.back().lower_bound;
      say(std::string("refining ") + to_string(k));
      RefineConfig rc;
      rc.train = cfg.train;
      rc.train.max_iterations = cfg.refine_max_iterations;
      rc.ac = cfg.simulation.ac;
      p = refine_policy(net, lattice, p, rc);
      say(std::string("simulating ") + to_string(k));
      row.plan = simulate(net, lattice, p, k, out.scenarios, cfg.simulation);
      row.impl = simulate(net, lattice, p, FormulationKind::AC, out.scenarios, cfg.simulation);
      row.gap = inconsistency_gap(row.plan, row.impl, p.train_seconds, p.refine_seconds);
      row.policy = std::move(p);
      row.ok = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
      say(std::string(to_string(k)) + " failed: " + e.what());
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace hydro
