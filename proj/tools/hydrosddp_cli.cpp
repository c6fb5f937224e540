// Command-line front end: train, refine, simulate, compare, validate.

#include "hydrosddp/consistency.hpp"
#include "hydrosddp/error.hpp"
#include "hydrosddp/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace hydro;

namespace {

struct RunConfig {
  std::string case_path;
  std::string inflow_path;
  std::string policy_path;
  std::string kinds = "nfa";
  std::string sim_kind = "ac";
  int stages = 0;  // 0 = take T from the inflow file
  double hours = 0.0;
  std::uint64_t seed = 1;
  std::uint64_t sim_seed = 0;  // 0 = derived from seed
  std::string out = "out";
  int scenarios = 500;
  int max_iter = 200;
  int refine_iter = -1;  // -1 = same as max_iter
  double tol = 1e-4;
  int window = 10;
  int workers = 1;
  bool quiet = false;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::StageSolveFailure:
    case ErrorKind::NoLocalSolution:
    case ErrorKind::EigenFailure: return 2;
    default: return 1;
  }
}

struct Loaded {
  NetworkCase net;
  ScenarioLattice lattice;
};

Loaded load_inputs(const RunConfig& rc, bool need_inflows) {
  if (rc.case_path.empty()) throw Error(ErrorKind::InvalidData, "--case is required");
  if (!fs::exists(rc.case_path)) throw Error(ErrorKind::InvalidData, "case file not found: " + rc.case_path);
  RawCase raw = parse_case(rc.case_path);
  if (rc.hours > 0.0) raw.hours_per_stage = rc.hours;
  Loaded l{load_validate(raw), {}};
  for (const auto& w : l.net.warnings) std::cerr << "warning: " << w << '\n';
  if (need_inflows) {
    if (rc.inflow_path.empty()) throw Error(ErrorKind::InvalidData, "--inflows is required");
    if (!fs::exists(rc.inflow_path)) throw Error(ErrorKind::InvalidData, "inflow file not found: " + rc.inflow_path);
    std::vector<std::string> warn;
    l.lattice = parse_inflows(rc.inflow_path, l.net, &warn);
    for (const auto& w : warn) std::cerr << "warning: " << w << '\n';
    if (rc.stages > 0 && rc.stages != l.lattice.n_stages()) {
      throw Error(ErrorKind::InvalidData, "--stages " + std::to_string(rc.stages) + " but the inflow file has " +
                                              std::to_string(l.lattice.n_stages()) + " stages");
    }
  }
  return l;
}

TrainConfig train_config(const RunConfig& rc) {
  TrainConfig c;
  c.max_iterations = rc.max_iter;
  c.tolerance = rc.tol;
  c.window = rc.window;
  c.seed = rc.seed;
  c.workers = rc.workers;
  validate(c);
  return c;
}

std::uint64_t sim_seed(const RunConfig& rc) { return rc.sim_seed ? rc.sim_seed : rc.seed + 1000003ULL; }

std::vector<FormulationKind> kinds_of(const std::string& list) {
  std::vector<FormulationKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_kind(item));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidData, "--kind is empty");
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

fs::path out_dir(const RunConfig& rc, const char* sub) {
  fs::path p = fs::path(rc.out) / sub;
  fs::create_directories(p);
  return p;
}

template <typename F>
void write_to(const fs::path& p, F&& f) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorKind::InvalidData, "cannot write " + p.string());
  f(os);
}

IterationCallback progress(const RunConfig& rc, const std::string& tag) {
  if (rc.quiet) return {};
  return [tag](const TrainingLogEntry& e) {
    std::cerr << tag << " iter " << e.iteration << "  LB " << e.lower_bound << "  fwd " << e.forward_cost << '\n';
  };
}

int cmd_validate(const RunConfig& rc) {
  Loaded l = load_inputs(rc, !rc.inflow_path.empty());
  std::cout << "case " << l.net.name << ": " << l.net.buses.size() << " buses, " << l.net.branches.size()
            << " branches, " << l.net.thermals.size() << " thermals, " << l.net.hydros.size() << " hydros\n";
  if (!rc.inflow_path.empty()) {
    std::cout << "inflows: " << l.lattice.n_stages() << " stages"
              << (l.lattice.deterministic() ? " (deterministic)" : "") << '\n';
  }
  if (!rc.policy_path.empty()) {
    Policy p = load_policy(rc.policy_path);
    std::cout << "policy: " << to_string(p.kind) << ", " << p.cost_to_go.total_cuts() << " cuts\n";
  }
  std::cout << "valid\n";
  return 0;
}

int cmd_train(const RunConfig& rc) {
  Loaded l = load_inputs(rc, true);
  const TrainConfig tc = train_config(rc);
  for (FormulationKind k : kinds_of(rc.kinds)) {
    const std::string name = lower(to_string(k));
    Policy p = train(l.net, l.lattice, k, tc, progress(rc, name));
    const fs::path pol = out_dir(rc, "policy") / (name + ".json");
    write_to(pol, [&](std::ostream& os) { save_policy(os, p); });
    write_to(out_dir(rc, "logs") / ("train_" + name + ".csv"),
             [&](std::ostream& os) { write_training_log(os, p.log); });
    std::cout << name << ": " << p.log.size() << " iterations, LB " << p.log.back().lower_bound << " -> "
              << pol.string() << '\n';
  }
  return 0;
}

std::string policy_path_for(const RunConfig& rc, FormulationKind k) {
  if (!rc.policy_path.empty()) return rc.policy_path;
  return (fs::path(rc.out) / "policy" / (lower(to_string(k)) + ".json")).string();
}

int cmd_refine(const RunConfig& rc) {
  Loaded l = load_inputs(rc, true);
  const std::string path = policy_path_for(rc, kinds_of(rc.kinds).front());
  Policy p = load_policy(path);
  RefineConfig cfg;
  cfg.train = train_config(rc);
  cfg.train.max_iterations = rc.refine_iter >= 0 ? rc.refine_iter : rc.max_iter;
  const std::string name = lower(to_string(p.kind));
  const double lb0 = p.log.empty() ? 0.0 : p.log.back().lower_bound;
  p = refine_policy(l.net, l.lattice, p, cfg, progress(rc, name + " refine"));
  write_to(path, [&](std::ostream& os) { save_policy(os, p); });
  write_to(out_dir(rc, "logs") / ("refine_" + name + ".csv"),
           [&](std::ostream& os) { write_training_log(os, p.refinement_log); });
  std::cout << name << ": " << p.refinement_log.size() << " refinement iterations, LB " << lb0 << " -> "
            << (p.refinement_log.empty() ? lb0 : p.refinement_log.back().lower_bound) << " -> " << path << '\n';
  return 0;
}

int cmd_simulate(const RunConfig& rc) {
  Loaded l = load_inputs(rc, true);
  const std::string path = policy_path_for(rc, kinds_of(rc.kinds).front());
  const Policy p = load_policy(path);
  const FormulationKind sk = parse_kind(rc.sim_kind);
  SimulationConfig sc;
  sc.workers = rc.workers;
  const ScenarioSet set = sample_scenarios(l.lattice, rc.scenarios, sim_seed(rc));
  const EvaluationReport rep = simulate(l.net, l.lattice, p, sk, set, sc);
  const std::string tag = lower(to_string(p.kind)) + "_" + lower(to_string(sk));
  write_to(out_dir(rc, "reports") / ("simulate_" + tag + ".json"), [&](std::ostream& os) { write_report_json(os, rep); });
  write_to(out_dir(rc, "reports") / ("simulate_" + tag + ".csv"),
           [&](std::ostream& os) { write_report_csv(os, rep, l.net); });
  write_to(out_dir(rc, "trajectories") / (tag + ".csv"),
           [&](std::ostream& os) { write_trajectory_csv(os, rep, l.net); });
  std::cout << tag << ": expected cost " << rep.expected_cost << " (se " << rep.standard_error << "), "
            << rep.failures << " failed of " << rep.n_scenarios() << '\n';
  return rep.valid() ? 0 : 2;
}

int cmd_compare(const RunConfig& rc) {
  Loaded l = load_inputs(rc, true);
  CompareConfig cc;
  cc.train = train_config(rc);
  cc.refine_max_iterations = rc.refine_iter >= 0 ? rc.refine_iter : rc.max_iter;
  cc.scenarios = rc.scenarios;
  cc.simulation_seed = sim_seed(rc);
  cc.simulation.workers = rc.workers;
  const auto kinds = kinds_of(rc.kinds);
  ProgressCallback say;
  if (!rc.quiet) say = [](const std::string& s) { std::cerr << s << '\n'; };
  const Comparison c = compare(l.net, l.lattice, kinds, cc, say);
  write_to(out_dir(rc, "reports") / "comparison.csv", [&](std::ostream& os) { write_comparison_csv(os, c); });
  write_to(out_dir(rc, "reports") / "comparison.json", [&](std::ostream& os) { write_comparison_json(os, c); });
  bool all_ok = true;
  for (const auto& row : c.rows) {
    const std::string name = lower(to_string(row.kind));
    if (!row.ok) {
      all_ok = false;
      std::cerr << name << ": " << row.error << '\n';
      continue;
    }
    write_to(out_dir(rc, "policy") / (name + ".json"), [&](std::ostream& os) { save_policy(os, row.policy); });
    write_to(out_dir(rc, "logs") / ("train_" + name + ".csv"),
             [&](std::ostream& os) { write_training_log(os, row.policy.log); });
    write_to(out_dir(rc, "logs") / ("refine_" + name + ".csv"),
             [&](std::ostream& os) { write_training_log(os, row.policy.refinement_log); });
    write_to(out_dir(rc, "trajectories") / (name + "_" + name + ".csv"),
             [&](std::ostream& os) { write_trajectory_csv(os, row.plan, l.net); });
    write_to(out_dir(rc, "trajectories") / (name + "_ac.csv"),
             [&](std::ostream& os) { write_trajectory_csv(os, row.impl, l.net); });
    write_to(out_dir(rc, "reports") / ("simulate_" + name + "_" + name + ".json"),
             [&](std::ostream& os) { write_report_json(os, row.plan); });
    write_to(out_dir(rc, "reports") / ("simulate_" + name + "_ac.json"),
             [&](std::ostream& os) { write_report_json(os, row.impl); });
    if (!row.plan.valid() || !row.impl.valid()) all_ok = false;
  }
  write_comparison_csv(std::cout, c);
  return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SDDP hydrothermal dispatch with network formulations"};
  app.require_subcommand(1);
  RunConfig rc;

  auto common = [&](CLI::App* sub, bool inflows) {
    sub->add_option("--case", rc.case_path, "case file (.json, or .m with a .hydro.json sidecar)")->required();
    auto* in = sub->add_option("--inflows", rc.inflow_path, "inflow CSV");
    if (inflows) in->required();
    sub->add_option("--kind", rc.kinds, "formulation(s): nfa,dc,dcll,soc,sdp");
    sub->add_option("--stages", rc.stages, "expected number of stages (checked against the inflow file)");
    sub->add_option("--hours", rc.hours, "override hours per stage");
    sub->add_option("--seed", rc.seed, "training seed");
    sub->add_option("--sim-seed", rc.sim_seed, "out-of-sample seed (default: derived from --seed)");
    sub->add_option("--out", rc.out, "output directory");
    sub->add_option("--scenarios", rc.scenarios, "out-of-sample paths");
    sub->add_option("--max-iter", rc.max_iter, "iteration budget");
    sub->add_option("--refine-iter", rc.refine_iter, "refinement budget (default: --max-iter)");
    sub->add_option("--tol", rc.tol, "relative stopping tolerance");
    sub->add_option("--window", rc.window, "stopping window K");
    sub->add_option("--workers", rc.workers, "threads for backward passes and simulation");
    sub->add_option("--policy", rc.policy_path, "policy file");
    sub->add_flag("--quiet", rc.quiet, "no progress on stderr");
  };
  auto* train_cmd = app.add_subcommand("train", "train a policy per kind");
  common(train_cmd, true);
  auto* refine_cmd = app.add_subcommand("refine", "AC-forward refinement of a trained policy");
  common(refine_cmd, true);
  auto* sim_cmd = app.add_subcommand("simulate", "out-of-sample simulation of a policy");
  common(sim_cmd, true);
  sim_cmd->add_option("--sim-kind", rc.sim_kind, "simulation model (default ac)");
  auto* cmp_cmd = app.add_subcommand("compare", "train, refine and simulate each kind against AC");
  common(cmp_cmd, true);
  auto* val_cmd = app.add_subcommand("validate", "check input files only");
  common(val_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_code = app.exit(e);
    return rc_code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return cmd_train(rc);
    if (*refine_cmd) return cmd_refine(rc);
    if (*sim_cmd) return cmd_simulate(rc);
    if (*cmp_cmd) return cmd_compare(rc);
    if (*val_cmd) return cmd_validate(rc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
