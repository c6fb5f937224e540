#include "hydrosddp/case_model.hpp"

#include "hydrosddp/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace hydro {

namespace {

std::string bus_tag(int id) { return "bus " + std::to_string(id); }

void require_nonnegative(double value, const std::string& what) {
  if (value < 0.0 || !std::isfinite(value)) {
    throw Error(ErrorKind::NegativeCapacity, what + " = " + std::to_string(value));
  }
}

// Three-colour DFS over the plant graph with edges plant -> downstream turbine
// and plant -> downstream spill recipient.
void check_cascade(const std::vector<HydroPlant>& plants) {
  std::vector<int> colour(plants.size(), 0);
  for (std::size_t start = 0; start < plants.size(); ++start) {
    if (colour[start] != 0) continue;
    // frames hold (node, next edge to follow)
    std::vector<std::pair<int, int>> frames{{static_cast<int>(start), 0}};
    colour[start] = 1;
    while (!frames.empty()) {
      auto& [node, edge] = frames.back();
      const auto& h = plants[static_cast<std::size_t>(node)];
      std::optional<int> next;
      if (edge == 0) next = h.downstream_turbine;
      else if (edge == 1) next = h.downstream_spill;
      if (edge >= 2) {
        colour[static_cast<std::size_t>(node)] = 2;
        frames.pop_back();
        continue;
      }
      ++edge;
      if (!next) continue;
      auto& c = colour[static_cast<std::size_t>(*next)];
      if (c == 1) {
        throw Error(ErrorKind::CascadeCycle,
                    "hydro plant " + std::to_string(plants[static_cast<std::size_t>(*next)].id) +
                        " is downstream of itself");
      }
      if (c == 0) {
        c = 1;
        frames.emplace_back(*next, 0);
      }
    }
  }
}

}  // namespace

int NetworkCase::reference_bus() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].is_reference) return static_cast<int>(i);
  }
  throw Error(ErrorKind::NoReferenceBus, "case " + name);
}

int NetworkCase::bus_index(int id) const {
  auto it = bus_lookup_.find(id);
  if (it == bus_lookup_.end()) {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == id) return static_cast<int>(i);
    throw Error(ErrorKind::InvalidData, "unknown " + bus_tag(id));
  }
  return it->second;
}

double NetworkCase::max_deficit_cost() const {
  double m = 0.0;
  for (const auto& b : buses) m = std::max(m, b.deficit_cost);
  return m;
}

NetworkCase load_validate(const RawCase& raw) {
  NetworkCase net;
  net.name = raw.name;
  if (!(raw.base_mva > 0.0)) throw Error(ErrorKind::InvalidData, "base_mva must be positive");
  if (!(raw.hours_per_stage > 0.0)) throw Error(ErrorKind::InvalidData, "hours_per_stage must be positive");
  net.base_mva = raw.base_mva;
  net.hours_per_stage = raw.hours_per_stage;
  const double base = raw.base_mva;

  int n_ref = 0;
  for (const auto& rb : raw.buses) {
    if (net.bus_lookup_.count(rb.id)) throw Error(ErrorKind::InvalidData, "duplicate " + bus_tag(rb.id));
    if (!(rb.v_min > 0.0) || rb.v_min > rb.v_max) {
      throw Error(ErrorKind::InvalidData, bus_tag(rb.id) + " needs 0 < v_min <= v_max");
    }
    Bus b;
    b.id = rb.id;
    b.is_reference = rb.is_reference;
    b.v_min = rb.v_min;
    b.v_max = rb.v_max;
    b.shunt_g = rb.shunt_g_mw / base;
    b.shunt_b = rb.shunt_b_mvar / base;
    b.load_p = rb.load_mw / base;
    for (double l : rb.load_mw_by_stage) b.load_p_by_stage.push_back(l / base);
    b.deficit_cost = rb.deficit_cost;
    require_nonnegative(rb.deficit_cost, bus_tag(rb.id) + " deficit_cost");
    n_ref += rb.is_reference ? 1 : 0;
    net.bus_lookup_[rb.id] = static_cast<int>(net.buses.size());
    net.buses.push_back(std::move(b));
  }
  if (n_ref == 0) throw Error(ErrorKind::NoReferenceBus, "case " + raw.name + " has no reference bus");
  if (n_ref > 1) throw Error(ErrorKind::InvalidData, "case " + raw.name + " has more than one reference bus");

  auto resolve = [&](int id, const std::string& who) {
    auto it = net.bus_lookup_.find(id);
    if (it == net.bus_lookup_.end()) throw Error(ErrorKind::InvalidData, who + " refers to unknown " + bus_tag(id));
    return it->second;
  };

  std::set<std::pair<int, int>> seen_pairs;
  for (const auto& rl : raw.branches) {
    const std::string who = "branch " + std::to_string(rl.from) + "-" + std::to_string(rl.to);
    if (rl.from == rl.to) throw Error(ErrorKind::InvalidData, who + " is a self loop");
    Branch br;
    // ordered pair: from id > to id
    br.from_id = std::max(rl.from, rl.to);
    br.to_id = std::min(rl.from, rl.to);
    if (!seen_pairs.insert({br.from_id, br.to_id}).second) throw Error(ErrorKind::DuplicateBranch, who);
    br.from = resolve(br.from_id, who);
    br.to = resolve(br.to_id, who);
    if (rl.x == 0.0) throw Error(ErrorKind::InvalidData, who + " has zero reactance");
    if (!(rl.rate_mva > 0.0)) throw Error(ErrorKind::NegativeCapacity, who + " rate_mva must be positive");
    br.r = rl.r;
    br.x = rl.x;
    br.g_c = rl.g_c;
    br.b_c = rl.b_c;
    br.f_max = rl.rate_mva / base;
    const double z2 = rl.r * rl.r + rl.x * rl.x;
    br.g = rl.r / z2;
    br.b = -rl.x / z2;
    net.branches.push_back(br);
  }

  double max_thermal_cost = 0.0;
  for (const auto& rt : raw.thermals) {
    const std::string who = "thermal " + std::to_string(rt.id);
    require_nonnegative(rt.p_max_mw, who + " p_max");
    require_nonnegative(rt.cost, who + " cost");
    if (rt.q_min_mvar > rt.q_max_mvar) throw Error(ErrorKind::InvalidData, who + " has q_min > q_max");
    ThermalGenerator g;
    g.id = rt.id;
    g.bus = resolve(rt.bus, who);
    g.p_max = rt.p_max_mw / base;
    g.q_min = rt.q_min_mvar / base;
    g.q_max = rt.q_max_mvar / base;
    g.cost = rt.cost;
    g.cost_by_stage = rt.cost_by_stage;
    max_thermal_cost = std::max(max_thermal_cost, rt.cost);
    for (double c : rt.cost_by_stage) {
      require_nonnegative(c, who + " stage cost");
      max_thermal_cost = std::max(max_thermal_cost, c);
    }
    net.thermals.push_back(std::move(g));
  }

  std::unordered_map<int, int> plant_lookup;
  for (std::size_t j = 0; j < raw.hydros.size(); ++j) {
    if (!plant_lookup.emplace(raw.hydros[j].id, static_cast<int>(j)).second) {
      throw Error(ErrorKind::InvalidData, "duplicate hydro plant " + std::to_string(raw.hydros[j].id));
    }
  }
  auto resolve_plant = [&](int id, const std::string& who) {
    auto it = plant_lookup.find(id);
    if (it == plant_lookup.end()) throw Error(ErrorKind::InvalidData, who + " links to unknown plant " + std::to_string(id));
    return it->second;
  };
  for (const auto& rh : raw.hydros) {
    const std::string who = "hydro plant " + std::to_string(rh.id);
    require_nonnegative(rh.v_max, who + " v_max");
    require_nonnegative(rh.u_max, who + " u_max");
    require_nonnegative(rh.rho_mw, who + " rho");
    if (rh.v_initial < 0.0 || rh.v_initial > rh.v_max) throw Error(ErrorKind::InvalidData, who + " needs 0 <= v_initial <= v_max");
    if (rh.q_min_mvar > rh.q_max_mvar) throw Error(ErrorKind::InvalidData, who + " has q_min > q_max");
    HydroPlant h;
    h.id = rh.id;
    h.bus = resolve(rh.bus, who);
    h.v_max = rh.v_max;
    h.v_initial = rh.v_initial;
    h.u_max = rh.u_max;
    h.rho = rh.rho_mw / base;
    if (rh.downstream_turbine) h.downstream_turbine = resolve_plant(*rh.downstream_turbine, who);
    if (rh.spill_specified) {
      if (rh.downstream_spill) h.downstream_spill = resolve_plant(*rh.downstream_spill, who);
    } else {
      h.downstream_spill = h.downstream_turbine;
    }
    h.q_min = rh.q_min_mvar / base;
    h.q_max = rh.q_max_mvar / base;
    net.hydros.push_back(std::move(h));
  }
  check_cascade(net.hydros);

  for (const auto& b : net.buses) {
    if (b.deficit_cost <= max_thermal_cost) {
      std::ostringstream os;
      os << bus_tag(b.id) << " deficit cost " << b.deficit_cost << " does not exceed the maximum thermal cost "
         << max_thermal_cost;
      net.warnings.push_back(os.str());
    }
  }
  return net;
}

RawCase to_raw(const NetworkCase& net) {
  RawCase raw;
  raw.name = net.name;
  raw.base_mva = net.base_mva;
  raw.hours_per_stage = net.hours_per_stage;
  const double base = net.base_mva;
  for (const auto& b : net.buses) {
    RawBus rb;
    rb.id = b.id;
    rb.is_reference = b.is_reference;
    rb.v_min = b.v_min;
    rb.v_max = b.v_max;
    rb.shunt_g_mw = b.shunt_g * base;
    rb.shunt_b_mvar = b.shunt_b * base;
    rb.load_mw = b.load_p * base;
    for (double l : b.load_p_by_stage) rb.load_mw_by_stage.push_back(l * base);
    rb.deficit_cost = b.deficit_cost;
    raw.buses.push_back(std::move(rb));
  }
  for (const auto& br : net.branches) {
    raw.branches.push_back({br.from_id, br.to_id, br.r, br.x, br.g_c, br.b_c, br.f_max * base});
  }
  for (const auto& g : net.thermals) {
    raw.thermals.push_back({g.id, net.buses[static_cast<std::size_t>(g.bus)].id, g.p_max * base, g.q_min * base,
                            g.q_max * base, g.cost, g.cost_by_stage});
  }
  for (const auto& h : net.hydros) {
    RawHydro rh;
    rh.id = h.id;
    rh.bus = net.buses[static_cast<std::size_t>(h.bus)].id;
    rh.v_max = h.v_max;
    rh.v_initial = h.v_initial;
    rh.u_max = h.u_max;
    rh.rho_mw = h.rho * base;
    if (h.downstream_turbine) rh.downstream_turbine = net.hydros[static_cast<std::size_t>(*h.downstream_turbine)].id;
    rh.spill_specified = true;
    if (h.downstream_spill) rh.downstream_spill = net.hydros[static_cast<std::size_t>(*h.downstream_spill)].id;
    rh.q_min_mvar = h.q_min * base;
    rh.q_max_mvar = h.q_max * base;
    raw.hydros.push_back(std::move(rh));
  }
  return raw;
}

std::vector<UpstreamSets> upstream_sets(const NetworkCase& net) {
  std::vector<UpstreamSets> sets(net.hydros.size());
  for (std::size_t j = 0; j < net.hydros.size(); ++j) {
    const auto& h = net.hydros[j];
    if (h.downstream_turbine) sets[static_cast<std::size_t>(*h.downstream_turbine)].turbine.push_back(static_cast<int>(j));
    if (h.downstream_spill) sets[static_cast<std::size_t>(*h.downstream_spill)].spill.push_back(static_cast<int>(j));
  }
  return sets;
}

const Outcome& ScenarioLattice::outcome(int stage, int index) const {
  if (stage < 1 || stage > n_stages()) {
    throw Error(ErrorKind::IndexOutOfRange, "stage " + std::to_string(stage) + " outside 1.." + std::to_string(n_stages()));
  }
  const auto& s = stages[static_cast<std::size_t>(stage - 1)];
  if (index < 0 || index >= static_cast<int>(s.size())) {
    throw Error(ErrorKind::IndexOutOfRange,
                "outcome " + std::to_string(index) + " at stage " + std::to_string(stage));
  }
  return s[static_cast<std::size_t>(index)];
}

bool ScenarioLattice::deterministic() const {
  return std::all_of(stages.begin(), stages.end(), [](const auto& s) { return s.size() == 1; });
}

void ScenarioLattice::validate(int n_plants) const {
  for (int t = 1; t <= n_stages(); ++t) {
    const auto& s = stages[static_cast<std::size_t>(t - 1)];
    if (s.empty()) throw Error(ErrorKind::ProbabilitySumError, "stage " + std::to_string(t) + " has no outcomes");
    double total = 0.0;
    for (const auto& o : s) {
      if (o.inflow.size() != n_plants) {
        throw Error(ErrorKind::DimensionMismatch, "stage " + std::to_string(t) + " inflow vector has " +
                                                      std::to_string(o.inflow.size()) + " entries, expected " +
                                                      std::to_string(n_plants));
      }
      if ((o.inflow.array() < 0.0).any()) throw Error(ErrorKind::NegativeInflow, "stage " + std::to_string(t));
      if (o.probability < 0.0) throw Error(ErrorKind::ProbabilitySumError, "negative probability at stage " + std::to_string(t));
      total += o.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorKind::ProbabilitySumError,
                  "stage " + std::to_string(t) + " probabilities sum to " + std::to_string(total));
    }
  }
}

StageData stage_data(const NetworkCase& net, int stage, const Eigen::VectorXd& inflow) {
  if (inflow.size() != static_cast<Eigen::Index>(net.hydros.size())) {
    throw Error(ErrorKind::DimensionMismatch, "inflow vector size does not match plant count");
  }
  StageData d;
  d.network = &net;
  d.stage = stage;
  d.inflow = inflow;
  d.load.resize(static_cast<Eigen::Index>(net.buses.size()));
  for (std::size_t n = 0; n < net.buses.size(); ++n) {
    const auto& b = net.buses[n];
    if (!b.load_p_by_stage.empty() && stage > static_cast<int>(b.load_p_by_stage.size())) {
      throw Error(ErrorKind::IndexOutOfRange, "bus " + std::to_string(b.id) + " has no load for stage " + std::to_string(stage));
    }
    d.load[static_cast<Eigen::Index>(n)] = b.load_at(stage);
  }
  d.thermal_cost.resize(static_cast<Eigen::Index>(net.thermals.size()));
  for (std::size_t i = 0; i < net.thermals.size(); ++i) {
    const auto& g = net.thermals[i];
    if (!g.cost_by_stage.empty() && stage > static_cast<int>(g.cost_by_stage.size())) {
      throw Error(ErrorKind::IndexOutOfRange, "thermal " + std::to_string(g.id) + " has no cost for stage " + std::to_string(stage));
    }
    d.thermal_cost[static_cast<Eigen::Index>(i)] = g.cost_at(stage);
  }
  return d;
}

StageData stage_data(const NetworkCase& net, const ScenarioLattice& lattice, int stage, int outcome) {
  const Outcome& o = lattice.outcome(stage, outcome);
  StageData d = stage_data(net, stage, o.inflow);
  d.outcome = outcome;
  return d;
}

}  // namespace hydro
