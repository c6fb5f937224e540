#pragma once

// Small hand-built cases shared by the unit tests.

#include "hydrosddp/case_model.hpp"

#include <string>
#include <utility>
#include <vector>

namespace fx {

inline hydro::RawBus bus(int id, bool ref, double load_mw, double deficit = 1000.0) {
  hydro::RawBus b;
  b.id = id;
  b.is_reference = ref;
  b.load_mw = load_mw;
  b.deficit_cost = deficit;
  b.v_min = 0.9;
  b.v_max = 1.1;
  return b;
}

inline hydro::RawBranch line(int from, int to, double r, double x, double rate_mva) {
  hydro::RawBranch l;
  l.from = from;
  l.to = to;
  l.r = r;
  l.x = x;
  l.rate_mva = rate_mva;
  return l;
}

inline hydro::RawThermal thermal(int id, int at, double pmax_mw, double cost, double q = 0.0) {
  hydro::RawThermal g;
  g.id = id;
  g.bus = at;
  g.p_max_mw = pmax_mw;
  g.cost = cost;
  g.q_min_mvar = -q;
  g.q_max_mvar = q;
  return g;
}

inline hydro::RawHydro hydro_plant(int id, int at, double vmax, double v0, double umax, double rho_mw, double q = 0.0) {
  hydro::RawHydro h;
  h.id = id;
  h.bus = at;
  h.v_max = vmax;
  h.v_initial = v0;
  h.u_max = umax;
  h.rho_mw = rho_mw;
  h.q_min_mvar = -q;
  h.q_max_mvar = q;
  return h;
}

/// Same support every stage.
inline hydro::ScenarioLattice lattice(int stages, const std::vector<std::pair<std::vector<double>, double>>& support) {
  hydro::ScenarioLattice lat;
  for (int t = 0; t < stages; ++t) {
    std::vector<hydro::Outcome> v;
    for (const auto& [inflow, p] : support) {
      hydro::Outcome o;
      o.inflow = Eigen::Map<const Eigen::VectorXd>(inflow.data(), static_cast<Eigen::Index>(inflow.size()));
      o.probability = p;
      v.push_back(o);
    }
    lat.stages.push_back(v);
  }
  return lat;
}

/// Looped 3-bus system with a congested corridor and a hydro plant at the reference bus.
inline hydro::RawCase loop3(double r = 0.03) {
  hydro::RawCase rc;
  rc.name = "loop3-test";
  rc.base_mva = 100.0;
  rc.hours_per_stage = 730.0;
  rc.buses = {bus(1, true, 0.0), bus(2, false, 20.0), bus(3, false, 150.0)};
  rc.branches = {line(2, 1, r, 0.1, 200.0), line(3, 1, r, 0.1, 50.0), line(3, 2, r, 0.1, 200.0)};
  for (auto& b : rc.branches) b.b_c = 0.02;
  rc.thermals = {thermal(1, 2, 60.0, 30.0, 60.0), thermal(2, 3, 180.0, 150.0, 100.0)};
  rc.hydros = {hydro_plant(1, 1, 400.0, 200.0, 150.0, 1.0, 100.0)};
  return rc;
}

}  // namespace fx
