#include "oracle.hpp"

#include "hydrosddp/lp.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace oracle {

using namespace hydro;

double deterministic_equivalent(const NetworkCase& net, const ScenarioLattice& lat, FormulationKind kind,
                                int first, const Eigen::VectorXd& start) {
  const int T = lat.n_stages();
  const int nb = static_cast<int>(net.buses.size());
  const int nl = static_cast<int>(net.branches.size());
  const int ng = static_cast<int>(net.thermals.size());
  const int nh = static_cast<int>(net.hydros.size());
  const double inf = std::numeric_limits<double>::infinity();
  LinearProgram lp;

  // node volumes of the parent, as column ids (or -1 for the fixed start)
  std::function<void(int, double, const std::vector<int>&)> grow = [&](int t, double prob, const std::vector<int>& parent) {
    for (int k = 0; k < lat.n_outcomes(t); ++k) {
      const Outcome& o = lat.outcome(t, k);
      const double pr = prob * o.probability;
      std::vector<int> p(ng), u(nh), s(nh), v(nh), d(nb), f(nl), th(nb, -1);
      for (int i = 0; i < ng; ++i) p[i] = lp.add_variable(0.0, net.thermals[i].p_max, pr * net.thermals[i].cost_at(t));
      for (int j = 0; j < nh; ++j) {
        u[j] = lp.add_variable(0.0, net.hydros[j].u_max, 0.0);
        s[j] = lp.add_variable(0.0, inf, 0.0);
        v[j] = lp.add_variable(0.0, net.hydros[j].v_max, 0.0);
      }
      for (int n = 0; n < nb; ++n) d[n] = lp.add_variable(0.0, inf, pr * net.buses[n].deficit_cost);
      for (int l = 0; l < nl; ++l) f[l] = lp.add_variable(-net.branches[l].f_max, net.branches[l].f_max, 0.0);
      if (kind == FormulationKind::DC) {
        for (int n = 0; n < nb; ++n) {
          const bool ref = net.buses[n].is_reference;
          th[n] = lp.add_variable(ref ? 0.0 : -inf, ref ? 0.0 : inf, 0.0);
        }
        for (int l = 0; l < nl; ++l) {
          const auto& br = net.branches[l];
          lp.add_row({{f[l], 1.0}, {th[br.from], -1.0 / br.x}, {th[br.to], 1.0 / br.x}}, Sense::Equal, 0.0);
        }
      }
      for (int n = 0; n < nb; ++n) {
        std::vector<int> idx;
        std::vector<double> val;
        for (int i = 0; i < ng; ++i)
          if (net.thermals[i].bus == n) idx.push_back(p[i]), val.push_back(1.0);
        for (int j = 0; j < nh; ++j)
          if (net.hydros[j].bus == n) idx.push_back(u[j]), val.push_back(net.hydros[j].rho);
        for (int l = 0; l < nl; ++l) {
          if (net.branches[l].from == n) idx.push_back(f[l]), val.push_back(-1.0);
          if (net.branches[l].to == n) idx.push_back(f[l]), val.push_back(1.0);
        }
        idx.push_back(d[n]);
        val.push_back(1.0);
        lp.add_row(idx, val, Sense::Equal, net.buses[n].load_at(t));
      }
      for (int j = 0; j < nh; ++j) {
        std::vector<int> idx{v[j], u[j], s[j]};
        std::vector<double> val{1.0, 1.0, 1.0};
        double rhs = o.inflow[j];
        if (parent[j] < 0) rhs += start[j];
        else idx.push_back(parent[j]), val.push_back(-1.0);
        for (int k2 = 0; k2 < nh; ++k2) {
          const auto& up = net.hydros[k2];
          if (up.downstream_turbine && *up.downstream_turbine == j) idx.push_back(u[k2]), val.push_back(-1.0);
          if (up.downstream_spill && *up.downstream_spill == j) idx.push_back(s[k2]), val.push_back(-1.0);
        }
        lp.add_row(idx, val, Sense::Equal, rhs);
      }
      if (t < T) grow(t + 1, pr, v);
    }
  };
  grow(first, 1.0, std::vector<int>(nh, -1));
  const LpSolution sol = solve(lp);
  if (!sol.optimal()) return std::numeric_limits<double>::quiet_NaN();
  return sol.objective * net.energy_scale();
}

double vertex_enumeration(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                          Eigen::VectorXd* argmin) {
  // constraints: A x <= b and -x <= 0; choose n of them active
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  Eigen::MatrixXd G(m + n, n);
  Eigen::VectorXd h(m + n);
  G << A, -Eigen::MatrixXd::Identity(n, n);
  h << b, Eigen::VectorXd::Zero(n);
  const int total = m + n;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(n);
  std::function<void(int, int)> rec = [&](int from, int depth) {
    if (depth == n) {
      Eigen::MatrixXd M(n, n);
      Eigen::VectorXd r(n);
      for (int k = 0; k < n; ++k) {
        M.row(k) = G.row(pick[k]);
        r[k] = h[pick[k]];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (lu.rank() < n) return;
      const Eigen::VectorXd x = lu.solve(r);
      if (((G * x - h).array() > 1e-9).any()) return;
      const double val = c.dot(x);
      if (val < best) {
        best = val;
        if (argmin) *argmin = x;
      }
      return;
    }
    for (int k = from; k < total; ++k) {
      pick[depth] = k;
      rec(k + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

namespace {

RawBus bus(int id, bool ref, double load, double deficit) {
  RawBus b;
  b.id = id;
  b.is_reference = ref;
  b.load_mw = load;
  b.deficit_cost = deficit;
  return b;
}

RawThermal thermal(int id, int at, double pmax, double cost) {
  RawThermal g;
  g.id = id;
  g.bus = at;
  g.p_max_mw = pmax;
  g.cost = cost;
  return g;
}

RawHydro hydro(int id, int at, double vmax, double v0, double umax, double rho) {
  RawHydro h;
  h.id = id;
  h.bus = at;
  h.v_max = vmax;
  h.v_initial = v0;
  h.u_max = umax;
  h.rho_mw = rho;
  return h;
}

RawBranch line(int from, int to, double x, double rate) {
  RawBranch l;
  l.from = from;
  l.to = to;
  l.r = 0.0;
  l.x = x;
  l.rate_mva = rate;
  return l;
}

ScenarioLattice lattice(int T, const std::vector<std::vector<std::pair<std::vector<double>, double>>>& per_stage) {
  ScenarioLattice lat;
  for (int t = 0; t < T; ++t) {
    std::vector<Outcome> v;
    for (const auto& [inflow, p] : per_stage[static_cast<std::size_t>(t) % per_stage.size()]) {
      Outcome o;
      o.inflow = Eigen::Map<const Eigen::VectorXd>(inflow.data(), static_cast<Eigen::Index>(inflow.size()));
      o.probability = p;
      v.push_back(o);
    }
    lat.stages.push_back(v);
  }
  return lat;
}

}  // namespace

std::vector<TinyInstance> tiny_instances() {
  std::vector<TinyInstance> out;
  {
    RawCase rc;
    rc.name = "one-bus-T2";
    rc.base_mva = 1.0;
    rc.hours_per_stage = 1.0;
    rc.buses = {bus(1, true, 1.0, 500.0)};
    rc.thermals = {thermal(1, 1, 2.0, 50.0)};
    rc.hydros = {hydro(1, 1, 2.0, 0.5, 1.0, 1.0)};
    out.push_back({load_validate(rc), lattice(2, {{{{0.2}, 0.5}, {{0.8}, 0.5}}}), FormulationKind::NFA, "one-bus-T2"});
  }
  {
    RawCase rc;
    rc.name = "one-bus-T3";
    rc.base_mva = 1.0;
    rc.hours_per_stage = 1.0;
    rc.buses = {bus(1, true, 1.5, 400.0)};
    rc.thermals = {thermal(1, 1, 0.7, 20.0), thermal(2, 1, 2.0, 90.0)};
    rc.hydros = {hydro(1, 1, 3.0, 1.0, 1.2, 1.0)};
    out.push_back({load_validate(rc), lattice(3, {{{{0.1}, 0.3}, {{1.0}, 0.7}}}), FormulationKind::NFA, "one-bus-T3"});
  }
  {
    RawCase rc;
    rc.name = "two-bus-T3";
    rc.base_mva = 100.0;
    rc.hours_per_stage = 2.0;
    rc.buses = {bus(1, true, 20.0, 800.0), bus(2, false, 120.0, 800.0)};
    rc.branches = {line(2, 1, 0.1, 70.0)};
    rc.thermals = {thermal(1, 2, 80.0, 60.0), thermal(2, 1, 40.0, 25.0)};
    rc.hydros = {hydro(1, 1, 1.5, 0.6, 1.0, 1.0)};
    out.push_back({load_validate(rc), lattice(3, {{{{0.3}, 0.5}, {{0.6}, 0.5}}, {{{0.0}, 0.4}, {{0.9}, 0.6}}}),
                   FormulationKind::NFA, "two-bus-T3"});
  }
  {
    RawCase rc;
    rc.name = "loop-dc-T3";
    rc.base_mva = 100.0;
    rc.hours_per_stage = 1.0;
    rc.buses = {bus(1, true, 0.0, 1000.0), bus(2, false, 50.0, 1000.0), bus(3, false, 100.0, 1000.0)};
    rc.branches = {line(2, 1, 0.1, 200.0), line(3, 1, 0.1, 40.0), line(3, 2, 0.1, 200.0)};
    rc.thermals = {thermal(1, 2, 100.0, 30.0), thermal(2, 3, 100.0, 120.0)};
    rc.hydros = {hydro(1, 1, 1.0, 0.5, 1.0, 1.0)};
    out.push_back({load_validate(rc), lattice(3, {{{{0.2}, 0.5}, {{0.7}, 0.5}}}), FormulationKind::DC, "loop-dc-T3"});
  }
  {
    RawCase rc;
    rc.name = "cascade-dc-T3";
    rc.base_mva = 100.0;
    rc.hours_per_stage = 1.0;
    rc.buses = {bus(1, true, 30.0, 900.0), bus(2, false, 90.0, 900.0)};
    rc.branches = {line(2, 1, 0.2, 60.0)};
    rc.thermals = {thermal(1, 2, 150.0, 70.0)};
    RawHydro up = hydro(1, 1, 1.0, 0.4, 0.6, 0.5);
    up.downstream_turbine = 2;
    rc.hydros = {up, hydro(2, 2, 0.8, 0.2, 0.8, 0.8)};
    out.push_back({load_validate(rc), lattice(3, {{{{0.3, 0.1}, 0.6}, {{0.0, 0.4}, 0.4}}}), FormulationKind::DC,
                   "cascade-dc-T3"});
  }
  return out;
}

}  // namespace oracle
