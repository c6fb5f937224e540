#include "hydrosddp/acopf.hpp"

#include "hydrosddp/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <queue>

namespace hydro {

PolarState PolarState::flat(const NetworkCase& net) {
  PolarState s;
  s.v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(net.buses.size()));
  s.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.buses.size()));
  return s;
}

namespace {

// Branch quantities (p_fr, q_fr, p_to, q_to) and their partials with respect
// to (v_n, v_m, theta_n, theta_m).
struct BranchEval {
  Eigen::Vector4d value;
  Eigen::Matrix4d jac;
};

BranchEval eval_branch(const Branch& br, double vn, double vm, double tn, double tm) {
  const double g = br.g, b = br.b, gs = br.g_c / 2.0, bs = br.b_c / 2.0;
  const double c = std::cos(tn - tm), s = std::sin(tn - tm);
  Eigen::Matrix4d coef;
  coef << g + gs, 0.0, -g, -b,
          -(b + bs), 0.0, b, -g,
          0.0, g + gs, -g, b,
          0.0, -(b + bs), b, g;
  const Eigen::Vector4d w(vn * vn, vm * vm, vn * vm * c, vn * vm * s);
  Eigen::Matrix4d dw;
  dw << 2.0 * vn, 0.0, 0.0, 0.0,
        0.0, 2.0 * vm, 0.0, 0.0,
        vm * c, vn * c, -vn * vm * s, vn * vm * s,
        vm * s, vn * s, vn * vm * c, -vn * vm * c;
  return {coef * w, coef * dw};
}

// Net injections P, Q per bus and, optionally, d(P,Q)/d(v,theta).
void injections(const NetworkCase& net, const PolarState& st, Eigen::VectorXd& P, Eigen::VectorXd& Q,
                Eigen::MatrixXd* J) {
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  P.setZero(nb);
  Q.setZero(nb);
  if (J) J->setZero(2 * nb, 2 * nb);
  for (Eigen::Index n = 0; n < nb; ++n) {
    const auto& bus = net.buses[static_cast<std::size_t>(n)];
    const double v = st.v[n];
    P[n] += bus.shunt_g * v * v;
    Q[n] -= bus.shunt_b * v * v;
    if (J) {
      (*J)(n, n) += 2.0 * bus.shunt_g * v;
      (*J)(nb + n, n) -= 2.0 * bus.shunt_b * v;
    }
  }
  for (const auto& br : net.branches) {
    const int n = br.from, m = br.to;
    const BranchEval e = eval_branch(br, st.v[n], st.v[m], st.theta[n], st.theta[m]);
    P[n] += e.value[0];
    Q[n] += e.value[1];
    P[m] += e.value[2];
    Q[m] += e.value[3];
    if (!J) continue;
    const Eigen::Index cols[4] = {n, m, nb + n, nb + m};
    const Eigen::Index rows[4] = {n, nb + n, m, nb + m};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) (*J)(rows[r], cols[c]) += e.jac(r, c);
  }
}

}  // namespace

BranchFlows branch_flows(const NetworkCase& net, const PolarState& st) {
  const auto nl = static_cast<Eigen::Index>(net.branches.size());
  BranchFlows f;
  f.p_nm.resize(nl);
  f.q_nm.resize(nl);
  f.p_mn.resize(nl);
  f.q_mn.resize(nl);
  for (Eigen::Index l = 0; l < nl; ++l) {
    const auto& br = net.branches[static_cast<std::size_t>(l)];
    const BranchEval e = eval_branch(br, st.v[br.from], st.v[br.to], st.theta[br.from], st.theta[br.to]);
    f.p_nm[l] = e.value[0];
    f.q_nm[l] = e.value[1];
    f.p_mn[l] = e.value[2];
    f.q_mn[l] = e.value[3];
  }
  return f;
}

PowerFlowResult newton_power_flow(const NetworkCase& net, const PowerFlowInput& in, const PolarState& start,
                                  int max_iterations, double tolerance) {
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  if (in.p.size() != nb || in.q.size() != nb || static_cast<Eigen::Index>(in.type.size()) != nb) {
    throw Error(ErrorKind::DimensionMismatch, "power flow input sized for a different bus count");
  }
  std::vector<Eigen::Index> th_idx, v_idx;
  for (Eigen::Index n = 0; n < nb; ++n) {
    if (in.type[static_cast<std::size_t>(n)] != BusType::Slack) th_idx.push_back(n);
    if (in.type[static_cast<std::size_t>(n)] == BusType::PQ) v_idx.push_back(n);
  }
  const auto nth = static_cast<Eigen::Index>(th_idx.size());
  const auto nv = static_cast<Eigen::Index>(v_idx.size());
  const Eigen::Index dim = nth + nv;

  PowerFlowResult res;
  res.state = start;
  Eigen::VectorXd P, Q, F(dim);
  Eigen::MatrixXd J, Jr(dim, dim);
  for (int it = 0;; ++it) {
    injections(net, res.state, P, Q, &J);
    for (Eigen::Index k = 0; k < nth; ++k) F[k] = P[th_idx[static_cast<std::size_t>(k)]] - in.p[th_idx[static_cast<std::size_t>(k)]];
    for (Eigen::Index k = 0; k < nv; ++k) F[nth + k] = Q[v_idx[static_cast<std::size_t>(k)]] - in.q[v_idx[static_cast<std::size_t>(k)]];
    res.max_mismatch = dim > 0 ? F.lpNorm<Eigen::Infinity>() : 0.0;
    res.iterations = it;
    if (!std::isfinite(res.max_mismatch)) break;
    if (res.max_mismatch <= tolerance) {
      res.status = PowerFlowStatus::Converged;
      res.p_injection = P;
      res.q_injection = Q;
      return res;
    }
    if (it >= max_iterations) break;
    for (Eigen::Index r = 0; r < dim; ++r) {
      const Eigen::Index row = r < nth ? th_idx[static_cast<std::size_t>(r)] : nb + v_idx[static_cast<std::size_t>(r - nth)];
      for (Eigen::Index c = 0; c < dim; ++c) {
        const Eigen::Index col = c < nth ? nb + th_idx[static_cast<std::size_t>(c)] : v_idx[static_cast<std::size_t>(c - nth)];
        Jr(r, c) = J(row, col);
      }
    }
    const Eigen::VectorXd dx = Jr.partialPivLu().solve(-F);
    if (!dx.allFinite()) break;
    for (Eigen::Index k = 0; k < nth; ++k) res.state.theta[th_idx[static_cast<std::size_t>(k)]] += dx[k];
    for (Eigen::Index k = 0; k < nv; ++k) res.state.v[v_idx[static_cast<std::size_t>(k)]] += dx[nth + k];
  }
  res.status = PowerFlowStatus::Diverged;
  res.p_injection = P;
  res.q_injection = Q;
  return res;
}

// ---------------------------------------------------------------------------
// sequential linear programming
// ---------------------------------------------------------------------------

namespace {

struct Candidate {
  bool ok = false;
  PolarState st;
  Eigen::VectorXd p, u, s, nu, delta, q, qh;
  BranchFlows flows;
  Eigen::VectorXd loss;
  double cost = 0.0;   // LP units, immediate + alpha(nu)
  double alpha = 0.0;  // LP units
  double viol = 0.0;   // p.u., sum of constraint violations after restoration
  double mismatch = 0.0;
  double merit = 0.0;
  Eigen::VectorXd kcl_dual, water_dual;
};

struct LpPoint {
  Eigen::VectorXd p, u, s, delta, q, qh, dv, dth;
  double objective = 0.0;
  Eigen::VectorXd kcl_dual, water_dual;
  bool radius_active = false;
};

class AcSolver {
 public:
  AcSolver(const StageData& d, const Eigen::VectorXd& state, std::span<const BendersCut> cuts, bool terminal,
           const AcOptions& opt)
      : d_(d), net_(d.net()), state_(state), cuts_(terminal ? std::span<const BendersCut>{} : cuts),
        terminal_(terminal), opt_(opt) {
    e_ = net_.energy_scale();
    double top = 0.0;
    for (const auto& b : net_.buses) top = std::max(top, b.deficit_cost);
    for (Eigen::Index i = 0; i < d_.thermal_cost.size(); ++i) top = std::max(top, d_.thermal_cost[i]);
    penalty_ = 10.0 * top + 1000.0;
    seeded_.assign(cuts_.size(), 0);
    circle_.resize(2 * net_.branches.size());
    const auto nb = net_.buses.size();
    type_.assign(nb, BusType::PQ);
    for (const auto& g : net_.thermals)
      if (g.q_max > g.q_min) type_[static_cast<std::size_t>(g.bus)] = BusType::PV;
    for (const auto& h : net_.hydros)
      if (h.q_max > h.q_min) type_[static_cast<std::size_t>(h.bus)] = BusType::PV;
    ref_ = net_.reference_bus();
    type_[static_cast<std::size_t>(ref_)] = BusType::Slack;
    up_ = upstream_sets(net_);
  }

  bool run(const PolarState& start, AcStageSolution& out) {
    PolarState cur_st = start;
    Candidate cur;
    bool have = false;
    double r = opt_.initial_radius;
    Basis basis;
    int it = 0;
    for (; it < opt_.max_iterations; ++it) {
      LpPoint lp;
      if (!solve_lp(cur_st, r, basis, lp)) return false;
      Candidate cand = restore(cur_st, lp);
      if (!have) {
        if (cand.ok) {
          cur = cand;
          cur_st = cand.st;
          have = true;
        } else {
          r *= 0.25;
          if (r < opt_.min_radius) return false;
        }
        continue;
      }
      const double pred = cur.merit - lp.objective;
      if (pred <= opt_.objective_tolerance * (1.0 + std::abs(cur.merit))) {
        cur.kcl_dual = lp.kcl_dual;
        cur.water_dual = lp.water_dual;
        break;
      }
      const double ared = cand.ok ? cur.merit - cand.merit : -kInf;
      const double rho = ared / pred;
      if (cand.ok && rho > 0.1) {
        const double step = step_size(cur, cand);
        cur = cand;
        cur_st = cand.st;
        if (rho > 0.5 && lp.radius_active) r = std::min(2.0 * r, 1.0);
        else if (rho < 0.25) r *= 0.5;
        if (step < opt_.tolerance) break;
      } else {
        // a rejected step whose predicted gain is at roundoff level means the
        // current point is stationary for the linearization
        if (pred <= 1e-8 * (1.0 + std::abs(cur.merit))) {
          cur.kcl_dual = lp.kcl_dual;
          cur.water_dual = lp.water_dual;
          break;
        }
        r *= 0.25;
      }
      if (r < opt_.min_radius) break;
    }
    if (!have || cur.viol > opt_.tolerance || cur.mismatch > opt_.tolerance) return false;
    if (cur.kcl_dual.size() == 0) {
      // the loop ended on an accepted step: take prices from a final LP at the point
      LpPoint lp;
      if (solve_lp(cur.st, std::max(r, 1e-4), basis, lp)) {
        cur.kcl_dual = lp.kcl_dual;
        cur.water_dual = lp.water_dual;
      } else {
        cur.kcl_dual = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_.buses.size()));
        cur.water_dual = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_.hydros.size()));
      }
    }
    fill(cur, it, out);
    return true;
  }

 private:
  const StageData& d_;
  const NetworkCase& net_;
  Eigen::VectorXd state_;
  std::span<const BendersCut> cuts_;
  bool terminal_;
  AcOptions opt_;
  double e_ = 1.0;
  double penalty_ = 1.0;
  std::vector<char> seeded_;
  std::vector<std::vector<Eigen::Vector2d>> circle_;  // cut directions per branch end
  std::vector<std::pair<int, int>> found_;  // (branch end, direction) or (-1, Benders cut)
  std::vector<BusType> type_;
  int ref_ = 0;
  std::vector<UpstreamSets> up_;

  double alpha_at(const Eigen::VectorXd& nu) const {
    double a = 0.0;
    for (const auto& c : cuts_) a = std::max(a, c.value(nu));
    return a / e_;
  }

  bool solve_lp(const PolarState& st, double r, Basis& basis, LpPoint& out) {
    StageProblem pb = build_common(d_, state_, {}, terminal_);
    auto& lp = pb.lp;
    auto& v = pb.vars;
    const int nb = static_cast<int>(net_.buses.size());
    const int nl = static_cast<int>(net_.branches.size());
    const double rv = r / 4.0;

    for (int l = 0; l < nl; ++l) {
      lp.set_bounds(v.f_nm[static_cast<std::size_t>(l)], -kInf, kInf);
      lp.set_bounds(v.f_mn[static_cast<std::size_t>(l)], -kInf, kInf);
      v.fq_nm.push_back(lp.add_variable(-kInf, kInf, 0.0));
      v.fq_mn.push_back(lp.add_variable(-kInf, kInf, 0.0));
    }
    for (const auto& g : net_.thermals) v.q.push_back(lp.add_variable(g.q_min, g.q_max, 0.0));
    for (const auto& h : net_.hydros) v.qh.push_back(lp.add_variable(h.q_min, h.q_max, 0.0));
    std::vector<int> dv, dth, sf;
    for (int n = 0; n < nb; ++n) {
      dv.push_back(lp.add_variable(-rv, rv, 0.0));
      const bool is_ref = n == ref_;
      dth.push_back(lp.add_variable(is_ref ? 0.0 : -r, is_ref ? 0.0 : r, 0.0));
    }
    for (int k = 0; k < 2 * nl; ++k) sf.push_back(lp.add_variable(0.0, kInf, penalty_));

    for (int n = 0; n < nb; ++n) {
      const auto& bus = net_.buses[static_cast<std::size_t>(n)];
      const auto N = static_cast<std::size_t>(n);
      const double v0 = st.v[n];
      lp.set_bounds(v.loss[N], -kInf, kInf);
      lp.add_row({{v.loss[N], 1.0}, {dv[N], -2.0 * bus.shunt_g * v0}}, Sense::Equal, bus.shunt_g * v0 * v0);
      // reactive balance with an elastic pair
      std::vector<int> idx;
      std::vector<double> val;
      for (std::size_t i = 0; i < net_.thermals.size(); ++i)
        if (net_.thermals[i].bus == n) {
          idx.push_back(v.q[i]);
          val.push_back(1.0);
        }
      for (std::size_t j = 0; j < net_.hydros.size(); ++j)
        if (net_.hydros[j].bus == n) {
          idx.push_back(v.qh[j]);
          val.push_back(1.0);
        }
      for (int l = 0; l < nl; ++l) {
        const auto& br = net_.branches[static_cast<std::size_t>(l)];
        if (br.from == n) {
          idx.push_back(v.fq_nm[static_cast<std::size_t>(l)]);
          val.push_back(-1.0);
        }
        if (br.to == n) {
          idx.push_back(v.fq_mn[static_cast<std::size_t>(l)]);
          val.push_back(-1.0);
        }
      }
      idx.push_back(dv[N]);
      val.push_back(2.0 * bus.shunt_b * v0);
      idx.push_back(lp.add_variable(0.0, kInf, penalty_));
      val.push_back(1.0);
      idx.push_back(lp.add_variable(0.0, kInf, penalty_));
      val.push_back(-1.0);
      v.kcl_q.push_back(lp.add_row(idx, val, Sense::Equal, -bus.shunt_b * v0 * v0));
      // voltage magnitude limits, elastic
      lp.add_row({{dv[N], 1.0}, {lp.add_variable(0.0, kInf, penalty_), -1.0}}, Sense::LessEqual, bus.v_max - v0);
      lp.add_row({{dv[N], 1.0}, {lp.add_variable(0.0, kInf, penalty_), 1.0}}, Sense::GreaterEqual, bus.v_min - v0);
    }

    for (int l = 0; l < nl; ++l) {
      const auto& br = net_.branches[static_cast<std::size_t>(l)];
      const auto L = static_cast<std::size_t>(l);
      const BranchEval e = eval_branch(br, st.v[br.from], st.v[br.to], st.theta[br.from], st.theta[br.to]);
      const int cols[4] = {dv[static_cast<std::size_t>(br.from)], dv[static_cast<std::size_t>(br.to)],
                           dth[static_cast<std::size_t>(br.from)], dth[static_cast<std::size_t>(br.to)]};
      const int flow[4] = {v.f_nm[L], v.fq_nm[L], v.f_mn[L], v.fq_mn[L]};
      for (int k = 0; k < 4; ++k) {
        std::vector<int> idx{flow[k]};
        std::vector<double> val{1.0};
        for (int c = 0; c < 4; ++c) {
          idx.push_back(cols[c]);
          val.push_back(-e.jac(k, c));
        }
        lp.add_row(idx, val, Sense::Equal, e.value[k]);
      }
      for (int end = 0; end < 2; ++end) {
        const int pf = end == 0 ? v.f_nm[L] : v.f_mn[L];
        const int qf = end == 0 ? v.fq_nm[L] : v.fq_mn[L];
        const int slack = sf[2 * L + static_cast<std::size_t>(end)];
        for (int k = 0; k < 8; ++k) {
          const double a = k * std::numbers::pi / 4.0;
          lp.add_row({{pf, std::cos(a)}, {qf, std::sin(a)}, {slack, -1.0}}, Sense::LessEqual, br.f_max);
        }
      }
    }

    // Rows found by separation go last, in the order they were found, so the
    // previous basis lines up with this LP row for row.
    auto benders_row = [&](std::size_t c) {
      Cut cut;
      cut.arity = lp.num_variables();
      cut.index.push_back(v.alpha);
      cut.value.push_back(1.0);
      for (std::size_t j = 0; j < v.nu.size(); ++j) {
        cut.index.push_back(v.nu[j]);
        cut.value.push_back(-cuts_[c].slope[static_cast<Eigen::Index>(j)] / e_);
      }
      cut.sense = Sense::GreaterEqual;
      cut.rhs = cuts_[c].intercept / e_;
      cut.source = CutSource::Benders;
      return cut;
    };
    auto circle_row = [&](std::size_t k, const Eigen::Vector2d& dir) {
      const auto L = k / 2;
      const bool nm = k % 2 == 0;
      Cut cut;
      cut.arity = lp.num_variables();
      cut.index = {nm ? v.f_nm[L] : v.f_mn[L], nm ? v.fq_nm[L] : v.fq_mn[L], sf[k]};
      cut.value = {dir[0], dir[1], -1.0};
      cut.rhs = net_.branches[L].f_max;
      cut.source = CutSource::FlowLimit;
      return cut;
    };
    for (const auto& [k, item] : found_) {
      if (k < 0) lp.append_cut(benders_row(static_cast<std::size_t>(item)));
      else lp.append_cut(circle_row(static_cast<std::size_t>(k), circle_[static_cast<std::size_t>(k)][static_cast<std::size_t>(item)]));
    }

    std::vector<SeparationOracle> oracles;
    oracles.push_back([&](const Eigen::VectorXd& x) {
      std::vector<Cut> outc;
      for (int l = 0; l < nl; ++l) {
        const auto L = static_cast<std::size_t>(l);
        const double fmax = net_.branches[L].f_max;
        for (int end = 0; end < 2; ++end) {
          const int pf = end == 0 ? v.f_nm[L] : v.f_mn[L];
          const int qf = end == 0 ? v.fq_nm[L] : v.fq_mn[L];
          const int slack = sf[2 * L + static_cast<std::size_t>(end)];
          const double a = x[pf], b = x[qf];
          const double rr = std::hypot(a, b);
          if (rr - fmax - x[slack] <= 1e-7) continue;
          const std::size_t k = 2 * L + static_cast<std::size_t>(end);
          circle_[k].push_back(Eigen::Vector2d(a / rr, b / rr));
          found_.emplace_back(static_cast<int>(k), static_cast<int>(circle_[k].size()) - 1);
          outc.push_back(circle_row(k, circle_[k].back()));
        }
      }
      return outc;
    });
    if (!cuts_.empty()) {
      oracles.push_back([&](const Eigen::VectorXd& x) {
        std::vector<Cut> outc;
        Eigen::VectorXd nu(static_cast<Eigen::Index>(v.nu.size()));
        for (std::size_t j = 0; j < v.nu.size(); ++j) nu[static_cast<Eigen::Index>(j)] = x[v.nu[j]];
        for (std::size_t c = 0; c < cuts_.size(); ++c) {
          if (seeded_[c]) continue;
          const double val = cuts_[c].value(nu) / e_;
          if (val - x[v.alpha] <= 1e-10 * (1.0 + std::abs(val))) continue;
          seeded_[c] = 1;
          found_.emplace_back(-1, static_cast<int>(c));
          outc.push_back(benders_row(c));
        }
        return outc;
      });
    }

    SeparationResult sr = solve_with_separation(lp, oracles, basis.empty() ? nullptr : &basis, opt_.lp);
    if (!sr.solution.optimal()) {
      basis = Basis{};
      return false;
    }
    basis = sr.solution.basis;
    const Eigen::VectorXd& x = sr.solution.x;
    auto gather = [&](const std::vector<int>& cols) {
      Eigen::VectorXd g(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t k = 0; k < cols.size(); ++k) g[static_cast<Eigen::Index>(k)] = x[cols[k]];
      return g;
    };
    out.p = gather(v.p);
    out.u = gather(v.u);
    out.s = gather(v.s);
    out.delta = gather(v.delta);
    out.q = gather(v.q);
    out.qh = gather(v.qh);
    out.dv = gather(dv);
    out.dth = gather(dth);
    out.objective = sr.solution.objective;
    out.kcl_dual.resize(nb);
    for (int n = 0; n < nb; ++n) out.kcl_dual[n] = sr.solution.duals[v.kcl[static_cast<std::size_t>(n)]];
    out.water_dual.resize(static_cast<Eigen::Index>(v.water.size()));
    for (std::size_t j = 0; j < v.water.size(); ++j)
      out.water_dual[static_cast<Eigen::Index>(j)] = sr.solution.duals[v.water[j]] * e_;
    out.radius_active = false;
    for (int n = 0; n < nb; ++n) {
      if (std::abs(out.dth[n]) >= r * (1.0 - 1e-6) && n != ref_) out.radius_active = true;
      if (std::abs(out.dv[n]) >= rv * (1.0 - 1e-6)) out.radius_active = true;
    }
    return true;
  }

  // Newton restoration at the LP's dispatch, then reference-bus balancing and
  // reactive allocation. Violations left over are charged in the merit.
  Candidate restore(const PolarState& st0, const LpPoint& lp) {
    Candidate c;
    const auto nb = static_cast<Eigen::Index>(net_.buses.size());
    c.p = lp.p;
    c.u = lp.u;
    c.s = lp.s;
    c.delta = lp.delta;
    c.q = lp.q;
    c.qh = lp.qh;
    PolarState guess;
    guess.v = st0.v + lp.dv;
    guess.theta = st0.theta + lp.dth;
    for (Eigen::Index n = 0; n < nb; ++n) {
      const auto& bus = net_.buses[static_cast<std::size_t>(n)];
      if (type_[static_cast<std::size_t>(n)] != BusType::PQ) guess.v[n] = std::clamp(guess.v[n], bus.v_min, bus.v_max);
    }
    guess.theta[ref_] = 0.0;

    PowerFlowInput in;
    in.type = type_;
    in.p = -d_.load;
    in.q = Eigen::VectorXd::Zero(nb);
    for (std::size_t i = 0; i < net_.thermals.size(); ++i) {
      in.p[net_.thermals[i].bus] += c.p[static_cast<Eigen::Index>(i)];
      in.q[net_.thermals[i].bus] += c.q[static_cast<Eigen::Index>(i)];
    }
    for (std::size_t j = 0; j < net_.hydros.size(); ++j) {
      in.p[net_.hydros[j].bus] += net_.hydros[j].rho * c.u[static_cast<Eigen::Index>(j)];
      in.q[net_.hydros[j].bus] += c.qh[static_cast<Eigen::Index>(j)];
    }
    in.p += c.delta;

    PowerFlowResult pf = newton_power_flow(net_, in, guess);
    if (!pf.converged()) {
      PolarState flat = PolarState::flat(net_);
      for (Eigen::Index n = 0; n < nb; ++n)
        if (type_[static_cast<std::size_t>(n)] != BusType::PQ) flat.v[n] = guess.v[n];
      pf = newton_power_flow(net_, in, flat);
    }
    if (!pf.converged()) return c;
    c.st = pf.state;

    // reference bus picks up the power-flow slack
    double need = pf.p_injection[ref_] - in.p[ref_];
    need = absorb(need, c);
    c.mismatch = pf.max_mismatch;
    c.viol = std::abs(need);

    // reactive output at PV and slack buses
    for (Eigen::Index n = 0; n < nb; ++n) {
      if (type_[static_cast<std::size_t>(n)] == BusType::PQ) continue;
      c.viol += allocate_q(static_cast<int>(n), pf.q_injection[n], c);
    }
    for (Eigen::Index n = 0; n < nb; ++n) {
      const auto& bus = net_.buses[static_cast<std::size_t>(n)];
      c.viol += std::max({0.0, c.st.v[n] - bus.v_max, bus.v_min - c.st.v[n]});
    }
    c.flows = branch_flows(net_, c.st);
    for (std::size_t l = 0; l < net_.branches.size(); ++l) {
      const double fmax = net_.branches[l].f_max;
      const auto L = static_cast<Eigen::Index>(l);
      c.viol += std::max(0.0, std::hypot(c.flows.p_nm[L], c.flows.q_nm[L]) - fmax);
      c.viol += std::max(0.0, std::hypot(c.flows.p_mn[L], c.flows.q_mn[L]) - fmax);
    }
    c.loss.resize(nb);
    for (Eigen::Index n = 0; n < nb; ++n) c.loss[n] = net_.buses[static_cast<std::size_t>(n)].shunt_g * c.st.v[n] * c.st.v[n];

    // water balance with the adjusted outflows
    const auto nh = static_cast<Eigen::Index>(net_.hydros.size());
    c.nu.resize(nh);
    for (Eigen::Index j = 0; j < nh; ++j) {
      double vol = state_[j] + d_.inflow[j] - c.u[j] - c.s[j];
      for (int k : up_[static_cast<std::size_t>(j)].turbine) vol += c.u[k];
      for (int k : up_[static_cast<std::size_t>(j)].spill) vol += c.s[k];
      c.nu[j] = vol;
      c.viol += std::max({0.0, -vol, vol - net_.hydros[static_cast<std::size_t>(j)].v_max});
    }

    double cost = 0.0;
    for (Eigen::Index i = 0; i < c.p.size(); ++i) cost += d_.thermal_cost[i] * c.p[i];
    for (Eigen::Index n = 0; n < nb; ++n) cost += net_.buses[static_cast<std::size_t>(n)].deficit_cost * c.delta[n];
    c.alpha = terminal_ ? 0.0 : alpha_at(c.nu);
    c.cost = cost + c.alpha;
    c.merit = c.cost + penalty_ * c.viol;
    c.ok = true;
    return c;
  }

  bool free_swap(int j) const {
    const auto& h = net_.hydros[static_cast<std::size_t>(j)];
    return h.downstream_turbine == h.downstream_spill;
  }

  // Returns the part of `need` (p.u. extra generation at the reference bus)
  // that could not be placed.
  double absorb(double need, Candidate& c) const {
    std::vector<int> th;
    for (std::size_t i = 0; i < net_.thermals.size(); ++i)
      if (net_.thermals[i].bus == ref_) th.push_back(static_cast<int>(i));
    std::stable_sort(th.begin(), th.end(), [&](int a, int b) { return d_.thermal_cost[a] < d_.thermal_cost[b]; });
    std::vector<int> hy;
    for (std::size_t j = 0; j < net_.hydros.size(); ++j)
      if (net_.hydros[j].bus == ref_ && net_.hydros[j].rho > 0.0) hy.push_back(static_cast<int>(j));
    const double eps = 1e-13;
    if (need > 0.0) {
      for (int i : th) {
        const double room = net_.thermals[static_cast<std::size_t>(i)].p_max - c.p[i];
        const double dp = std::clamp(need, 0.0, std::max(room, 0.0));
        c.p[i] += dp;
        need -= dp;
      }
      for (int j : hy) {
        if (need <= eps) break;
        const auto& h = net_.hydros[static_cast<std::size_t>(j)];
        double du = std::min(need / h.rho, h.u_max - c.u[j]);
        if (free_swap(j)) {
          const double from_spill = std::clamp(du, 0.0, c.s[j]);
          c.s[j] -= from_spill;
          c.u[j] += from_spill;
          need -= from_spill * h.rho;
          du = std::min(need / h.rho, h.u_max - c.u[j]);
        }
        if (!h.downstream_turbine && !h.downstream_spill && du > 0.0) {
          double vol = state_[j] + d_.inflow[j] - c.u[j] - c.s[j];
          for (int k : up_[static_cast<std::size_t>(j)].turbine) vol += c.u[k];
          for (int k : up_[static_cast<std::size_t>(j)].spill) vol += c.s[k];
          const double take = std::clamp(du, 0.0, std::max(vol, 0.0));
          c.u[j] += take;
          need -= take * h.rho;
        }
      }
      if (need > eps) {
        c.delta[ref_] += need;
        need = 0.0;
      }
    } else if (need < 0.0) {
      double cut = -need;
      const double dd = std::min(cut, c.delta[ref_]);
      c.delta[ref_] -= dd;
      cut -= dd;
      for (auto it = th.rbegin(); it != th.rend() && cut > eps; ++it) {
        const double dp = std::min(cut, c.p[*it]);
        c.p[*it] -= dp;
        cut -= dp;
      }
      for (int j : hy) {
        if (cut <= eps) break;
        if (!free_swap(j)) continue;
        const auto& h = net_.hydros[static_cast<std::size_t>(j)];
        const double du = std::min(cut / h.rho, c.u[j]);
        c.u[j] -= du;
        c.s[j] += du;
        cut -= du * h.rho;
      }
      need = cut > eps ? -cut : 0.0;
    }
    return need;
  }

  // Spread the required reactive injection over the bus's units; returns the
  // amount that does not fit.
  double allocate_q(int n, double required, Candidate& c) const {
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < net_.thermals.size(); ++i)
      if (net_.thermals[i].bus == n) {
        lo += net_.thermals[i].q_min;
        hi += net_.thermals[i].q_max;
      }
    for (std::size_t j = 0; j < net_.hydros.size(); ++j)
      if (net_.hydros[j].bus == n) {
        lo += net_.hydros[j].q_min;
        hi += net_.hydros[j].q_max;
      }
    const double lam = hi > lo ? std::clamp((required - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    for (std::size_t i = 0; i < net_.thermals.size(); ++i)
      if (net_.thermals[i].bus == n)
        c.q[static_cast<Eigen::Index>(i)] = net_.thermals[i].q_min + lam * (net_.thermals[i].q_max - net_.thermals[i].q_min);
    for (std::size_t j = 0; j < net_.hydros.size(); ++j)
      if (net_.hydros[j].bus == n)
        c.qh[static_cast<Eigen::Index>(j)] = net_.hydros[j].q_min + lam * (net_.hydros[j].q_max - net_.hydros[j].q_min);
    return std::max({0.0, required - hi, lo - required});
  }

  static double step_size(const Candidate& a, const Candidate& b) {
    double s = 0.0;
    s = std::max(s, (a.p - b.p).lpNorm<Eigen::Infinity>());
    if (a.u.size()) s = std::max(s, (a.u - b.u).lpNorm<Eigen::Infinity>());
    if (a.s.size()) s = std::max(s, (a.s - b.s).lpNorm<Eigen::Infinity>());
    s = std::max(s, (a.delta - b.delta).lpNorm<Eigen::Infinity>());
    s = std::max(s, (a.st.v - b.st.v).lpNorm<Eigen::Infinity>());
    s = std::max(s, (a.st.theta - b.st.theta).lpNorm<Eigen::Infinity>());
    return s;
  }

  void fill(const Candidate& c, int iterations, AcStageSolution& out) const {
    StageSolution& s = out.dispatch;
    s.ok = true;
    s.volume = c.nu;
    s.turbined = c.u;
    s.spilled = c.s;
    s.thermal = c.p;
    s.deficit = c.delta;
    s.spot_price = c.kcl_dual;
    s.water_dual = c.water_dual;
    s.flow_nm = c.flows.p_nm;
    s.flow_mn = c.flows.p_mn;
    s.future_cost = c.alpha * e_;
    s.immediate_cost = (c.cost - c.alpha) * e_;
    s.objective = c.cost * e_;
    out.state = c.st;
    out.q_thermal = c.q;
    out.q_hydro = c.qh;
    out.fq_nm = c.flows.q_nm;
    out.fq_mn = c.flows.q_mn;
    out.loss = c.loss;
    out.max_residual = c.mismatch;
    out.iterations = iterations;
  }
};

PolarState soc_warm_start(const StageData& d, const Eigen::VectorXd& state, std::span<const BendersCut> cuts,
                          bool terminal, const LpTolerances& tol) {
  const NetworkCase& net = d.net();
  StageProblem pb = build(FormulationKind::SOC, d, state, cuts, terminal);
  StageSolution s = solve_stage(pb, tol);
  PolarState st = PolarState::flat(net);
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  for (Eigen::Index n = 0; n < nb; ++n) st.v[n] = std::sqrt(std::max(s.x[pb.vars.w[static_cast<std::size_t>(n)]], 0.0));
  // angles along a breadth-first spanning tree from the reference bus
  std::vector<char> seen(static_cast<std::size_t>(nb), 0);
  std::queue<int> open;
  const int ref = net.reference_bus();
  open.push(ref);
  seen[static_cast<std::size_t>(ref)] = 1;
  while (!open.empty()) {
    const int n = open.front();
    open.pop();
    for (std::size_t l = 0; l < net.branches.size(); ++l) {
      const auto& br = net.branches[l];
      if (br.from != n && br.to != n) continue;
      const int m = br.from == n ? br.to : br.from;
      if (seen[static_cast<std::size_t>(m)]) continue;
      // theta_from - theta_to = atan2(wIm, wRe)
      const double diff = std::atan2(s.x[pb.vars.w_im[l]], s.x[pb.vars.w_re[l]]);
      st.theta[m] = br.from == n ? st.theta[n] - diff : st.theta[n] + diff;
      seen[static_cast<std::size_t>(m)] = 1;
      open.push(m);
    }
  }
  return st;
}

}  // namespace

AcStageSolution solve_stage_ac(const StageData& data, const Eigen::VectorXd& state, std::span<const BendersCut> cuts,
                               bool terminal, const AcOptions& options) {
  AcStageSolution out;
  {
    AcSolver solver(data, state, cuts, terminal, options);
    if (solver.run(PolarState::flat(data.net()), out)) return out;
  }
  PolarState warm;
  try {
    warm = soc_warm_start(data, state, cuts, terminal, options.lp);
  } catch (const Error&) {
    warm = PolarState::flat(data.net());
  }
  AcSolver solver(data, state, cuts, terminal, options);
  if (solver.run(warm, out)) {
    out.warm_started = true;
    return out;
  }
  throw Error(ErrorKind::NoLocalSolution, "AC stage " + std::to_string(data.stage) + " outcome " +
                                              std::to_string(data.outcome) + " failed from flat and SOC starts");
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

double AcAudit::worst() const {
  return std::max({kcl_p, kcl_q, flow_definition, flow_limit, voltage_bound, reactive_bound, water_balance, bounds});
}

AcAudit audit_ac_solution(const StageData& d, const Eigen::VectorXd& state, const AcStageSolution& sol) {
  using cd = std::complex<double>;
  const NetworkCase& net = d.net();
  const auto& s = sol.dispatch;
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  AcAudit a;
  std::vector<cd> V(static_cast<std::size_t>(nb));
  for (Eigen::Index n = 0; n < nb; ++n) V[static_cast<std::size_t>(n)] = std::polar(sol.state.v[n], sol.state.theta[n]);
  std::vector<cd> out(static_cast<std::size_t>(nb), cd(0.0, 0.0));
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const auto& br = net.branches[l];
    const cd y = 1.0 / cd(br.r, br.x);
    const cd ysh = cd(br.g_c, br.b_c) / 2.0;
    const cd vn = V[static_cast<std::size_t>(br.from)], vm = V[static_cast<std::size_t>(br.to)];
    const cd s_nm = vn * std::conj(y * (vn - vm) + ysh * vn);
    const cd s_mn = vm * std::conj(y * (vm - vn) + ysh * vm);
    out[static_cast<std::size_t>(br.from)] += s_nm;
    out[static_cast<std::size_t>(br.to)] += s_mn;
    const auto L = static_cast<Eigen::Index>(l);
    a.flow_definition = std::max({a.flow_definition, std::abs(s_nm.real() - s.flow_nm[L]), std::abs(s_nm.imag() - sol.fq_nm[L]),
                                  std::abs(s_mn.real() - s.flow_mn[L]), std::abs(s_mn.imag() - sol.fq_mn[L])});
    a.flow_limit = std::max({a.flow_limit, std::abs(s_nm) - br.f_max, std::abs(s_mn) - br.f_max});
  }
  for (Eigen::Index n = 0; n < nb; ++n) {
    const auto& bus = net.buses[static_cast<std::size_t>(n)];
    double p = s.deficit[n] - d.load[n], q = 0.0;
    for (std::size_t i = 0; i < net.thermals.size(); ++i)
      if (net.thermals[i].bus == n) {
        p += s.thermal[static_cast<Eigen::Index>(i)];
        q += sol.q_thermal[static_cast<Eigen::Index>(i)];
      }
    for (std::size_t j = 0; j < net.hydros.size(); ++j)
      if (net.hydros[j].bus == n) {
        p += net.hydros[j].rho * s.turbined[static_cast<Eigen::Index>(j)];
        q += sol.q_hydro[static_cast<Eigen::Index>(j)];
      }
    const double v2 = sol.state.v[n] * sol.state.v[n];
    p -= out[static_cast<std::size_t>(n)].real() + bus.shunt_g * v2;
    q -= out[static_cast<std::size_t>(n)].imag() - bus.shunt_b * v2;
    a.kcl_p = std::max(a.kcl_p, std::abs(p));
    a.kcl_q = std::max(a.kcl_q, std::abs(q));
    a.voltage_bound = std::max({a.voltage_bound, sol.state.v[n] - bus.v_max, bus.v_min - sol.state.v[n]});
    a.bounds = std::max(a.bounds, -s.deficit[n]);
  }
  for (std::size_t i = 0; i < net.thermals.size(); ++i) {
    const auto& g = net.thermals[i];
    const auto I = static_cast<Eigen::Index>(i);
    a.reactive_bound = std::max({a.reactive_bound, sol.q_thermal[I] - g.q_max, g.q_min - sol.q_thermal[I]});
    a.bounds = std::max({a.bounds, s.thermal[I] - g.p_max, -s.thermal[I]});
  }
  const auto up = upstream_sets(net);
  for (std::size_t j = 0; j < net.hydros.size(); ++j) {
    const auto& h = net.hydros[j];
    const auto J = static_cast<Eigen::Index>(j);
    a.reactive_bound = std::max({a.reactive_bound, sol.q_hydro[J] - h.q_max, h.q_min - sol.q_hydro[J]});
    double bal = s.volume[J] + s.turbined[J] + s.spilled[J] - state[J] - d.inflow[J];
    for (int k : up[j].turbine) bal -= s.turbined[k];
    for (int k : up[j].spill) bal -= s.spilled[k];
    a.water_balance = std::max(a.water_balance, std::abs(bal));
    a.bounds = std::max({a.bounds, s.turbined[J] - h.u_max, -s.turbined[J], -s.spilled[J], s.volume[J] - h.v_max,
                         -s.volume[J]});
  }
  a.flow_limit = std::max(a.flow_limit, 0.0);
  a.voltage_bound = std::max(a.voltage_bound, 0.0);
  a.reactive_bound = std::max(a.reactive_bound, 0.0);
  a.bounds = std::max(a.bounds, 0.0);
  return a;
}

}  // namespace hydro
