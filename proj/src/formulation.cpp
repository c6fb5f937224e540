#include "hydrosddp/formulation.hpp"

#include "hydrosddp/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace hydro {

const char* to_string(FormulationKind kind) {
  switch (kind) {
    case FormulationKind::NFA: return "NFA";
    case FormulationKind::DC: return "DC";
    case FormulationKind::DCLL: return "DCLL";
    case FormulationKind::SOC: return "SOC";
    case FormulationKind::SDP: return "SDP";
    case FormulationKind::AC: return "AC";
  }
  return "?";
}

FormulationKind parse_kind(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (t == "NFA") return FormulationKind::NFA;
  if (t == "DC") return FormulationKind::DC;
  if (t == "DCLL") return FormulationKind::DCLL;
  if (t == "SOC") return FormulationKind::SOC;
  if (t == "SDP") return FormulationKind::SDP;
  if (t == "AC") return FormulationKind::AC;
  throw Error(ErrorKind::UnsupportedKind, "unknown formulation '" + text + "'");
}

namespace {

std::string tag(const char* what, int id) { return std::string(what) + std::to_string(id); }

Cut make_cut(int arity, std::vector<int> idx, std::vector<double> val, Sense sense, double rhs, CutSource src) {
  Cut c;
  c.arity = arity;
  c.index = std::move(idx);
  c.value = std::move(val);
  c.sense = sense;
  c.rhs = rhs;
  c.source = src;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// common block
// ---------------------------------------------------------------------------

StageProblem build_common(const StageData& data, const Eigen::VectorXd& state, std::span<const BendersCut> cuts,
                          bool terminal) {
  const NetworkCase& net = data.net();
  const int nb = static_cast<int>(net.buses.size());
  const int nl = static_cast<int>(net.branches.size());
  const int ng = static_cast<int>(net.thermals.size());
  const int nh = static_cast<int>(net.hydros.size());
  if (state.size() != nh) throw Error(ErrorKind::DimensionMismatch, "state size does not match plant count");

  StageProblem pb;
  pb.network = &net;
  pb.terminal = terminal;
  pb.obj_scale = net.energy_scale();
  auto& lp = pb.lp;
  auto& v = pb.vars;

  for (int i = 0; i < ng; ++i) {
    const auto& g = net.thermals[static_cast<std::size_t>(i)];
    v.p.push_back(lp.add_variable(0.0, g.p_max, data.thermal_cost[i], tag("p", g.id)));
  }
  for (int j = 0; j < nh; ++j) {
    const auto& h = net.hydros[static_cast<std::size_t>(j)];
    v.u.push_back(lp.add_variable(0.0, h.u_max, 0.0, tag("u", h.id)));
    v.s.push_back(lp.add_variable(0.0, kInf, 0.0, tag("s", h.id)));
    v.nu.push_back(lp.add_variable(0.0, h.v_max, 0.0, tag("nu", h.id)));
  }
  for (int l = 0; l < nl; ++l) {
    const auto& br = net.branches[static_cast<std::size_t>(l)];
    v.f_nm.push_back(lp.add_variable(-br.f_max, br.f_max, 0.0, tag("fnm", l)));
    v.f_mn.push_back(lp.add_variable(-br.f_max, br.f_max, 0.0, tag("fmn", l)));
  }
  for (int n = 0; n < nb; ++n) {
    const auto& b = net.buses[static_cast<std::size_t>(n)];
    v.delta.push_back(lp.add_variable(0.0, kInf, b.deficit_cost, tag("delta", b.id)));
    v.loss.push_back(lp.add_variable(0.0, 0.0, 0.0, tag("loss", b.id)));
  }
  v.alpha = lp.add_variable(0.0, terminal ? 0.0 : kInf, 1.0, "alpha");

  // active power balance
  for (int n = 0; n < nb; ++n) {
    std::vector<int> idx;
    std::vector<double> val;
    for (int i = 0; i < ng; ++i) {
      if (net.thermals[static_cast<std::size_t>(i)].bus == n) {
        idx.push_back(v.p[static_cast<std::size_t>(i)]);
        val.push_back(1.0);
      }
    }
    for (int j = 0; j < nh; ++j) {
      const auto& h = net.hydros[static_cast<std::size_t>(j)];
      if (h.bus == n && h.rho != 0.0) {
        idx.push_back(v.u[static_cast<std::size_t>(j)]);
        val.push_back(h.rho);
      }
    }
    for (int l = 0; l < nl; ++l) {
      const auto& br = net.branches[static_cast<std::size_t>(l)];
      if (br.from == n) {
        idx.push_back(v.f_nm[static_cast<std::size_t>(l)]);
        val.push_back(-1.0);
      }
      if (br.to == n) {
        idx.push_back(v.f_mn[static_cast<std::size_t>(l)]);
        val.push_back(-1.0);
      }
    }
    idx.push_back(v.loss[static_cast<std::size_t>(n)]);
    val.push_back(-1.0);
    idx.push_back(v.delta[static_cast<std::size_t>(n)]);
    val.push_back(1.0);
    v.kcl.push_back(lp.add_row(idx, val, Sense::Equal, data.load[n], tag("kcl", net.buses[static_cast<std::size_t>(n)].id)));
  }

  // water balance: nu + u + s - upstream outflows = nu_prev + inflow
  const auto up = upstream_sets(net);
  for (int j = 0; j < nh; ++j) {
    std::vector<int> idx{v.nu[static_cast<std::size_t>(j)], v.u[static_cast<std::size_t>(j)], v.s[static_cast<std::size_t>(j)]};
    std::vector<double> val{1.0, 1.0, 1.0};
    for (int k : up[static_cast<std::size_t>(j)].turbine) {
      idx.push_back(v.u[static_cast<std::size_t>(k)]);
      val.push_back(-1.0);
    }
    for (int k : up[static_cast<std::size_t>(j)].spill) {
      idx.push_back(v.s[static_cast<std::size_t>(k)]);
      val.push_back(-1.0);
    }
    v.water.push_back(lp.add_row(idx, val, Sense::Equal, state[j] + data.inflow[j],
                                 tag("water", net.hydros[static_cast<std::size_t>(j)].id)));
  }

  // cost-to-go epigraph, in LP objective units
  if (!terminal) {
    for (const auto& c : cuts) {
      std::vector<int> idx{v.alpha};
      std::vector<double> val{1.0};
      for (int j = 0; j < nh; ++j) {
        if (c.slope[j] == 0.0) continue;
        idx.push_back(v.nu[static_cast<std::size_t>(j)]);
        val.push_back(-c.slope[j] / pb.obj_scale);
      }
      lp.add_row(idx, val, Sense::GreaterEqual, c.intercept / pb.obj_scale, "benders");
    }
  }
  return pb;
}

// ---------------------------------------------------------------------------
// NFA / DC / DCLL
// ---------------------------------------------------------------------------

void attach_nfa(StageProblem& pb) {
  pb.kind = FormulationKind::NFA;
  auto& v = pb.vars;
  for (std::size_t l = 0; l < v.f_nm.size(); ++l) {
    pb.lp.add_row({{v.f_nm[l], 1.0}, {v.f_mn[l], 1.0}}, Sense::Equal, 0.0, "antisym");
  }
}

void attach_dc(StageProblem& pb) {
  pb.kind = FormulationKind::DC;
  const NetworkCase& net = *pb.network;
  auto& v = pb.vars;
  auto& lp = pb.lp;
  const int ref = net.reference_bus();
  for (std::size_t n = 0; n < net.buses.size(); ++n) {
    const bool is_ref = static_cast<int>(n) == ref;
    v.theta.push_back(lp.add_variable(is_ref ? 0.0 : -kInf, is_ref ? 0.0 : kInf, 0.0, tag("theta", net.buses[n].id)));
  }
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const auto& br = net.branches[l];
    const double bx = 1.0 / br.x;
    lp.add_row({{v.f_nm[l], 1.0}, {v.theta[static_cast<std::size_t>(br.from)], -bx}, {v.theta[static_cast<std::size_t>(br.to)], bx}},
               Sense::Equal, 0.0, "kvl");
    lp.add_row({{v.f_nm[l], 1.0}, {v.f_mn[l], 1.0}}, Sense::Equal, 0.0, "antisym");
  }
}

void attach_dcll(StageProblem& pb, int grid_points) {
  const NetworkCase& net = *pb.network;
  auto& v = pb.vars;
  auto& lp = pb.lp;
  // attach_dc put an antisymmetry row right after each kvl row; turn it into
  // the loss inequality f_nm + f_mn >= 0 and let tangents tighten it.
  std::vector<int> anti;
  for (int i = 0; i < lp.num_rows(); ++i)
    if (lp.row(i).name == "antisym") anti.push_back(i);
  if (anti.size() != net.branches.size()) throw Error(ErrorKind::InvalidData, "attach_dcll requires attach_dc first");
  LinearProgram rebuilt;
  for (int j = 0; j < lp.num_variables(); ++j) rebuilt.add_variable(lp.lower(j), lp.upper(j), lp.cost(j), lp.variable_name(j));
  for (int i = 0; i < lp.num_rows(); ++i) {
    const Row& r = lp.row(i);
    const bool is_anti = std::find(anti.begin(), anti.end(), i) != anti.end();
    rebuilt.add_row(r.index, r.value, is_anti ? Sense::GreaterEqual : r.sense, r.rhs, is_anti ? "loss0" : r.name);
  }
  lp = std::move(rebuilt);
  pb.kind = FormulationKind::DCLL;

  const int k = std::max(grid_points, 2);
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const auto& br = net.branches[l];
    const double r = br.loss_factor();
    for (int g = 0; g < k; ++g) {
      const double f0 = -br.f_max + 2.0 * br.f_max * g / (k - 1);
      // f_nm + f_mn >= r (2 f0 f_nm - f0^2)
      lp.add_row({{v.f_nm[l], 1.0 - 2.0 * r * f0}, {v.f_mn[l], 1.0}}, Sense::GreaterEqual, -r * f0 * f0, "dcll");
    }
  }
  const NetworkCase* netp = pb.network;
  StageVariables vars = v;
  pb.oracles.push_back([vars, netp](const Eigen::VectorXd& x) {
    return separate_dcll(vars, *netp, x, static_cast<int>(x.size()));
  });
}

std::vector<Cut> separate_dcll(const StageVariables& v, const NetworkCase& net, const Eigen::VectorXd& x, int arity,
                               double tol) {
  std::vector<Cut> out;
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const double r = net.branches[l].loss_factor();
    const double f0 = x[v.f_nm[l]];
    const double gap = r * f0 * f0 - (x[v.f_nm[l]] + x[v.f_mn[l]]);
    if (gap <= tol) continue;
    out.push_back(make_cut(arity, {v.f_nm[l], v.f_mn[l]}, {1.0 - 2.0 * r * f0, 1.0}, Sense::GreaterEqual,
                           -r * f0 * f0, CutSource::DcllTangent));
  }
  return out;
}

// ---------------------------------------------------------------------------
// W-space (SOC / SDP)
// ---------------------------------------------------------------------------

void attach_wspace(StageProblem& pb, FormulationKind kind) {
  if (kind != FormulationKind::SOC && kind != FormulationKind::SDP) {
    throw Error(ErrorKind::UnsupportedKind, std::string("attach_wspace with ") + to_string(kind));
  }
  pb.kind = kind;
  const NetworkCase& net = *pb.network;
  auto& v = pb.vars;
  auto& lp = pb.lp;
  const int nb = static_cast<int>(net.buses.size());
  const int nl = static_cast<int>(net.branches.size());

  for (int n = 0; n < nb; ++n) {
    const auto& b = net.buses[static_cast<std::size_t>(n)];
    v.w.push_back(lp.add_variable(b.v_min * b.v_min, b.v_max * b.v_max, 0.0, tag("w", b.id)));
  }
  for (int l = 0; l < nl; ++l) {
    const auto& br = net.branches[static_cast<std::size_t>(l)];
    const double lim = net.buses[static_cast<std::size_t>(br.from)].v_max * net.buses[static_cast<std::size_t>(br.to)].v_max;
    v.w_re.push_back(lp.add_variable(-lim, lim, 0.0, tag("wre", l)));
    v.w_im.push_back(lp.add_variable(-lim, lim, 0.0, tag("wim", l)));
    v.fq_nm.push_back(lp.add_variable(-br.f_max, br.f_max, 0.0, tag("fqnm", l)));
    v.fq_mn.push_back(lp.add_variable(-br.f_max, br.f_max, 0.0, tag("fqmn", l)));
  }
  for (const auto& g : net.thermals) v.q.push_back(lp.add_variable(g.q_min, g.q_max, 0.0, tag("q", g.id)));
  for (const auto& h : net.hydros) v.qh.push_back(lp.add_variable(h.q_min, h.q_max, 0.0, tag("qh", h.id)));

  // losses at the bus shunt
  for (int n = 0; n < nb; ++n) {
    const auto& b = net.buses[static_cast<std::size_t>(n)];
    lp.set_bounds(v.loss[static_cast<std::size_t>(n)], -kInf, kInf);
    lp.add_row({{v.loss[static_cast<std::size_t>(n)], 1.0}, {v.w[static_cast<std::size_t>(n)], -b.shunt_g}}, Sense::Equal, 0.0,
               "shunt");
  }

  // reactive balance
  for (int n = 0; n < nb; ++n) {
    const auto& b = net.buses[static_cast<std::size_t>(n)];
    std::vector<int> idx;
    std::vector<double> val;
    for (std::size_t i = 0; i < net.thermals.size(); ++i) {
      if (net.thermals[i].bus == n) {
        idx.push_back(v.q[i]);
        val.push_back(1.0);
      }
    }
    for (std::size_t j = 0; j < net.hydros.size(); ++j) {
      if (net.hydros[j].bus == n) {
        idx.push_back(v.qh[j]);
        val.push_back(1.0);
      }
    }
    for (int l = 0; l < nl; ++l) {
      const auto& br = net.branches[static_cast<std::size_t>(l)];
      if (br.from == n) {
        idx.push_back(v.fq_nm[static_cast<std::size_t>(l)]);
        val.push_back(-1.0);
      }
      if (br.to == n) {
        idx.push_back(v.fq_mn[static_cast<std::size_t>(l)]);
        val.push_back(-1.0);
      }
    }
    idx.push_back(v.w[static_cast<std::size_t>(n)]);
    val.push_back(b.shunt_b);
    v.kcl_q.push_back(lp.add_row(idx, val, Sense::Equal, 0.0, tag("kclq", b.id)));
  }

  // branch flow definitions
  for (int l = 0; l < nl; ++l) {
    const auto& br = net.branches[static_cast<std::size_t>(l)];
    const auto L = static_cast<std::size_t>(l);
    const int wn = v.w[static_cast<std::size_t>(br.from)];
    const int wm = v.w[static_cast<std::size_t>(br.to)];
    const double g = br.g, b = br.b, gs = br.g_c / 2.0, bs = br.b_c / 2.0;
    lp.add_row({{v.f_nm[L], 1.0}, {wn, -(g + gs)}, {v.w_re[L], g}, {v.w_im[L], b}}, Sense::Equal, 0.0, "pfr");
    lp.add_row({{v.fq_nm[L], 1.0}, {wn, b + bs}, {v.w_re[L], -b}, {v.w_im[L], g}}, Sense::Equal, 0.0, "qfr");
    lp.add_row({{v.f_mn[L], 1.0}, {wm, -(g + gs)}, {v.w_re[L], g}, {v.w_im[L], -b}}, Sense::Equal, 0.0, "pto");
    lp.add_row({{v.fq_mn[L], 1.0}, {wm, b + bs}, {v.w_re[L], -b}, {v.w_im[L], -g}}, Sense::Equal, 0.0, "qto");
    // octagon: diagonal facets (the axis facets are the column bounds)
    const double c = std::numbers::sqrt2 / 2.0;
    for (auto [pf, qf] : {std::pair{v.f_nm[L], v.fq_nm[L]}, std::pair{v.f_mn[L], v.fq_mn[L]}}) {
      for (double sp : {1.0, -1.0}) {
        for (double sq : {1.0, -1.0}) lp.add_row({{pf, sp * c}, {qf, sq * c}}, Sense::LessEqual, br.f_max, "octagon");
      }
    }
  }

  // entries of W for the PSD oracle
  std::vector<std::vector<int>> have(static_cast<std::size_t>(nb), std::vector<int>(static_cast<std::size_t>(nb), -1));
  for (int l = 0; l < nl; ++l) {
    const auto& br = net.branches[static_cast<std::size_t>(l)];
    WEntry e;
    e.i = std::min(br.from, br.to);
    e.j = std::max(br.from, br.to);
    e.re = v.w_re[static_cast<std::size_t>(l)];
    e.im = v.w_im[static_cast<std::size_t>(l)];
    e.im_sign = br.from < br.to ? 1.0 : -1.0;
    have[static_cast<std::size_t>(e.i)][static_cast<std::size_t>(e.j)] = static_cast<int>(v.w_pairs.size());
    v.w_pairs.push_back(e);
  }
  if (kind == FormulationKind::SDP) {
    for (int i = 0; i < nb; ++i) {
      for (int j = i + 1; j < nb; ++j) {
        if (have[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] >= 0) continue;
        const double lim = net.buses[static_cast<std::size_t>(i)].v_max * net.buses[static_cast<std::size_t>(j)].v_max;
        WEntry e;
        e.i = i;
        e.j = j;
        e.re = lp.add_variable(-lim, lim, 0.0, "wre_aux");
        e.im = lp.add_variable(-lim, lim, 0.0, "wim_aux");
        v.w_pairs.push_back(e);
      }
    }
  }

  const NetworkCase* netp = pb.network;
  StageVariables vars = v;
  pb.oracles.push_back([vars, netp](const Eigen::VectorXd& x) {
    return separate_circle(vars, *netp, x, static_cast<int>(x.size()));
  });
  pb.oracles.push_back([vars, netp](const Eigen::VectorXd& x) {
    return separate_soc(vars, *netp, x, static_cast<int>(x.size()));
  });
  if (kind == FormulationKind::SDP) {
    pb.oracles.push_back([vars, nb](const Eigen::VectorXd& x) {
      return separate_psd(vars, nb, x, static_cast<int>(x.size()));
    });
  }
}

std::vector<Cut> separate_circle(const StageVariables& v, const NetworkCase& net, const Eigen::VectorXd& x, int arity,
                                 double tol) {
  std::vector<Cut> out;
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const double fmax = net.branches[l].f_max;
    for (auto [pf, qf] : {std::pair{v.f_nm[l], v.fq_nm[l]}, std::pair{v.f_mn[l], v.fq_mn[l]}}) {
      const double a = x[pf], b = x[qf];
      const double r = std::hypot(a, b);
      if (r - fmax <= tol) continue;
      out.push_back(make_cut(arity, {pf, qf}, {a / r, b / r}, Sense::LessEqual, fmax, CutSource::SocSeparation));
    }
  }
  return out;
}

std::vector<Cut> separate_soc(const StageVariables& v, const NetworkCase& net, const Eigen::VectorXd& x, int arity,
                              double tol) {
  std::vector<Cut> out;
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const auto& br = net.branches[l];
    const int wn = v.w[static_cast<std::size_t>(br.from)];
    const int wm = v.w[static_cast<std::size_t>(br.to)];
    const Eigen::Vector3d z(2.0 * x[v.w_re[l]], 2.0 * x[v.w_im[l]], x[wn] - x[wm]);
    const double norm = z.norm();
    if (norm - (x[wn] + x[wm]) <= tol || norm == 0.0) continue;
    const Eigen::Vector3d a = z / norm;
    // a . z(w) - w_nn - w_mm <= 0, valid because a . z <= ||z||
    out.push_back(make_cut(arity, {v.w_re[l], v.w_im[l], wn, wm}, {2.0 * a[0], 2.0 * a[1], a[2] - 1.0, -a[2] - 1.0},
                           Sense::LessEqual, 0.0, CutSource::SocSeparation));
  }
  return out;
}

Eigen::MatrixXcd assemble_w(const StageVariables& v, int nb, const Eigen::VectorXd& x) {
  Eigen::MatrixXcd w = Eigen::MatrixXcd::Zero(nb, nb);
  for (int n = 0; n < nb; ++n) w(n, n) = x[v.w[static_cast<std::size_t>(n)]];
  for (const auto& e : v.w_pairs) {
    const std::complex<double> z(x[e.re], e.im_sign * x[e.im]);
    w(e.i, e.j) = z;
    w(e.j, e.i) = std::conj(z);
  }
  return w;
}

Eigen::MatrixXd real_embedding(const Eigen::MatrixXcd& w) {
  const Eigen::Index n = w.rows();
  Eigen::MatrixXd m(2 * n, 2 * n);
  m.topLeftCorner(n, n) = w.real();
  m.topRightCorner(n, n) = -w.imag();
  m.bottomLeftCorner(n, n) = w.imag();
  m.bottomRightCorner(n, n) = w.real();
  return m;
}

std::vector<Cut> separate_psd(const StageVariables& v, int nb, const Eigen::VectorXd& x, int arity, double tol) {
  std::vector<Cut> out;
  const Eigen::MatrixXd m = real_embedding(assemble_w(v, nb, x));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "eigendecomposition of W did not converge");
  // eigenvalues come in pairs for the embedding; (a, b) and (-b, a) give the same cut
  for (Eigen::Index k = 0; k < m.rows(); k += 2) {
    if (es.eigenvalues()[k] >= -tol) break;
    const Eigen::VectorXd z = es.eigenvectors().col(k);
    std::vector<int> idx;
    std::vector<double> val;
    for (int n = 0; n < nb; ++n) {
      idx.push_back(v.w[static_cast<std::size_t>(n)]);
      val.push_back(z[n] * z[n] + z[nb + n] * z[nb + n]);
    }
    for (const auto& e : v.w_pairs) {
      const double an = z[e.i], bn = z[nb + e.i], am = z[e.j], bm = z[nb + e.j];
      idx.push_back(e.re);
      val.push_back(2.0 * (an * am + bn * bm));
      idx.push_back(e.im);
      val.push_back(e.im_sign * 2.0 * (bn * am - bm * an));
    }
    out.push_back(make_cut(arity, std::move(idx), std::move(val), Sense::GreaterEqual, 0.0, CutSource::PsdSeparation));
  }
  return out;
}

double jacobi_min_eigenvalue(Eigen::MatrixXd a, int max_sweeps) {
  const Eigen::Index n = a.rows();
  if (n == 0) return 0.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off <= 1e-30 * std::max(1.0, a.squaredNorm())) return a.diagonal().minCoeff();
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  throw Error(ErrorKind::EigenFailure, "Jacobi rotation did not converge in " + std::to_string(max_sweeps) + " sweeps");
}

// ---------------------------------------------------------------------------
// dispatch and solution
// ---------------------------------------------------------------------------

StageProblem build(FormulationKind kind, const StageData& data, const Eigen::VectorXd& state,
                   std::span<const BendersCut> cuts, bool terminal) {
  if (kind == FormulationKind::AC) {
    throw Error(ErrorKind::UnsupportedKind, "AC has no LP formulation; use the AC-OPF solver");
  }
  StageProblem pb = build_common(data, state, cuts, terminal);
  switch (kind) {
    case FormulationKind::NFA: attach_nfa(pb); break;
    case FormulationKind::DC: attach_dc(pb); break;
    case FormulationKind::DCLL:
      attach_dc(pb);
      attach_dcll(pb);
      break;
    case FormulationKind::SOC:
    case FormulationKind::SDP: attach_wspace(pb, kind); break;
    case FormulationKind::AC: break;
  }
  return pb;
}

StageSolution extract_solution(const StageProblem& pb, const LpSolution& lp) {
  const auto& v = pb.vars;
  const NetworkCase& net = *pb.network;
  StageSolution s;
  s.ok = lp.optimal();
  s.x = lp.x;
  const double e = pb.obj_scale;
  s.future_cost = lp.x[v.alpha] * e;
  s.objective = lp.objective * e;
  s.immediate_cost = s.objective - s.future_cost;
  const auto nh = static_cast<Eigen::Index>(net.hydros.size());
  s.volume.resize(nh);
  s.turbined.resize(nh);
  s.spilled.resize(nh);
  s.water_dual.resize(nh);
  for (Eigen::Index j = 0; j < nh; ++j) {
    const auto J = static_cast<std::size_t>(j);
    s.volume[j] = lp.x[v.nu[J]];
    s.turbined[j] = lp.x[v.u[J]];
    s.spilled[j] = lp.x[v.s[J]];
    s.water_dual[j] = lp.duals[v.water[J]] * e;
  }
  s.thermal.resize(static_cast<Eigen::Index>(v.p.size()));
  for (std::size_t i = 0; i < v.p.size(); ++i) s.thermal[static_cast<Eigen::Index>(i)] = lp.x[v.p[i]];
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  s.deficit.resize(nb);
  s.spot_price.resize(nb);
  for (Eigen::Index n = 0; n < nb; ++n) {
    s.deficit[n] = lp.x[v.delta[static_cast<std::size_t>(n)]];
    s.spot_price[n] = lp.duals[v.kcl[static_cast<std::size_t>(n)]];
  }
  const auto nl = static_cast<Eigen::Index>(v.f_nm.size());
  s.flow_nm.resize(nl);
  s.flow_mn.resize(nl);
  for (Eigen::Index l = 0; l < nl; ++l) {
    s.flow_nm[l] = lp.x[v.f_nm[static_cast<std::size_t>(l)]];
    s.flow_mn[l] = lp.x[v.f_mn[static_cast<std::size_t>(l)]];
  }
  return s;
}

StageSolution solve_stage(StageProblem& pb, const LpTolerances& tol, std::span<const SeparationOracle> extra,
                          const Basis* warm, Basis* basis_out) {
  std::vector<SeparationOracle> all = pb.oracles;
  all.insert(all.end(), extra.begin(), extra.end());
  SeparationResult r = solve_with_separation(pb.lp, all, warm, tol);
  if (!r.solution.optimal()) {
    throw Error(ErrorKind::StageSolveFailure, std::string(to_string(pb.kind)) + " stage LP " +
                                                  to_string(r.solution.status));
  }
  StageSolution s = extract_solution(pb, r.solution);
  s.separation_rounds = r.rounds;
  s.round_limit = r.round_limit;
  s.max_violation = r.max_violation;
  if (basis_out) *basis_out = r.solution.basis;
  return s;
}

// ---------------------------------------------------------------------------
// persistent stage model
// ---------------------------------------------------------------------------

StageModel::StageModel(FormulationKind kind, const StageData& data, bool terminal) : data_(data) {
  Eigen::VectorXd state(static_cast<Eigen::Index>(data.net().hydros.size()));
  for (std::size_t j = 0; j < data.net().hydros.size(); ++j) state[static_cast<Eigen::Index>(j)] = data.net().hydros[j].v_initial;
  problem_ = build(kind, data_, state, {}, terminal);
}

void StageModel::set_state(const Eigen::VectorXd& prev) {
  const auto& w = problem_.vars.water;
  if (prev.size() != static_cast<Eigen::Index>(w.size())) throw Error(ErrorKind::DimensionMismatch, "state size");
  for (std::size_t j = 0; j < w.size(); ++j) {
    problem_.lp.set_rhs(w[j], prev[static_cast<Eigen::Index>(j)] + data_.inflow[static_cast<Eigen::Index>(j)]);
  }
}

int StageModel::cuts_in_model() const {
  return static_cast<int>(std::count(added_.begin(), added_.end(), static_cast<char>(1)));
}

StageSolution StageModel::solve(std::span<const BendersCut> cuts, const LpTolerances& tol) {
  if (problem_.terminal) cuts = {};
  if (added_.size() < cuts.size()) added_.resize(cuts.size(), 0);
  const auto& v = problem_.vars;
  const double e = problem_.obj_scale;
  std::vector<std::size_t> pending;
  SeparationOracle benders = [&](const Eigen::VectorXd& x) {
    std::vector<Cut> out;
    pending.clear();
    Eigen::VectorXd nu(static_cast<Eigen::Index>(v.nu.size()));
    for (std::size_t j = 0; j < v.nu.size(); ++j) nu[static_cast<Eigen::Index>(j)] = x[v.nu[j]];
    const double alpha = x[v.alpha];
    for (std::size_t c = 0; c < cuts.size(); ++c) {
      if (added_[c]) continue;
      const double value = cuts[c].value(nu) / e;
      if (value - alpha <= 1e-10 * (1.0 + std::abs(value))) continue;
      Cut cut;
      cut.arity = static_cast<int>(x.size());
      cut.index.push_back(v.alpha);
      cut.value.push_back(1.0);
      for (std::size_t j = 0; j < v.nu.size(); ++j) {
        const double sl = cuts[c].slope[static_cast<Eigen::Index>(j)];
        if (sl == 0.0) continue;
        cut.index.push_back(v.nu[j]);
        cut.value.push_back(-sl / e);
      }
      cut.sense = Sense::GreaterEqual;
      cut.rhs = cuts[c].intercept / e;
      cut.source = CutSource::Benders;
      out.push_back(std::move(cut));
      added_[c] = 1;
      pending.push_back(c);
    }
    return out;
  };
  std::vector<SeparationOracle> all = problem_.oracles;
  all.push_back(benders);
  SeparationResult r = solve_with_separation(problem_.lp, all, basis_.empty() ? nullptr : &basis_, tol);
  if (r.round_limit) {
    for (std::size_t c : pending) added_[c] = 0;
  }
  if (!r.solution.optimal() && r.solution.status != LpStatus::Optimal) {
    basis_ = Basis{};
    throw Error(ErrorKind::StageSolveFailure, "stage " + std::to_string(data_.stage) + " outcome " +
                                                  std::to_string(data_.outcome) + ": " + to_string(r.solution.status));
  }
  basis_ = r.solution.basis;
  StageSolution s = extract_solution(problem_, r.solution);
  s.separation_rounds = r.rounds;
  s.round_limit = r.round_limit;
  s.max_violation = r.max_violation;
  return s;
}

}  // namespace hydro
