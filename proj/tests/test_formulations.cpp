#include "fixtures.hpp"
#include "hydrosddp/acopf.hpp"
#include "hydrosddp/error.hpp"
#include "hydrosddp/formulation.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hydro;

namespace {

RawCase unit_case() {
  RawCase rc;
  rc.base_mva = 1.0;
  rc.hours_per_stage = 1.0;
  return rc;
}

StageSolution solve_kind(FormulationKind kind, const NetworkCase& net, const Eigen::VectorXd& inflow,
                         const Eigen::VectorXd& state, std::vector<BendersCut> cuts = {}, bool terminal = true,
                         StageProblem* keep = nullptr) {
  const StageData d = stage_data(net, 1, inflow);
  StageProblem pb = build(kind, d, state, cuts, terminal);
  StageSolution s = solve_stage(pb);
  if (keep) *keep = std::move(pb);
  return s;
}

bool feasible(const LinearProgram& lp, const Eigen::VectorXd& x, double tol) {
  for (int j = 0; j < lp.num_variables(); ++j)
    if (x[j] < lp.lower(j) - tol || x[j] > lp.upper(j) + tol) return false;
  for (int i = 0; i < lp.num_rows(); ++i) {
    const double a = lp.row_activity(i, x), b = lp.row(i).rhs;
    switch (lp.row(i).sense) {
      case Sense::LessEqual:
        if (a > b + tol) return false;
        break;
      case Sense::GreaterEqual:
        if (a < b - tol) return false;
        break;
      case Sense::Equal:
        if (std::abs(a - b) > tol) return false;
        break;
    }
  }
  return true;
}

// DC flows from the bus susceptance matrix, solved independently of the LP.
Eigen::VectorXd dc_flows(const NetworkCase& net, const Eigen::VectorXd& injection) {
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nb, nb);
  for (const auto& br : net.branches) {
    const double y = 1.0 / br.x;
    B(br.from, br.from) += y;
    B(br.to, br.to) += y;
    B(br.from, br.to) -= y;
    B(br.to, br.from) -= y;
  }
  const int ref = net.reference_bus();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index n = 0; n < nb; ++n)
    if (n != ref) keep.push_back(n);
  Eigen::MatrixXd Br(keep.size(), keep.size());
  Eigen::VectorXd pr(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a) {
    pr[static_cast<Eigen::Index>(a)] = injection[keep[a]];
    for (std::size_t b = 0; b < keep.size(); ++b) Br(a, b) = B(keep[a], keep[b]);
  }
  const Eigen::VectorXd th_r = Br.lu().solve(pr);
  Eigen::VectorXd th = Eigen::VectorXd::Zero(nb);
  for (std::size_t a = 0; a < keep.size(); ++a) th[keep[a]] = th_r[static_cast<Eigen::Index>(a)];
  Eigen::VectorXd f(static_cast<Eigen::Index>(net.branches.size()));
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const auto& br = net.branches[l];
    f[static_cast<Eigen::Index>(l)] = (th[br.from] - th[br.to]) / br.x;
  }
  return f;
}

}  // namespace

TEST(Common, SingleBusDispatch) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 1.0, 500.0)};
  rc.thermals = {fx::thermal(1, 1, 2.0, 50.0)};
  const NetworkCase net = load_validate(rc);
  const StageSolution s = solve_kind(FormulationKind::NFA, net, Eigen::VectorXd(0), Eigen::VectorXd(0));
  EXPECT_NEAR(s.thermal[0], 1.0, 1e-12);
  EXPECT_NEAR(s.deficit[0], 0.0, 1e-12);
  EXPECT_NEAR(s.immediate_cost, 50.0, 1e-9);
}

TEST(Common, WaterBalance) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.3, 500.0)};
  rc.thermals = {fx::thermal(1, 1, 2.0, 50.0)};
  rc.hydros = {fx::hydro_plant(1, 1, 5.0, 1.0, 0.3, 1.0)};
  const NetworkCase net = load_validate(rc);
  BendersCut water;
  water.intercept = 100.0;
  water.slope = Eigen::VectorXd::Constant(1, -10.0);
  const StageSolution s = solve_kind(FormulationKind::NFA, net, Eigen::VectorXd::Constant(1, 0.5),
                                     Eigen::VectorXd::Constant(1, 1.0), {water}, false);
  EXPECT_NEAR(s.turbined[0], 0.3, 1e-12);
  EXPECT_NEAR(s.spilled[0], 0.0, 1e-12);
  EXPECT_NEAR(s.volume[0], 1.2, 1e-12);
}

TEST(Common, ShortfallPricedAtDeficitCost) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 3.0, 500.0)};
  rc.thermals = {fx::thermal(1, 1, 2.0, 50.0)};
  const NetworkCase net = load_validate(rc);
  const StageSolution s = solve_kind(FormulationKind::NFA, net, Eigen::VectorXd(0), Eigen::VectorXd(0));
  EXPECT_NEAR(s.deficit[0], 1.0, 1e-12);
  EXPECT_NEAR(s.spot_price[0], 500.0, 1e-9);
}

TEST(Nfa, CirculatingFlowStaysFeasible) {
  const NetworkCase net = load_validate(fx::loop3());
  StageProblem pb;
  const StageSolution s =
      solve_kind(FormulationKind::NFA, net, Eigen::VectorXd::Constant(1, 50.0), Eigen::VectorXd::Constant(1, 200.0), {},
                 true, &pb);
  EXPECT_TRUE(pb.oracles.empty());
  const Eigen::VectorXd& x = s.x;
  // loop 1 -> 2 -> 3 -> 1 against the stored orientations (2,1), (3,1), (3,2)
  const auto& v = pb.vars;
  auto room = [&](double c) {
    Eigen::VectorXd y = x;
    y[v.f_nm[0]] -= c;
    y[v.f_mn[0]] += c;
    y[v.f_nm[2]] -= c;
    y[v.f_mn[2]] += c;
    y[v.f_nm[1]] += c;
    y[v.f_mn[1]] -= c;
    return y;
  };
  // the optimum may sit on a limit one way round the loop; some direction has room
  EXPECT_TRUE(feasible(pb.lp, room(0.01), 1e-9) || feasible(pb.lp, room(-0.01), 1e-9));
}

TEST(Nfa, LineLimitForcesShedding) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 1.5, 500.0)};
  rc.branches = {fx::line(2, 1, 0.0, 0.1, 1.0)};
  rc.thermals = {fx::thermal(1, 1, 10.0, 10.0), fx::thermal(2, 2, 0.4, 20.0)};
  const NetworkCase net = load_validate(rc);
  const StageSolution s = solve_kind(FormulationKind::NFA, net, Eigen::VectorXd(0), Eigen::VectorXd(0));
  EXPECT_NEAR(s.deficit[1], 0.1, 1e-9);
  EXPECT_NEAR(s.deficit[0], 0.0, 1e-12);
}

TEST(Nfa, Lossless) {
  const NetworkCase net = load_validate(fx::loop3());
  const StageSolution s = solve_kind(FormulationKind::NFA, net, Eigen::VectorXd::Constant(1, 40.0),
                                     Eigen::VectorXd::Constant(1, 200.0));
  ASSERT_NEAR(s.deficit.sum(), 0.0, 1e-12);
  double gen = s.thermal.sum();
  gen += s.turbined[0] * net.hydros[0].rho;
  double load = 0.0;
  for (const auto& b : net.buses) load += b.load_p;
  EXPECT_NEAR(gen, load, 1e-9);
}

TEST(Dc, FlowFormula) {
  RawCase rc = unit_case();
  RawCase pu = rc;
  pu.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 0.5, 500.0)};
  pu.branches = {fx::line(2, 1, 0.0, 0.1, 5.0)};
  pu.thermals = {fx::thermal(1, 1, 10.0, 10.0)};
  const NetworkCase net = load_validate(pu);
  StageProblem pb;
  const StageSolution s = solve_kind(FormulationKind::DC, net, Eigen::VectorXd(0), Eigen::VectorXd(0), {}, true, &pb);
  const double dth = s.x[pb.vars.theta[1]] - s.x[pb.vars.theta[0]];
  EXPECT_NEAR(dth, -0.05, 1e-12);
  EXPECT_NEAR(s.flow_nm[0], dth / 0.1, 1e-12);
  EXPECT_NEAR(s.flow_nm[0], -0.5, 1e-12);
}

TEST(Dc, LoopSplitMatchesNetworkEquations) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 0.0, 500.0), fx::bus(3, false, 1.0, 500.0)};
  rc.branches = {fx::line(2, 1, 0.0, 0.1, 5.0), fx::line(3, 1, 0.0, 0.1, 5.0), fx::line(3, 2, 0.0, 0.1, 5.0)};
  rc.thermals = {fx::thermal(1, 1, 10.0, 10.0)};
  const NetworkCase net = load_validate(rc);
  const StageSolution s = solve_kind(FormulationKind::DC, net, Eigen::VectorXd(0), Eigen::VectorXd(0));
  Eigen::VectorXd inj(3);
  inj << 1.0, 0.0, -1.0;
  const Eigen::VectorXd f = dc_flows(net, inj);
  for (int l = 0; l < 3; ++l) EXPECT_NEAR(s.flow_nm[l], f[l], 1e-10);
  // direct path 1-3 against the two-line path through bus 2: 2:1
  EXPECT_NEAR(-s.flow_nm[1], 2.0 / 3.0, 1e-10);
  EXPECT_NEAR(-s.flow_nm[0], 1.0 / 3.0, 1e-10);
}

TEST(Dcll, LossEnvelope) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 1.0, 500.0)};
  rc.branches = {fx::line(2, 1, 0.01, 0.1, 5.0)};
  rc.thermals = {fx::thermal(1, 1, 10.0, 10.0)};
  const NetworkCase net = load_validate(rc);
  EXPECT_NEAR(net.branches[0].loss_factor(), 0.01, 1e-15);
  const StageSolution s = solve_kind(FormulationKind::DCLL, net, Eigen::VectorXd(0), Eigen::VectorXd(0));
  const double f = -s.flow_nm[0];
  EXPECT_GT(f, 1.0 - 1e-9);
  const double loss = s.flow_nm[0] + s.flow_mn[0];
  EXPECT_GE(loss, 0.01 * f * f - 1e-6);
  EXPECT_LE(loss, 0.01 * f * f + 1e-6);
}

TEST(Dcll, NoFlowNoLoss) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 0.0, 500.0)};
  rc.branches = {fx::line(2, 1, 0.01, 0.1, 5.0)};
  rc.thermals = {fx::thermal(1, 1, 10.0, 10.0)};
  const NetworkCase net = load_validate(rc);
  const StageSolution s = solve_kind(FormulationKind::DCLL, net, Eigen::VectorXd(0), Eigen::VectorXd(0));
  EXPECT_NEAR(s.flow_nm[0] + s.flow_mn[0], 0.0, 1e-9);
  EXPECT_NEAR(s.immediate_cost, 0.0, 1e-9);
}

TEST(WSpace, FlatStartIdentities) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 0.0, 500.0)};
  rc.branches = {fx::line(2, 1, 0.01, 0.1, 5.0)};
  const NetworkCase net = load_validate(rc);
  const BranchFlows f = branch_flows(net, PolarState::flat(net));
  EXPECT_EQ(f.p_nm[0], 0.0);
  EXPECT_EQ(f.q_nm[0], 0.0);
  StageProblem pb;
  const StageSolution s =
      solve_kind(FormulationKind::SOC, net, Eigen::VectorXd(0), Eigen::VectorXd(0), {}, true, &pb);
  for (int n = 0; n < 2; ++n) EXPECT_NEAR(s.x[pb.vars.loss[n]], 0.0, 1e-12);
}

TEST(WSpace, CircleLimitHonored) {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 1.5, 500.0)};
  rc.branches = {fx::line(2, 1, 0.01, 0.1, 1.0)};
  rc.thermals = {fx::thermal(1, 1, 10.0, 10.0, 10.0)};
  const NetworkCase net = load_validate(rc);
  StageVariables v;
  v.f_nm = {0};
  v.fq_nm = {1};
  v.f_mn = {2};
  v.fq_mn = {3};
  Eigen::VectorXd pt(4);
  pt << 0.8, 0.8, 0.0, 0.0;
  EXPECT_EQ(separate_circle(v, net, pt, 4).size(), 1u);
  StageProblem pb;
  const StageSolution s =
      solve_kind(FormulationKind::SOC, net, Eigen::VectorXd(0), Eigen::VectorXd(0), {}, true, &pb);
  EXPECT_GT(s.deficit[1], 0.0);
  const auto& x = s.x;
  EXPECT_LE(std::hypot(x[pb.vars.f_nm[0]], x[pb.vars.fq_nm[0]]), 1.0 + 1e-6);
  EXPECT_LE(std::hypot(x[pb.vars.f_mn[0]], x[pb.vars.fq_mn[0]]), 1.0 + 1e-6);
}

namespace {

struct TwoBusW {
  NetworkCase net;
  StageVariables v;
};

TwoBusW two_bus_w() {
  RawCase rc = unit_case();
  rc.buses = {fx::bus(1, true, 0.0, 500.0), fx::bus(2, false, 0.0, 500.0)};
  rc.branches = {fx::line(2, 1, 0.01, 0.1, 5.0)};
  TwoBusW t{load_validate(rc), {}};
  // bus 0 = id 1, bus 1 = id 2; branch from = bus 1
  t.v.w = {0, 1};
  t.v.w_re = {2};
  t.v.w_im = {3};
  t.v.w_pairs = {WEntry{0, 1, 2, 3, 1.0}};
  return t;
}

}  // namespace

TEST(Soc, AxisViolationCut) {
  auto t = two_bus_w();
  Eigen::VectorXd x(4);
  x << 1.0, 1.0, 1.2, 0.0;
  const auto cuts = separate_soc(t.v, t.net, x, 4);
  ASSERT_EQ(cuts.size(), 1u);
  // z = (2.4, 0, 0) so the cut is 2 w_re - w_nn - w_mm <= 0
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(4);
  for (std::size_t k = 0; k < cuts[0].index.size(); ++k) coef[cuts[0].index[k]] += cuts[0].value[k];
  EXPECT_NEAR(coef[2], 2.0, 1e-12);
  EXPECT_NEAR(coef[0], -1.0, 1e-12);
  EXPECT_NEAR(coef[1], -1.0, 1e-12);
  EXPECT_NEAR(coef[3], 0.0, 1e-12);
  EXPECT_EQ(cuts[0].rhs, 0.0);
}

TEST(Soc, NoCutInsideOrAtApex) {
  auto t = two_bus_w();
  Eigen::VectorXd x(4);
  x << 1.0, 1.0, 0.5, 0.0;
  EXPECT_TRUE(separate_soc(t.v, t.net, x, 4).empty());
  x << 0.3, 2.0, 0.0, 0.0;
  EXPECT_TRUE(separate_soc(t.v, t.net, x, 4).empty());
}

TEST(Soc, RandomConePointsNeverCut) {
  auto t = two_bus_w();
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double a = 0.5 + u(gen), b = 0.5 + u(gen);
    const double rad = std::sqrt(a * b) * u(gen), ang = 6.283185307179586 * u(gen);
    Eigen::VectorXd x(4);
    x << a, b, rad * std::cos(ang), rad * std::sin(ang);
    EXPECT_TRUE(separate_soc(t.v, t.net, x, 4).empty());
  }
}

TEST(Psd, TwoByTwoCut) {
  auto t = two_bus_w();
  Eigen::VectorXd x(4);
  x << 1.0, 1.0, 1.5, 0.0;
  const auto cuts = separate_psd(t.v, 2, x, 4);
  ASSERT_EQ(cuts.size(), 1u);
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(4);
  for (std::size_t k = 0; k < cuts[0].index.size(); ++k) coef[cuts[0].index[k]] += cuts[0].value[k];
  // eigenvector (1, -1)/sqrt2: 1/2 (w11 + w22) - w_re >= 0
  const double s = coef[0];
  ASSERT_GT(s, 0.0);
  EXPECT_NEAR(coef[1] / s, 1.0, 1e-9);
  EXPECT_NEAR(coef[2] / s, -2.0, 1e-9);
  EXPECT_NEAR(cuts[0].violation(x), s, 1e-9);
  EXPECT_EQ(cuts[0].sense, Sense::GreaterEqual);
}

TEST(Psd, PsdPointsNeverCut) {
  auto t = two_bus_w();
  Eigen::VectorXd x(4);
  x << 1.0, 1.0, 0.0, 0.0;
  EXPECT_TRUE(separate_psd(t.v, 2, x, 4).empty());
  std::mt19937 gen(9);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 1000; ++k) {
    // W = v v^H plus a PSD diagonal bump
    const std::complex<double> v1(nd(gen), nd(gen)), v2(nd(gen), nd(gen));
    const std::complex<double> w12 = v1 * std::conj(v2);
    const double bump = (k % 2) * std::abs(nd(gen));
    x << std::norm(v1) + bump, std::norm(v2) + bump, w12.real(), w12.imag();
    EXPECT_TRUE(separate_psd(t.v, 2, x, 4, 1e-7 * (1.0 + x.norm())).empty());
  }
}

TEST(Psd, JacobiAgreesWithEigen) {
  std::mt19937 gen(3);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 20; ++k) {
    const int n = 2 + k % 8;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = nd(gen);
    a = (a + a.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    EXPECT_NEAR(jacobi_min_eigenvalue(a), es.eigenvalues()[0], 1e-10);
  }
}

TEST(Build, OracleSets) {
  const NetworkCase net = load_validate(fx::loop3());
  const StageData d = stage_data(net, 1, Eigen::VectorXd::Constant(1, 50.0));
  const Eigen::VectorXd nu0 = Eigen::VectorXd::Constant(1, 200.0);
  EXPECT_TRUE(build(FormulationKind::NFA, d, nu0, {}, true).oracles.empty());
  EXPECT_FALSE(build(FormulationKind::SOC, d, nu0, {}, true).oracles.empty());
  try {
    build(FormulationKind::AC, d, nu0, {}, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedKind);
  }
}

TEST(Build, TwoBusRelaxationOrdering) {
  RawCase rc;
  rc.base_mva = 100.0;
  rc.hours_per_stage = 1.0;
  rc.buses = {fx::bus(1, true, 0.0), fx::bus(2, false, 120.0)};
  rc.branches = {fx::line(2, 1, 0.02, 0.1, 150.0)};
  rc.thermals = {fx::thermal(1, 1, 200.0, 20.0, 100.0), fx::thermal(2, 2, 100.0, 90.0, 50.0)};
  const NetworkCase net = load_validate(rc);
  double obj[3];
  const FormulationKind kinds[3] = {FormulationKind::NFA, FormulationKind::SOC, FormulationKind::SDP};
  for (int k = 0; k < 3; ++k) {
    StageProblem pb;
    obj[k] = solve_kind(kinds[k], net, Eigen::VectorXd(0), Eigen::VectorXd(0), {}, true, &pb).objective;
    if (kinds[k] == FormulationKind::SDP) {
      const StageSolution s = solve_stage(pb);
      const Eigen::MatrixXd m = real_embedding(assemble_w(pb.vars, 2, s.x));
      EXPECT_GE(jacobi_min_eigenvalue(m), -1e-6);
    }
  }
  EXPECT_LE(obj[0], obj[1] + 1e-6 * (1.0 + std::abs(obj[1])));
  EXPECT_LE(obj[1], obj[2] + 1e-6 * (1.0 + std::abs(obj[2])));
}
