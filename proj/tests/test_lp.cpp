#include "hydrosddp/error.hpp"
#include "hydrosddp/lp.hpp"
#include "oracle.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace hydro;

TEST(Lp, SingleVariableUpperRow) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, kInf, -1.0);
  lp.add_row({{x, 1.0}}, Sense::LessEqual, 3.0);
  const LpSolution s = solve(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[x], 3.0, 1e-12);
  EXPECT_NEAR(s.objective, -3.0, 1e-12);
  EXPECT_NEAR(s.duals[0], -1.0, 1e-12);
}

TEST(Lp, Infeasible) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, kInf, 1.0);
  lp.add_row({{x, 1.0}}, Sense::LessEqual, 3.0);
  lp.add_row({{x, 1.0}}, Sense::GreaterEqual, 5.0);
  EXPECT_EQ(solve(lp).status, LpStatus::Infeasible);
}

TEST(Lp, Unbounded) {
  LinearProgram lp;
  lp.add_variable(0.0, kInf, -1.0);
  EXPECT_EQ(solve(lp).status, LpStatus::Unbounded);
}

TEST(Lp, AppendCutWarmStart) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, kInf, -1.0);
  lp.add_row({{x, 1.0}}, Sense::LessEqual, 3.0);
  const LpSolution first = solve(lp);
  Cut c;
  c.arity = 1;
  c.index = {x};
  c.value = {1.0};
  c.rhs = 2.0;
  lp.append_cut(c);
  const LpSolution second = solve(lp, &first.basis);
  ASSERT_TRUE(second.optimal());
  EXPECT_NEAR(second.x[x], 2.0, 1e-12);
  EXPECT_LE(second.iterations, 3);

  c.rhs = 10.0;
  lp.append_cut(c);
  const LpSolution third = solve(lp, &second.basis);
  EXPECT_NEAR(third.objective, second.objective, 1e-12);

  Cut bad = c;
  bad.arity = 5;
  try {
    lp.append_cut(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Lp, SeparationReachesConeBoundary) {
  LinearProgram lp;
  const int w11 = lp.add_variable(1.0, 1.0, 0.0);
  const int w22 = lp.add_variable(1.0, 1.0, 0.0);
  const int w12 = lp.add_variable(-10.0, 10.0, -1.0);
  SeparationOracle cone = [&](const Eigen::VectorXd& x) {
    std::vector<Cut> out;
    const double a = 2.0 * x[w12], d = x[w11] - x[w22];
    const double nz = std::hypot(a, d);
    if (nz - (x[w11] + x[w22]) <= 1e-9) return out;
    // subgradient of ||(2 w12, w11 - w22)|| - w11 - w22 at x
    Cut c;
    c.arity = 3;
    c.index = {w11, w22, w12};
    c.value = {d / nz - 1.0, -d / nz - 1.0, 2.0 * a / nz};
    c.rhs = 0.0;
    out.push_back(c);
    return out;
  };
  std::vector<SeparationOracle> oracles{cone};
  const SeparationResult r = solve_with_separation(lp, oracles);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.solution.x[w12], 1.0, 1e-4);
}

TEST(Lp, EmptyOracleListMatchesSolve) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, 4.0, -2.0);
  const int y = lp.add_variable(0.0, kInf, -1.0);
  lp.add_row({{x, 1.0}, {y, 1.0}}, Sense::LessEqual, 5.0);
  const LpSolution a = solve(lp);
  const SeparationResult b = solve_with_separation(lp, {});
  EXPECT_EQ(a.objective, b.solution.objective);
  EXPECT_EQ(b.rounds, 0);
}

TEST(Lp, RoundLimitKeepsObjectiveMonotone) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, 1.0, -1.0);
  // every round shaves a little more off: x <= current - tiny, still valid for x <= 0.5
  SeparationOracle shave = [&](const Eigen::VectorXd& v) {
    std::vector<Cut> out;
    if (v[x] <= 0.5) return out;
    Cut c;
    c.arity = 1;
    c.index = {x};
    c.value = {1.0};
    c.rhs = 0.5 + 0.9 * (v[x] - 0.5);
    out.push_back(c);
    return out;
  };
  LpTolerances tol;
  tol.max_separation_rounds = 20;
  std::vector<SeparationOracle> oracles{shave};
  const SeparationResult r = solve_with_separation(lp, oracles, nullptr, tol);
  EXPECT_TRUE(r.round_limit);
  EXPECT_FALSE(r.optimal());
  for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
    EXPECT_GE(r.objective_trace[k], r.objective_trace[k - 1] - 1e-12);
}

namespace {

struct RandomLp {
  Eigen::MatrixXd A;
  Eigen::VectorXd b, c;
};

RandomLp random_lp(std::mt19937& gen, int m, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 2.0);
  RandomLp r;
  r.A.resize(m, n);
  r.b.resize(m);
  r.c.resize(n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) r.A(i, j) = u(gen);
    r.b[i] = pos(gen);
  }
  for (int j = 0; j < n; ++j) r.c[j] = u(gen);
  // a box row keeps it bounded
  r.A.conservativeResize(m + 1, n);
  r.A.row(m).setOnes();
  r.b.conservativeResize(m + 1);
  r.b[m] = 5.0;
  return r;
}

LinearProgram to_lp(const RandomLp& r) {
  LinearProgram lp;
  for (Eigen::Index j = 0; j < r.c.size(); ++j) lp.add_variable(0.0, kInf, r.c[j]);
  for (Eigen::Index i = 0; i < r.A.rows(); ++i) {
    std::vector<int> idx;
    std::vector<double> val;
    for (Eigen::Index j = 0; j < r.A.cols(); ++j) {
      idx.push_back(static_cast<int>(j));
      val.push_back(r.A(i, j));
    }
    lp.add_row(idx, val, Sense::LessEqual, r.b[i]);
  }
  return lp;
}

}  // namespace

TEST(Lp, MatchesVertexEnumeration) {
  std::mt19937 gen(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 2 + trial % 4, n = 2 + trial % 3;
    const RandomLp r = random_lp(gen, m, n);
    const double best = oracle::vertex_enumeration(r.A, r.b, r.c);
    const LpSolution s = solve(to_lp(r));
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.objective, best, 1e-9 * (1.0 + std::abs(best))) << "trial " << trial;
  }
}

TEST(Lp, DualCertificateAndWarmStart) {
  std::mt19937 gen(77);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5 + static_cast<int>(gen() % 45), m = 3 + static_cast<int>(gen() % 30);
    const RandomLp r = random_lp(gen, m, n);
    LinearProgram lp = to_lp(r);
    const LpSolution s = solve(lp);
    ASSERT_TRUE(s.optimal());
    // all variables sit at a zero lower bound or are basic, so b'y carries the objective
    double dual_obj = 0.0;
    for (int i = 0; i < lp.num_rows(); ++i) dual_obj += lp.row(i).rhs * s.duals[i];
    for (int j = 0; j < lp.num_variables(); ++j) {
      if (s.x[j] <= 1e-12) continue;
      const double b = lp.upper(j);
      if (std::isfinite(b)) dual_obj += b * std::min(0.0, s.reduced_costs[j]);
    }
    EXPECT_NEAR(dual_obj, s.objective, 1e-8 * (1.0 + std::abs(s.objective)));
    for (int i = 0; i < lp.num_rows(); ++i)
      EXPECT_LE(lp.row_activity(i, s.x), lp.row(i).rhs + 1e-8 * (1.0 + std::abs(lp.row(i).rhs)));

    Cut c;
    c.arity = n;
    for (int j = 0; j < n; ++j) {
      c.index.push_back(j);
      c.value.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(gen));
    }
    c.rhs = 0.5 * lp.row_activity(lp.append_cut(c), s.x) + 0.1;
    lp.set_rhs(lp.num_rows() - 1, c.rhs);
    const LpSolution warm = solve(lp, &s.basis);
    const LpSolution cold = solve(lp);
    ASSERT_TRUE(warm.optimal() && cold.optimal());
    EXPECT_NEAR(warm.objective, cold.objective, 1e-9 * (1.0 + std::abs(cold.objective)));
  }
}

TEST(Lp, MpsDump) {
  LinearProgram lp;
  const int x = lp.add_variable(0.0, 2.0, 1.0, "x");
  const int y = lp.add_variable(-kInf, kInf, -1.0, "y");
  lp.add_row({{x, 1.0}, {y, 1.0}}, Sense::Equal, 1.0, "bal");
  std::ostringstream os;
  lp.write_mps(os);
  const std::string s = os.str();
  EXPECT_NE(s.find("ROWS"), std::string::npos);
  EXPECT_NE(s.find("COLUMNS"), std::string::npos);
  EXPECT_NE(s.find("ENDATA"), std::string::npos);
}
