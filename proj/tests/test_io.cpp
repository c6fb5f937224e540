#include "fixtures.hpp"
#include "hydrosddp/error.hpp"
#include "hydrosddp/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

using namespace hydro;
namespace fs = std::filesystem;

namespace {

const fs::path kData = HYDRO_DATA_DIR;
const fs::path kTestData = HYDRO_TEST_DATA_DIR;

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + HYDRO_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hydrosddp_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(CaseFile, ShippedLoopCase) {
  const NetworkCase net = load_validate(parse_case((kData / "loop3.json").string()));
  EXPECT_EQ(net.buses.size(), 3u);
  EXPECT_EQ(net.branches.size(), 3u);
  EXPECT_EQ(net.thermals.size(), 2u);
  EXPECT_EQ(net.hydros.size(), 1u);
}

TEST(CaseFile, MissingFieldNamesPlant) {
  try {
    parse_case((kTestData / "missing_rho.json").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    const std::string w = e.what();
    EXPECT_NE(w.find("hydro 1"), std::string::npos) << w;
    EXPECT_NE(w.find("rho"), std::string::npos) << w;
  }
}

TEST(CaseFile, BadJson) {
  EXPECT_THROW(parse_case_json("{\"buses\": [", "x"), Error);
  try {
    parse_case_json("{\"format\": \"something-else\", \"buses\": []}", "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
}

TEST(CaseFile, JsonRoundTrip) {
  const RawCase rc = fx::loop3();
  std::ostringstream os;
  write_case_json(os, rc);
  const RawCase back = parse_case_json(os.str());
  ASSERT_EQ(back.branches.size(), rc.branches.size());
  EXPECT_EQ(back.branches[1].rate_mva, rc.branches[1].rate_mva);
  EXPECT_EQ(back.hydros[0].rho_mw, rc.hydros[0].rho_mw);
  EXPECT_EQ(back.buses[2].load_mw, rc.buses[2].load_mw);
  EXPECT_EQ(back.thermals[1].q_max_mvar, rc.thermals[1].q_max_mvar);
}

TEST(Matpower, FiveBusWithSidecar) {
  const NetworkCase net = load_validate(parse_case((kData / "case5.m").string()));
  EXPECT_EQ(net.buses.size(), 5u);
  EXPECT_EQ(net.branches.size(), 6u);
  // the bus-5 unit is listed as hydro in the sidecar
  EXPECT_EQ(net.thermals.size(), 4u);
  EXPECT_EQ(net.hydros.size(), 1u);
  EXPECT_EQ(net.buses[static_cast<std::size_t>(net.reference_bus())].id, 4);
  EXPECT_EQ(net.thermals[0].cost, 14.0);
  EXPECT_NEAR(net.buses[1].load_p, 3.0, 1e-12);
}

TEST(Matpower, MissingMatrix) {
  try {
    parse_matpower("mpc.baseMVA = 100;\nmpc.bus = [1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;];\n", "", "bad.m");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("gen"), std::string::npos);
  }
}

TEST(Inflows, ShippedLattice) {
  const NetworkCase net = load_validate(parse_case((kData / "loop3.json").string()));
  const ScenarioLattice lat = parse_inflows((kData / "loop3_inflows.csv").string(), net);
  EXPECT_EQ(lat.n_stages(), 48);
  for (int t = 1; t <= 48; ++t) EXPECT_EQ(lat.n_outcomes(t), 3);
}

TEST(Inflows, ProbabilityChecks) {
  const NetworkCase net = load_validate(fx::loop3());
  try {
    parse_inflows_csv("stage,outcome,probability,inflow_1\n1,0,0.4,10\n1,1,0.5,20\n", net);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProbabilitySumError);
  }
  std::vector<std::string> warn;
  const ScenarioLattice lat =
      parse_inflows_csv("stage,outcome,probability,inflow_1\n1,0,0.5000004,10\n1,1,0.5,20\n", net, &warn);
  EXPECT_EQ(warn.size(), 1u);
  EXPECT_NEAR(lat.outcome(1, 0).probability + lat.outcome(1, 1).probability, 1.0, 1e-15);
  EXPECT_THROW(parse_inflows_csv("stage,outcome,probability,inflow_1\n1,0,1.0,-3\n", net), Error);
  EXPECT_THROW(parse_inflows_csv("stage,outcome,probability,inflow_9\n1,0,1.0,3\n", net), Error);
}

TEST(Inflows, CsvRoundTrip) {
  const NetworkCase net = load_validate(fx::loop3());
  const ScenarioLattice lat = fx::lattice(2, {{{12.5}, 0.25}, {{0.1}, 0.75}});
  std::ostringstream os;
  write_inflows_csv(os, lat, net);
  EXPECT_EQ(first_line(os.str()), "stage,outcome,probability,inflow_1");
  const ScenarioLattice back = parse_inflows_csv(os.str(), net);
  ASSERT_EQ(back.n_stages(), 2);
  EXPECT_EQ(back.outcome(2, 1).inflow[0], 0.1);
  EXPECT_EQ(back.outcome(1, 0).probability, 0.25);
}

TEST(PolicyFile, RoundTripIsExact) {
  const NetworkCase net = load_validate(fx::loop3());
  const ScenarioLattice lat = fx::lattice(4, {{{20.0}, 0.5}, {{90.0}, 0.5}});
  const Policy p = train(net, lat, FormulationKind::DC, {});
  std::ostringstream os;
  save_policy(os, p);
  const Policy q = load_policy_json(os.str());
  EXPECT_EQ(q.kind, p.kind);
  ASSERT_EQ(q.cost_to_go.n_stages(), p.cost_to_go.n_stages());
  for (int t = 1; t <= p.cost_to_go.n_stages(); ++t) {
    ASSERT_EQ(q.cost_to_go.at(t).size(), p.cost_to_go.at(t).size());
    for (std::size_t k = 0; k < p.cost_to_go.at(t).size(); ++k) {
      EXPECT_EQ(q.cost_to_go.at(t)[k].intercept, p.cost_to_go.at(t)[k].intercept);
      EXPECT_EQ(q.cost_to_go.at(t)[k].slope, p.cost_to_go.at(t)[k].slope);
    }
  }
  std::ostringstream again;
  save_policy(again, q);
  EXPECT_EQ(again.str(), os.str());
}

TEST(Reports, CsvHeaders) {
  const NetworkCase net = load_validate(fx::loop3());
  const ScenarioLattice lat = fx::lattice(2, {{{20.0}, 0.5}, {{90.0}, 0.5}});
  const Policy p = train(net, lat, FormulationKind::NFA, {});
  const EvaluationReport r = simulate(net, lat, p, FormulationKind::NFA, sample_scenarios(lat, 3, 1));
  std::ostringstream a, b, c;
  write_report_csv(a, r, net);
  write_trajectory_csv(b, r, net);
  EXPECT_EQ(first_line(a.str()), "scenario,stage,outcome,ok,stage_cost,thermal_mw,hydro_mw,deficit_mw,volume_1,spot_1,spot_2,spot_3");
  EXPECT_EQ(first_line(b.str()), "stage,volume_1,thermal_mw,hydro_mw,deficit_mw,stage_cost,spot_1,spot_2,spot_3");
  Comparison cmp;
  write_comparison_csv(c, cmp);
  EXPECT_EQ(first_line(c.str()).rfind("Policy,Planning,Implementation,GAP%,Time", 0), 0u);
}

TEST(Cli, ValidateExitCodes) {
  EXPECT_EQ(run_cli("validate --case \"" + (kData / "loop3.json").string() + "\""), 0);
  EXPECT_EQ(run_cli("validate --case \"" + (kTestData / "missing_rho.json").string() + "\""), 1);
  EXPECT_EQ(run_cli("validate --case /nonexistent/case.json"), 1);
  EXPECT_NE(run_cli("train --kind nfa"), 0);
}

TEST(Cli, TrainingIsByteIdentical) {
  const fs::path a = scratch("a"), b = scratch("b");
  const std::string common = "train --quiet --kind nfa,dc --max-iter 6 --seed 5 --case \"" +
                             (kData / "loop3.json").string() + "\" --inflows \"" +
                             (kData / "loop3_inflows.csv").string() + "\"";
  ASSERT_EQ(run_cli(common + " --out \"" + a.string() + "\""), 0);
  ASSERT_EQ(run_cli(common + " --workers 3 --out \"" + b.string() + "\""), 0);
  for (const char* f : {"policy/nfa.json", "policy/dc.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(read_file((a / f).string()), read_file((b / f).string())) << f;
  }
  EXPECT_TRUE(fs::exists(a / "logs" / "train_nfa.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}
