#pragma once

// Test-only reference models, written without the library's stage builders.

#include "hydrosddp/case_model.hpp"
#include "hydrosddp/formulation.hpp"

#include <Eigen/Dense>

#include <vector>

namespace oracle {

/// Expected cost of stages first..T over the whole scenario tree, starting
/// from storage `start` at the end of stage first-1. NFA or DC only.
double deterministic_equivalent(const hydro::NetworkCase& net, const hydro::ScenarioLattice& lattice,
                                hydro::FormulationKind kind, int first_stage, const Eigen::VectorXd& start);

/// Small dense LP min c'x s.t. A x <= b, x >= 0 solved by vertex enumeration.
/// Returns +inf when infeasible. Only for a handful of variables.
double vertex_enumeration(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                          Eigen::VectorXd* argmin = nullptr);

/// Tiny instances used by the deterministic-equivalent checks.
struct TinyInstance {
  hydro::NetworkCase net;
  hydro::ScenarioLattice lattice;
  hydro::FormulationKind kind;
  const char* label;
};
std::vector<TinyInstance> tiny_instances();

}  // namespace oracle
