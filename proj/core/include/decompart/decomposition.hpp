#pragma once

#include <vector>

#include "decompart/model.hpp"

namespace decompart {

/// State of the decomposed system at one instant: substorages X (one column
/// per external input) and initial substorages Xinit (one column per initial
/// stock), alongside the physical state x that the integrator carries
/// redundantly. The defining identity is x = Xinit*1 + X*1; it is checked,
/// not assumed.
struct DecomposedState {
  double t = 0.0;
  VectorXd x;      // physical state, authoritative argument for A(t, x)
  MatrixXd X;      // substorage matrix x_{i_k}, input-driven
  MatrixXd Xinit;  // initial substorage matrix

  VectorXd x0_vec() const { return Xinit.rowwise().sum(); }
  VectorXd xbar() const { return X.rowwise().sum(); }

  static DecomposedState initial(const CompartmentalModel& model, double t0);
};

/// Sub-level matrices evaluated from a decomposed state.
struct SubflowMatrices {
  MatrixXd D;                   // decomposition factors x_{j_k}/x_j (row j, col k)
  VectorXd D0;                  // initial-subsystem factors d_{j_0}
  std::vector<MatrixXd> Fk;     // per-subsystem flows, index 0 = initial subsystem
  std::vector<MatrixXd> Fk_init;  // per-initial-subsystem flows (one per stock)
  MatrixXd Tin, Tout;           // subthroughflow matrices (inward, outward)
  MatrixXd Ttilde;              // intercompartmental subthroughflow Tin - Z
  MatrixXd Tin_init, Tout_init; // initial-subsystem subthroughflows
  FlowSnapshot sys;             // system-level matrices at the same (t, x)
};

SubflowMatrices decomposed_snapshot(const CompartmentalModel& model, double t,
                                    const DecomposedState& ds);

/// Right-hand side of the decomposed governing equations:
///   dX/dt = Z + A X,  dXinit/dt = A Xinit
/// with A evaluated at the carried physical state.
struct DecomposedRhs {
  MatrixXd dX;
  MatrixXd dXinit;
};

DecomposedRhs rhs_decomposed(const CompartmentalModel& model, double t,
                             const DecomposedState& ds);

struct Aggregate {
  VectorXd x;      // Xinit*1 + X*1
  VectorXd xbar;   // X*1, input-derived storage
  VectorXd xinit;  // Xinit*1, initial-stock-derived storage
};

Aggregate aggregate(const DecomposedState& ds);

/// Column combination sum_k alpha_k X[:,k] + sum_k beta_k Xinit[:,k]; solves
/// the original system under the correspondingly masked inputs and initial
/// conditions.
VectorXd select_combination(const DecomposedState& ds, const std::vector<int>& alpha,
                            const std::vector<int>& beta);

}  // namespace decompart
