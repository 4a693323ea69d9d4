#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "decompart/expr.hpp"

namespace decompart {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Nonlinear compartmental model: n pools exchanging a conserved quantity
/// through expression-valued flows, with external inputs, outputs, and
/// initial stocks.
///
/// flow(i, j) is the rate from compartment j into compartment i; diagonal
/// entries are accepted but every shipped case study leaves them zero.
/// Immutable after construction; all evaluation entry points are pure.
class CompartmentalModel {
 public:
  CompartmentalModel(std::vector<std::string> names, std::vector<Expr> flows,
                     std::vector<Expr> inputs, std::vector<Expr> outputs, VectorXd x0,
                     std::string name = "");

  int n() const { return n_; }
  const std::string& name() const { return name_; }
  const std::vector<std::string>& compartment_names() const { return names_; }
  const VectorXd& x0() const { return x0_; }

  const Expr& flow(int i, int j) const { return flows_[i * n_ + j]; }  // j -> i, 0-based
  const Expr& input(int i) const { return inputs_[i]; }
  const Expr& output(int i) const { return outputs_[i]; }

  bool has_flow(int i, int j) const { return !flow(i, j).is_zero_constant(); }
  bool has_output(int i) const { return !output(i).is_zero_constant(); }
  bool has_input(int i) const { return !input(i).is_zero_constant(); }

  /// True when every flow/output is c*x_donor and every input is constant or
  /// time-only; such models route to the closed-form linear solver.
  bool is_linear() const;

  /// Copy with inputs and outputs replaced by zero (the closed system used
  /// by the conservation diagnostics).
  CompartmentalModel closed() const;

 private:
  int n_;
  std::string name_;
  std::vector<std::string> names_;
  std::vector<Expr> flows_;   // row-major n*n, flows_[i*n+j] = f_ij
  std::vector<Expr> inputs_;  // z_i
  std::vector<Expr> outputs_; // y_i
  VectorXd x0_;
};

/// All instantaneous system-level matrices at one (t, x) point.
struct FlowSnapshot {
  double t = 0.0;
  VectorXd x;
  MatrixXd F;        // intercompartmental flows, F(i,j) = f_ij
  VectorXd z, y;     // external inputs and outputs
  VectorXd tau_in;   // inward throughflow  z + F*1
  VectorXd tau_out;  // outward throughflow y + F^T*1; diag(tau_out) is the T matrix
  MatrixXd A;        // flow intensity (F - T) X^-1, guarded on the state floor
  VectorXd r;        // residence times x_i / tau_out_i (0 where tau_out <= eps)
  MatrixXd Qx;       // F X^-1
  MatrixXd Qtau;     // F T^-1
};

/// Evaluates every instantaneous matrix at (t, x). Throws NegativeFlow when a
/// flow, input, or output evaluates below -kEpsFlow; values in [-kEpsFlow, 0)
/// are clamped to zero.
FlowSnapshot snapshot(const CompartmentalModel& model, double t, const VectorXd& x);

/// z + (F - T)*1 assembled per compartment (Eq. of motion of the original
/// system). Identical to tau_in - tau_out.
VectorXd rhs_original(const CompartmentalModel& model, double t, const VectorXd& x);

struct ConservationSample {
  double t;
  VectorXd x;
  double residual;          // |1^T (F 1 - F^T 1)| with inputs/outputs zeroed
  VectorXd net_internal;    // per-compartment F 1 - F^T 1 (informational)
  bool finite;              // false when any closed-system flow is non-finite
};

struct ConservationReport {
  std::vector<ConservationSample> samples;
  bool pass = true;  // every residual < 1e-10 * ||F|| and all flows finite
};

/// Closed-system conservation diagnostic (inputs and outputs substituted by
/// zero at each sample).
ConservationReport check_conservative(const CompartmentalModel& model,
                                      const std::vector<std::pair<double, VectorXd>>& samples);

}  // namespace decompart
