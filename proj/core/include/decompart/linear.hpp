#pragma once

#include <functional>
#include <vector>

#include "decompart/model.hpp"

namespace decompart {

/// Linear compartmental model dx/dt = z(t) + A x with constant intensity
/// matrix A. Construction from a CompartmentalModel succeeds only when every
/// flow and output is c*x_donor and every input is constant or time-only.
struct LinearModel {
  MatrixXd A;
  std::vector<Expr> z;  // input expressions, state-free
  VectorXd x0;

  static LinearModel from_model(const CompartmentalModel& model);

  VectorXd z_at(double t) const;
  bool constant_input() const;
};

/// V(t0 + dt) = exp(dt * A), with V(t0) = I. Uses the eigendecomposition
/// when A is diagonalizable with a well-conditioned eigenvector basis and
/// falls back to scaling-and-squaring otherwise.
MatrixXd fundamental_matrix(const MatrixXd& A, double dt);

struct LinearSolution {
  std::vector<double> times;
  std::vector<MatrixXd> X;      // substorage matrices
  std::vector<MatrixXd> Xinit;  // V(t) * diag(x0)
  std::vector<VectorXd> x;      // row sums of Xinit + X
};

/// Closed-form trajectory of the decomposed linear system:
///   Xinit(t) = V(t) X0,   X(t) = integral of V(t) V(s)^-1 Z(s) ds.
/// Constant inputs use the (exp(dt A) - I) A^-1 Z antiderivative when A is
/// invertible; otherwise the columns are integrated by adaptive quadrature.
LinearSolution solve_linear(const LinearModel& lm, const std::vector<double>& t_samples,
                            double t0 = 0.0, double quad_tol = 1e-10);

/// Transient substorage generated at one node by an inflow series:
///   x(t) = integral_{t1}^{t} exp(-integral_s^t r_inv) f_in(s) ds
/// via nested adaptive quadrature.
double analytic_transient_storage(const std::function<double(double)>& r_inv,
                                  const std::function<double(double)>& f_in, double t1, double t,
                                  double tol = 1e-10);

}  // namespace decompart
