#include "decompart/decomposition.hpp"

namespace decompart {

DecomposedState DecomposedState::initial(const CompartmentalModel& model, double t0) {
  DecomposedState ds;
  ds.t = t0;
  ds.x = model.x0();
  ds.X = MatrixXd::Zero(model.n(), model.n());
  ds.Xinit = model.x0().asDiagonal();
  return ds;
}

SubflowMatrices decomposed_snapshot(const CompartmentalModel& model, double t,
                                    const DecomposedState& ds) {
  const int n = model.n();
  SubflowMatrices m;
  m.sys = snapshot(model, t, ds.x);

  const VectorXd& x = ds.x;
  VectorXd x0v = ds.x0_vec();

  m.D.setZero(n, n);
  m.D0.setZero(n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) m.D(j, k) = guarded_ratio(ds.X(j, k), x[j]);
    m.D0[j] = guarded_ratio(x0v[j], x[j]);
  }

  // F_k = F diag(X^-1 X[:,k]); index 0 carries the initial subsystem.
  m.Fk.resize(static_cast<std::size_t>(n) + 1);
  m.Fk[0] = m.sys.Qx * x0v.asDiagonal();
  for (int k = 0; k < n; ++k) m.Fk[k + 1] = m.sys.Qx * ds.X.col(k).asDiagonal();
  m.Fk_init.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) m.Fk_init[k] = m.sys.Qx * ds.Xinit.col(k).asDiagonal();

  m.Ttilde = m.sys.Qx * ds.X;
  m.Tin = m.Ttilde;
  m.Tin.diagonal() += m.sys.z;
  MatrixXd Rinv = VectorXd(m.sys.tau_out.binaryExpr(x, [](double tau, double xi) {
                     return guarded_ratio(tau, xi);
                   })).asDiagonal();
  m.Tout = Rinv * ds.X;
  m.Tin_init = m.sys.Qx * ds.Xinit;
  m.Tout_init = Rinv * ds.Xinit;
  return m;
}

DecomposedRhs rhs_decomposed(const CompartmentalModel& model, double t,
                             const DecomposedState& ds) {
  FlowSnapshot s = snapshot(model, t, ds.x);
  DecomposedRhs rhs;
  rhs.dX = s.A * ds.X;
  rhs.dX.diagonal() += s.z;
  rhs.dXinit = s.A * ds.Xinit;
  return rhs;
}

Aggregate aggregate(const DecomposedState& ds) {
  Aggregate a;
  a.xbar = ds.xbar();
  a.xinit = ds.x0_vec();
  a.x = a.xbar + a.xinit;
  return a;
}

VectorXd select_combination(const DecomposedState& ds, const std::vector<int>& alpha,
                            const std::vector<int>& beta) {
  const int n = static_cast<int>(ds.X.cols());
  if (static_cast<int>(alpha.size()) != n || static_cast<int>(beta.size()) != n)
    throw SchemaError("alpha/beta masks must have one entry per compartment");
  VectorXd out = VectorXd::Zero(ds.X.rows());
  for (int k = 0; k < n; ++k) {
    if (alpha[k]) out += ds.X.col(k);
    if (beta[k]) out += ds.Xinit.col(k);
  }
  return out;
}

}  // namespace decompart
