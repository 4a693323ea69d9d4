#include "decompart/static_analysis.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "decompart/integrator.hpp"

namespace decompart {

StaticSystem StaticSystem::build(MatrixXd F, VectorXd z, VectorXd y, std::optional<VectorXd> x) {
  const int n = static_cast<int>(z.size());
  if (F.rows() != n || F.cols() != n || y.size() != n || (x && x->size() != n))
    throw SchemaError("static system blocks must share the compartment count");
  if ((F.array() < -kEpsFlow).any() || (z.array() < -kEpsFlow).any() ||
      (y.array() < -kEpsFlow).any())
    throw SchemaError("static system flows must be nonnegative");

  StaticSystem s;
  s.F = std::move(F);
  s.z = std::move(z);
  s.y = std::move(y);
  s.x = std::move(x);

  VectorXd tau_in = s.z + s.F.rowwise().sum();
  VectorXd tau_out = s.y + s.F.colwise().sum().transpose();
  double scale = std::max(tau_in.lpNorm<Eigen::Infinity>(), 1e-300);
  s.balance_residual_rel = (tau_in - tau_out).lpNorm<Eigen::Infinity>() / scale;
  s.balanced = s.balance_residual_rel < 1e-6;
  s.tau = tau_out;

  s.Qtau.setZero(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) s.Qtau(i, j) = guarded_ratio(s.F(i, j), s.tau[j]);

  Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(n, n) - s.Qtau);
  if (std::abs(lu.determinant()) < 1e-300)
    throw SingularMatrix("I - Qtau is singular; the flow network has no distribution inverse");
  s.N = lu.solve(MatrixXd::Identity(n, n));

  if (s.x) {
    s.r = VectorXd(n);
    for (int i = 0; i < n; ++i) (*s.r)[i] = guarded_ratio((*s.x)[i], s.tau[i]);
  }
  for (int k = 0; k < n; ++k)
    if (s.z[k] <= kEpsState) s.zero_input.push_back(k);
  return s;
}

StaticSystem StaticSystem::from_snapshot(const FlowSnapshot& snap) {
  return build(snap.F, snap.z, snap.y, snap.x);
}

StaticDecomposition static_decompose(const StaticSystem& s) {
  const int n = static_cast<int>(s.z.size());
  StaticDecomposition out;
  out.T = s.N * s.z.asDiagonal();
  if (s.x) {
    // X = -A^-1 Z with A = (F - T) X^-1, equivalently R N Z
    out.X = MatrixXd(s.r->asDiagonal()) * out.T;
  } else {
    out.notices.push_back("storages unavailable: static dataset has no x; substorage matrix omitted");
  }
  if (!s.zero_input.empty()) {
    std::string cols;
    for (int k : s.zero_input) cols += (cols.empty() ? "" : ",") + std::to_string(k + 1);
    out.notices.push_back("zero-input compartments {" + cols +
                          "}: corresponding substorage/subthroughflow columns are zero by the limit convention");
  }
  (void)n;
  return out;
}

StaticDiact static_diact(const StaticSystem& s) {
  const int n = static_cast<int>(s.z.size());
  StaticDiact out;
  out.zero_input = s.zero_input;

  const MatrixXd& N = s.N;
  VectorXd ndiag = N.diagonal();
  for (int k = 0; k < n; ++k)
    if (std::abs(ndiag[k]) <= kEpsState)
      throw SingularInput("diagonal of the flow distribution matrix vanishes at compartment " +
                          std::to_string(k + 1));
  VectorXd ninv = ndiag.cwiseInverse();

  MatrixXd NmI = N - MatrixXd::Identity(n, n);
  auto& Nd = out.N[static_cast<int>(DiactKind::Direct)];
  auto& Ni = out.N[static_cast<int>(DiactKind::Indirect)];
  auto& Na = out.N[static_cast<int>(DiactKind::Acyclic)];
  auto& Nc = out.N[static_cast<int>(DiactKind::Cycling)];
  auto& Nt = out.N[static_cast<int>(DiactKind::Transfer)];

  Nd = s.Qtau;
  Nt = NmI * ninv.asDiagonal();
  Ni = Nt - Nd;
  Na = (ninv.asDiagonal() * N - MatrixXd::Identity(n, n)) * ninv.asDiagonal();
  Nc = (N - ninv.asDiagonal() * N) * ninv.asDiagonal();

  MatrixXd That = s.N * s.z.asDiagonal();  // subthroughflow matrix
  VectorXd Tdiag = That.diagonal();

  out.storages_available = s.x.has_value();
  for (int k = 0; k < 5; ++k) {
    out.T[k] = out.N[k] * s.tau.asDiagonal();
    out.Tsimple[k] = out.N[k] * Tdiag.asDiagonal();
    if (out.storages_available) {
      out.S[k] = MatrixXd(s.r->asDiagonal()) * out.N[k];
      out.X[k] = out.S[k] * s.tau.asDiagonal();
      out.Xsimple[k] = out.S[k] * Tdiag.asDiagonal();
    }
  }
  // the acyclic arrivals at an input-receiving subcompartment include the
  // external input itself (its first entrance has no prior residence), so the
  // simple acyclic matrix carries Z on the diagonal; the distribution-level
  // identity Na + Nc = Nt is unaffected
  out.Tsimple[static_cast<int>(DiactKind::Acyclic)] += MatrixXd(s.z.asDiagonal());
  if (out.storages_available)
    out.Xsimple[static_cast<int>(DiactKind::Acyclic)] +=
        MatrixXd(s.r->asDiagonal()) * MatrixXd(s.z.asDiagonal());
  return out;
}

namespace {

ResidenceReport residence_from(const VectorXd& x, const VectorXd& tau_out) {
  const int n = static_cast<int>(x.size());
  ResidenceReport rep;
  rep.r.resize(n);
  for (int i = 0; i < n; ++i) {
    if (tau_out[i] <= kEpsState) {
      rep.r[i] = std::numeric_limits<double>::infinity();
      rep.infinite.push_back(i);
    } else {
      rep.r[i] = x[i] / tau_out[i];
    }
  }
  rep.ordering.resize(n);
  std::iota(rep.ordering.begin(), rep.ordering.end(), 0);
  std::sort(rep.ordering.begin(), rep.ordering.end(),
            [&](int a, int b) { return rep.r[a] < rep.r[b]; });
  return rep;
}

}  // namespace

ResidenceReport residence_times(const StaticSystem& s) {
  if (!s.x) throw SchemaError("residence times need storages");
  return residence_from(*s.x, s.tau);
}

ResidenceReport residence_times(const FlowSnapshot& s) { return residence_from(s.x, s.tau_out); }

ResidenceSeries residence_over_trajectory(const CompartmentalModel& model,
                                          const DecomposedTrajectory& traj) {
  const int n = model.n();
  const int m = static_cast<int>(traj.times.size());
  ResidenceSeries series;
  series.times = traj.times;
  series.r.setZero(m, n);
  series.rdot.setZero(m, n);
  for (int s = 0; s < m; ++s) {
    FlowSnapshot snap = snapshot(model, traj.times[static_cast<std::size_t>(s)],
                                 traj.states[static_cast<std::size_t>(s)].x);
    for (int i = 0; i < n; ++i)
      series.r(s, i) = snap.tau_out[i] <= kEpsState
                           ? std::numeric_limits<double>::infinity()
                           : snap.x[i] / snap.tau_out[i];
  }
  for (int s = 0; s < m; ++s) {
    int lo = std::max(0, s - 1), hi = std::min(m - 1, s + 1);
    double dt = series.times[static_cast<std::size_t>(hi)] - series.times[static_cast<std::size_t>(lo)];
    if (dt > 0.0)
      series.rdot.row(s) = (series.r.row(hi) - series.r.row(lo)) / dt;
  }
  return series;
}

}  // namespace decompart
