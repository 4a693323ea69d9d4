#include "decompart/diact.hpp"

#include <algorithm>
#include <cmath>

namespace decompart {

namespace {

VectorXd guarded_inverse(const VectorXd& v, std::vector<int>* degenerate) {
  VectorXd inv = VectorXd::Zero(v.size());
  for (int i = 0; i < v.size(); ++i) {
    if (v[i] <= kEpsState) {
      if (degenerate) degenerate->push_back(i);
    } else {
      inv[i] = 1.0 / v[i];
    }
  }
  return inv;
}

}  // namespace

DiactDistribution diact_distribution(const SubflowMatrices& sub) {
  const int n = static_cast<int>(sub.Tin.rows());
  DiactDistribution dist;

  VectorXd tout_diag = sub.Tout.diagonal();       // tau-hat_{k_k}
  VectorXd ttilde_diag = sub.Ttilde.diagonal();   // tau-tilde_{k_k}
  VectorXd sinv = guarded_inverse(tout_diag, &dist.degenerate);

  auto& Nd = dist.N[static_cast<int>(DiactKind::Direct)];
  auto& Ni = dist.N[static_cast<int>(DiactKind::Indirect)];
  auto& Na = dist.N[static_cast<int>(DiactKind::Acyclic)];
  auto& Nc = dist.N[static_cast<int>(DiactKind::Cycling)];
  auto& Nt = dist.N[static_cast<int>(DiactKind::Transfer)];

  Nd = sub.sys.Qtau;
  Nt = sub.Ttilde * sinv.asDiagonal();
  // row scaling tau-tilde_{k_k} / tau-hat_{k_k}, guarded like the columns
  VectorXd loop_ratio(n);
  for (int k = 0; k < n; ++k) loop_ratio[k] = ttilde_diag[k] * sinv[k];
  Nc = loop_ratio.asDiagonal() * sub.Tout * sinv.asDiagonal();
  Ni = Nt - Nd;
  Na = Nt - Nc;

  // zero every kind on degenerate columns so the defining identities still
  // hold entrywise
  for (int k : dist.degenerate)
    for (auto& N : dist.N) N.col(k).setZero();
  return dist;
}

DiactFlows diact_flows(const DiactDistribution& dist, const SubflowMatrices& sub) {
  DiactFlows out;
  VectorXd that0 = sub.Tout_init.rowwise().sum();       // outward subthroughflow of the
                                                        // initial subsystem, per compartment
  VectorXd active = sub.sys.tau_out - that0;            // input-generated outward throughflow
  VectorXd tout_diag = sub.Tout.diagonal();
  VectorXd tout_init_diag = sub.Tout_init.diagonal();
  for (int k = 0; k < 5; ++k) {
    out.T[k] = dist.N[k] * active.asDiagonal();
    out.Tsimple[k] = dist.N[k] * tout_diag.asDiagonal();
    out.Tinit[k] = dist.N[k] * that0.asDiagonal();
    out.Tsimple_init[k] = dist.N[k] * tout_init_diag.asDiagonal();
  }
  return out;
}

MatrixXd diact_subsystem_flow(const DiactDistribution& dist, const SubflowMatrices& sub,
                              DiactKind kind, int subsystem) {
  VectorXd that_l;
  if (subsystem == 0) {
    that_l = sub.Tout_init.rowwise().sum();
  } else {
    that_l = sub.Tout.col(subsystem - 1);
  }
  return dist.N[static_cast<int>(kind)] * that_l.asDiagonal();
}

DiactSeries compute_diact_series(const CompartmentalModel& model, const DecomposedTrajectory& traj,
                                 const DiactOptions& opts) {
  const int n = model.n();
  const int nk = static_cast<int>(opts.kinds.size());
  DiactSeries series;
  series.times = traj.times;
  series.kinds = opts.kinds;
  series.flows.resize(opts.kinds.size());
  series.N.resize(opts.kinds.size());

  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    SubflowMatrices sub = decomposed_snapshot(model, traj.times[s], traj.states[s]);
    DiactDistribution dist = diact_distribution(sub);
    DiactFlows flows = diact_flows(dist, sub);
    for (int d : dist.degenerate) series.degeneracies.emplace_back(traj.times[s], d);
    for (int ki = 0; ki < nk; ++ki) {
      int k = static_cast<int>(opts.kinds[static_cast<std::size_t>(ki)]);
      series.N[static_cast<std::size_t>(ki)].push_back(dist.N[k]);
      auto& f = series.flows[static_cast<std::size_t>(ki)];
      f[0].push_back(flows.T[k]);
      f[1].push_back(flows.Tsimple[k]);
      f[2].push_back(flows.Tinit[k]);
      f[3].push_back(flows.Tsimple_init[k]);
    }
  }

  if (!opts.storages || traj.times.empty()) return series;
  series.has_storages = true;
  series.storages.resize(opts.kinds.size());

  // post-pass: d x*/dt = tau*(t) - (tau_out_i / x_i) x*, stacked over
  // kinds x variants, driven by the trajectory's dense output
  const int block = n * n;
  const int total = nk * 4 * block;
  double t1 = std::isnan(opts.t1) ? traj.t0 : opts.t1;

  auto rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
    if (dy.size() != y.size()) dy.resize(y.size());
    DecomposedState ds = traj.state_at(t);
    SubflowMatrices sub = decomposed_snapshot(model, t, ds);
    DiactDistribution dist = diact_distribution(sub);
    DiactFlows flows = diact_flows(dist, sub);
    VectorXd out_intensity(n);
    for (int i = 0; i < n; ++i)
      out_intensity[i] = guarded_ratio(sub.sys.tau_out[i], sub.sys.x[i]);
    for (int ki = 0; ki < nk; ++ki) {
      int k = static_cast<int>(opts.kinds[static_cast<std::size_t>(ki)]);
      const MatrixXd* tv[4] = {&flows.T[k], &flows.Tsimple[k], &flows.Tinit[k],
                               &flows.Tsimple_init[k]};
      for (int v = 0; v < 4; ++v) {
        int off = (ki * 4 + v) * block;
        Eigen::Map<const MatrixXd> Xs(y.data() + off, n, n);
        Eigen::Map<MatrixXd> dXs(dy.data() + off, n, n);
        dXs = *tv[v] - out_intensity.asDiagonal() * Xs;
      }
    }
  };

  IntegratorConfig cfg;
  cfg.t0 = t1;
  cfg.t_end = traj.t_end;
  cfg.rtol = opts.rtol;
  cfg.atol = opts.atol;
  cfg.sample_grid.clear();
  for (double t : traj.times)
    if (t >= t1) cfg.sample_grid.push_back(t);
  if (cfg.sample_grid.empty() || cfg.sample_grid.back() < traj.t_end)
    cfg.sample_grid.push_back(traj.t_end);

  OdeResult ode = integrate_ode(rhs, VectorXd::Zero(total), cfg);

  // samples before t1 are identically zero
  std::size_t pre = 0;
  while (pre < traj.times.size() && traj.times[pre] < t1) ++pre;
  for (int ki = 0; ki < nk; ++ki)
    for (int v = 0; v < 4; ++v)
      series.storages[static_cast<std::size_t>(ki)][static_cast<std::size_t>(v)].assign(
          pre, MatrixXd::Zero(n, n));

  for (std::size_t s = 0; s < ode.samples.size(); ++s) {
    if (s + pre >= traj.times.size() &&
        std::abs(ode.sample_times[s] - traj.t_end) > 1e-12)
      break;
    for (int ki = 0; ki < nk; ++ki) {
      for (int v = 0; v < 4; ++v) {
        int off = (ki * 4 + v) * block;
        Eigen::Map<const MatrixXd> Xs(ode.samples[s].data() + off, n, n);
        auto& dst = series.storages[static_cast<std::size_t>(ki)][static_cast<std::size_t>(v)];
        if (dst.size() < traj.times.size()) dst.push_back(Xs);
      }
    }
  }
  return series;
}

PathDiactCheck path_based_diact_check(const CompartmentalModel& model,
                                      const IntegratorConfig& config, int subsystem,
                                      std::pair<int, int> entry, DiactKind kind, int cycles) {
  const int n = model.n();
  if (n > 4) throw PathSetTooLarge("path-based diact check is limited to n <= 4");
  const int i = entry.first, k = entry.second;
  if (i < 1 || i > n || k < 1 || k > n) throw SchemaError("diact check entry out of range");

  if (subsystem >= 1 && k != subsystem &&
      kind != DiactKind::Direct)
    throw SchemaError("path check in an input subsystem supports k = subsystem except for the direct kind");
  if (subsystem == 0 && kind != DiactKind::Direct && !(kind == DiactKind::Cycling && i == k))
    throw SchemaError("path check in the initial subsystem supports direct entries and the cycling diagonal");
  if (kind == DiactKind::Indirect || kind == DiactKind::Acyclic)
    throw SchemaError("indirect/acyclic follow from transfer-direct and transfer-cycling");

  NaturalDecomposition nat = natural_decomposition(model, subsystem, cycles);
  auto program = std::make_shared<PathProgram>(
      PathProgram::compile(model, nat.specs, cycles, config.t0));

  DecomposedTrajectory traj =
      integrate(model, config, IntegrationMode::DecomposedWithPaths, program);

  // classify visits once
  const auto& visits = program->visits();
  std::vector<char> counted(visits.size(), 0);
  for (std::size_t v = 0; v < visits.size(); ++v) {
    const auto& vis = visits[v];
    if (vis.node != i - 1) continue;
    bool take = false;
    switch (kind) {
      case DiactKind::Direct:
        take = vis.parent >= 0 && visits[static_cast<std::size_t>(vis.parent)].node == k - 1;
        break;
      case DiactKind::Transfer:
        take = vis.parent >= 0;  // every internal arrival; roots carry the local input
        break;
      case DiactKind::Cycling:
        // an arrival is cycling when the flow has already resided at node i
        take = vis.has_same_node_ancestor;
        break;
      default:
        break;
    }
    if (take) counted[v] = 1;
  }

  PathDiactCheck rep;
  rep.times = traj.times;
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const DecomposedState& ds = traj.states[s];
    FlowSnapshot sys = snapshot(model, traj.times[s], ds.x);
    SubflowMatrices sub = decomposed_snapshot(model, traj.times[s], ds);
    DiactDistribution dist = diact_distribution(sub);

    double formula_flow;
    if (subsystem == 0) {
      VectorXd that0 = sub.Tout_init.rowwise().sum();
      formula_flow = dist.N[static_cast<int>(kind)](i - 1, k - 1) * that0[k - 1];
    } else {
      formula_flow =
          dist.N[static_cast<int>(kind)](i - 1, k - 1) * sub.Tout(k - 1, subsystem - 1);
    }

    const VectorXd& p = traj.path_states[s];
    VectorXd inflow = program->inflows(traj.times[s], sys, ds, p);
    double path_flow = 0.0, path_storage = 0.0;
    for (std::size_t v = 0; v < visits.size(); ++v) {
      if (!counted[v]) continue;
      path_flow += inflow[static_cast<int>(v)];
      path_storage += p[static_cast<int>(v)];
    }
    rep.path_flow.push_back(path_flow);
    rep.formula_flow.push_back(formula_flow);
    rep.max_flow_diff = std::max(rep.max_flow_diff, std::abs(path_flow - formula_flow));
    rep.path_storage.push_back(path_storage);
  }

  // formula-side storage: integrate the formula flow with the compartment's
  // outward intensity, sampled on the same grid
  {
    auto rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
      if (dy.size() != 1) dy.resize(1);
      DecomposedState ds = traj.state_at(t);
      SubflowMatrices sub = decomposed_snapshot(model, t, ds);
      DiactDistribution dist = diact_distribution(sub);
      double flow;
      if (subsystem == 0) {
        flow = dist.N[static_cast<int>(kind)](i - 1, k - 1) * sub.Tout_init.rowwise().sum()[k - 1];
      } else {
        flow = dist.N[static_cast<int>(kind)](i - 1, k - 1) * sub.Tout(k - 1, subsystem - 1);
      }
      dy[0] = flow - guarded_ratio(sub.sys.tau_out[i - 1], sub.sys.x[i - 1]) * y[0];
    };
    IntegratorConfig cfg = config;
    cfg.sample_grid = traj.times;
    OdeResult ode = integrate_ode(rhs, VectorXd::Zero(1), cfg);
    for (std::size_t s = 0; s < ode.samples.size() && s < rep.times.size(); ++s) {
      rep.formula_storage.push_back(ode.samples[s][0]);
      rep.max_storage_diff =
          std::max(rep.max_storage_diff, std::abs(rep.path_storage[s] - ode.samples[s][0]));
    }
  }

  // tail estimate: contribution of the deepest cycle layer at the end time
  {
    const VectorXd& p = traj.terminal_path_state;
    double deepest = 0.0, prev = 0.0;
    int max_cycle = 1;
    for (const auto& vis : visits) max_cycle = std::max(max_cycle, vis.cycle_index);
    for (std::size_t v = 0; v < visits.size(); ++v) {
      if (visits[v].cycle_index == max_cycle) deepest += std::abs(p[static_cast<int>(v)]);
      if (visits[v].cycle_index == max_cycle - 1) prev += std::abs(p[static_cast<int>(v)]);
    }
    double rho = prev > 0.0 ? std::min(0.9, deepest / prev) : 0.0;
    rep.truncation_tail = rho < 1.0 ? deepest * rho / (1.0 - rho) : deepest;
  }
  return rep;
}

}  // namespace decompart
