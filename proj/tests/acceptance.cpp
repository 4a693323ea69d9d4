// Acceptance suite: one line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "decompart/check.hpp"
#include "decompart/diact.hpp"
#include "decompart/linear.hpp"
#include "../tests/fixtures.hpp"

using namespace decompart;
namespace fx = decompart::fixtures;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %d: %-34s %s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  if (!pass) ++failures;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return v;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// 1. Hippe constant input: decomposed numeric integration vs the closed
//    forms of X(t), Xinit(t) at 50 samples, 1e-6 abs, under 1 second.
void criterion1() {
  Timer timer;
  CompartmentalModel m = fx::hippe();
  IntegratorConfig cfg;
  cfg.t_end = 5.0;
  cfg.sample_grid = linspace(0.0, 5.0, 50);
  DecomposedTrajectory traj = integrate(m, cfg);
  double worst = 0.0;
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    double t = traj.times[s];
    worst = std::max(worst, (traj.states[s].X - fx::hippe_X_exact(t)).lpNorm<Eigen::Infinity>());
    worst = std::max(worst,
                     (traj.states[s].Xinit - fx::hippe_Xinit_exact(t)).lpNorm<Eigen::Infinity>());
  }
  double secs = timer.seconds();
  report(1, "Hippe analytic regression", worst < 1e-6 && secs < 1.0,
         "max |err| = " + fmt("%.2e", worst) + ", runtime " + fmt("%.3f", secs) + " s");
}

// 2. Hippe time-dependent input: substorages within 1e-6 on [0, 10] and
//    inward subthroughflows within 1e-5.
void criterion2() {
  CompartmentalModel m = fx::hippe_timedep();
  IntegratorConfig cfg;
  cfg.t_end = 10.0;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-12;
  cfg.sample_grid = linspace(0.0, 10.0, 81);
  DecomposedTrajectory traj = integrate(m, cfg);
  double worst_x = 0.0, worst_tin = 0.0;
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    double t = traj.times[s];
    worst_x = std::max(
        worst_x, (traj.states[s].X - fx::hippe_timedep_X_exact(t)).lpNorm<Eigen::Infinity>());
    SubflowMatrices sub = decomposed_snapshot(m, t, traj.states[s]);
    worst_tin = std::max(
        worst_tin, (sub.Tin - fx::hippe_timedep_Tin_exact(t)).lpNorm<Eigen::Infinity>());
    VectorXd tin0 = sub.Tin_init.rowwise().sum();
    worst_tin = std::max(
        worst_tin, (tin0 - fx::hippe_timedep_Tin_init_exact(t)).lpNorm<Eigen::Infinity>());
  }
  report(2, "Hippe time-dependent input", worst_x < 1e-6 && worst_tin < 1e-5,
         "max |X err| = " + fmt("%.2e", worst_x) + ", max |Tin err| = " + fmt("%.2e", worst_tin));
}

// 3. Hippe static decomposition: X = [[7/9, 2/9], [4/9, 5/9]] within 1e-12.
void criterion3() {
  FlowSnapshot s = snapshot(fx::hippe(), 0.0, VectorXd::Ones(2));
  StaticDecomposition dec = static_decompose(StaticSystem::from_snapshot(s));
  MatrixXd expected(2, 2);
  expected << 7.0 / 9, 2.0 / 9, 4.0 / 9, 5.0 / 9;
  double err = dec.X ? (*dec.X - expected).lpNorm<Eigen::Infinity>()
                     : std::numeric_limits<double>::infinity();
  report(3, "Hippe static decomposition", err < 1e-12, "max |err| = " + fmt("%.2e", err));
}

// 4. SIRS equilibrium: state within 1e-2, residence times within 5e-2,
//    terminal-snapshot static diact within 5e-3 per entry, under 5 seconds.
void criterion4() {
  Timer timer;
  CompartmentalModel m = fx::sirs();
  IntegratorConfig cfg;
  cfg.t_end = 500.0;
  cfg.sample_grid = {500.0};
  DecomposedTrajectory traj = integrate(m, cfg, IntegrationMode::Original);
  VectorXd eq(3);
  eq << 18.929, 2.890, 4.281;
  double state_err = (traj.terminal.x - eq).lpNorm<Eigen::Infinity>();

  FlowSnapshot snap = snapshot(m, 500.0, traj.terminal.x);
  ResidenceReport rr = residence_times(snap);
  VectorXd r_ref(3);
  r_ref << 45.08, 9.43, 37.04;
  double r_err = (rr.r - r_ref).lpNorm<Eigen::Infinity>();

  StaticDiact d = static_diact(StaticSystem::from_snapshot(snap));
  MatrixXd Ti(3, 3), Xi(3, 3);
  Ti << 0.090, 0.090, 0, 0, 0.066, 0.066, 0.116, 0, 0.025;
  Xi << 4.053, 4.053, 0, 0, 0.619, 0.619, 4.281, 0, 0.917;
  double diact_err =
      std::max((d.T[static_cast<int>(DiactKind::Indirect)] - Ti).lpNorm<Eigen::Infinity>(),
               (d.X[static_cast<int>(DiactKind::Indirect)] - Xi).lpNorm<Eigen::Infinity>());
  double secs = timer.seconds();
  report(4, "SIRS equilibrium and static diact",
         state_err < 1e-2 && r_err < 5e-2 && diact_err < 5e-3 && secs < 5.0,
         "|x err| = " + fmt("%.1e", state_err) + ", |r err| = " + fmt("%.1e", r_err) +
             ", |diact err| = " + fmt("%.1e", diact_err) + ", runtime " + fmt("%.2f", secs) +
             " s");
}

// 5. SIRS diact storage dynamics: x^i_31(500) = 4.27 +- 0.05 and the
//    stock-derived variant below 0.05.
void criterion5() {
  CompartmentalModel m = fx::sirs();
  IntegratorConfig cfg;
  cfg.t_end = 500.0;
  cfg.sample_grid = linspace(0.0, 500.0, 51);
  DecomposedTrajectory traj = integrate(m, cfg);
  DiactOptions opts;
  opts.kinds = {DiactKind::Indirect};
  DiactSeries series = compute_diact_series(m, traj, opts);
  double xi31 = series.storages[0][0].back()(2, 0);
  double xi31_init = series.storages[0][2].back()(2, 0);
  report(5, "SIRS indirect storage dynamics",
         std::abs(xi31 - 4.27) <= 0.05 && xi31_init < 0.05,
         "x^i_31(500) = " + fmt("%.3f", xi31) + ", stock-derived " + fmt("%.3f", xi31_init));
}

// 6. SIRS transient outputs: the sigma-terminal flow at t = 500 and the
//    exact sigma/mu terminal ratio along the sibling paths.
void criterion6() {
  LoadedDocument doc = fx::sirs_doc();
  CompartmentalModel m = *doc.model;
  auto prog = std::make_shared<PathProgram>(PathProgram::compile(m, doc.paths, 6, 0.0));
  IntegratorConfig cfg;
  cfg.t_end = 500.0;
  cfg.sample_grid = linspace(0.0, 500.0, 101);
  DecomposedTrajectory traj = integrate(m, cfg, IntegrationMode::DecomposedWithPaths, prog);

  // paths 1 and 2 of the document are the sigma / mu siblings
  int sigma = -1, mu = -1;
  for (std::size_t pi = 0; pi < prog->paths().size(); ++pi) {
    if (!prog->paths()[pi].terminal_output) continue;
    (sigma < 0 ? sigma : mu) = static_cast<int>(pi);
  }
  double terminal_sigma = 0.0;
  double worst_ratio = 0.0;
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    FlowSnapshot sys = snapshot(m, traj.times[s], traj.states[s].x);
    VectorXd f = prog->terminal_flows(traj.times[s], sys, traj.path_states[s]);
    if (traj.times[s] == 500.0) terminal_sigma = f[sigma];
    worst_ratio = std::max(worst_ratio, std::abs(f[sigma] - 10.0 * f[mu]));
  }
  report(6, "SIRS transient outputs",
         std::abs(terminal_sigma - 0.027) <= 0.003 && worst_ratio < 1e-6,
         "f_sigma(500) = " + fmt("%.4f", terminal_sigma) + ", max |f_s - 10 f_mu| = " +
             fmt("%.1e", worst_ratio));
}

// 7. Cone Spring static analysis against the published matrices.
void criterion7() {
  StaticSystem s = fx::cone_spring();
  StaticDecomposition dec = static_decompose(s);
  StaticDiact d = static_diact(s);

  MatrixXd T_ref(5, 5), X_ref(5, 5), Ti(5, 5), Tt(5, 5), Tc(5, 5), Ta(5, 5);
  T_ref << 11184, 0, 0, 0, 0, 10717, 766, 0, 0, 0, 4858, 347, 0, 0, 0, 2225, 159, 0, 0, 0, 345,
      25, 0, 0, 0;
  X_ref << 285, 0, 0, 0, 0, 3340.5, 238.9, 0, 0, 0, 108.8, 7.8, 0, 0, 0, 56.0, 4.0, 0, 0, 0,
      15.9, 1.1, 0, 0, 0;
  Ti << 0, 0, 0, 0, 0, 1835.74, 1967.00, 63.02, 226.41, 31.04, 4857.67, 0, 753.81, 193.28, 89.76,
      2224.91, 75.00, 334.40, 88.52, 41.11, 345.31, 370.00, 63.53, 0, 6.38;
  Tt << 0, 0, 0, 0, 0, 10716.74, 1967.00, 1663.02, 426.42, 198.04, 4857.67, 5205.00, 753.81,
      193.28, 89.76, 2224.91, 2384.00, 409.40, 88.53, 41.12, 345.31, 370.00, 63.54, 370.00, 6.38;
  Tc << 0, 0, 0, 0, 0, 1835.74, 131.26, 0, 0, 0, 703.51, 50.30, 0, 0, 0, 82.62, 5.91, 0, 0, 0,
      5.96, 0.43, 0, 0, 0;
  Ta << 11184, 0, 0, 0, 0, 8881, 635, 0, 0, 0, 4154.16, 297.03, 0, 0, 0, 2142.30, 153.18, 0, 0,
      0, 339.35, 24.26, 0, 0, 0;

  double t_err = (dec.T - T_ref).lpNorm<Eigen::Infinity>();
  double x_err = dec.X ? (*dec.X - X_ref).lpNorm<Eigen::Infinity>()
                       : std::numeric_limits<double>::infinity();
  double d_err = std::max(
      {(d.T[static_cast<int>(DiactKind::Indirect)] - Ti).lpNorm<Eigen::Infinity>(),
       (d.T[static_cast<int>(DiactKind::Transfer)] - Tt).lpNorm<Eigen::Infinity>(),
       (d.Tsimple[static_cast<int>(DiactKind::Cycling)] - Tc).lpNorm<Eigen::Infinity>(),
       (d.Tsimple[static_cast<int>(DiactKind::Acyclic)] - Ta).lpNorm<Eigen::Infinity>()});
  const MatrixXd& TiGot = d.T[static_cast<int>(DiactKind::Indirect)];
  bool zeros = TiGot.row(0).lpNorm<Eigen::Infinity>() < 1e-9 && std::abs(TiGot(2, 1)) < 1e-9 &&
               std::abs(TiGot(4, 3)) < 1e-9;
  report(7, "Cone Spring static analysis", t_err < 0.5 && x_err < 0.5 && d_err < 0.05 && zeros,
         "|T err| = " + fmt("%.2f", t_err) + ", |X err| = " + fmt("%.2f", x_err) +
             ", |diact err| = " + fmt("%.3f", d_err) + std::string(zeros ? "" : ", zeros broken"));
}

// 8. Property suites through the same entry point the CLI `check` uses.
void criterion8() {
  bool pass = true;
  std::string detail;
  struct Job {
    const char* file;
    double t_end;
  };
  for (const Job& job : {Job{"/hippe.json", 5.0}, Job{"/hippe_timedep.json", 5.0},
                         Job{"/sirs.json", 50.0}, Job{"/cone_spring.json", 5.0}}) {
    LoadedDocument doc = load_model(fx::models_dir() + job.file);
    CheckOptions opts;
    opts.t_end = job.t_end;
    opts.cycles = 8;
    std::vector<CheckResult> results = run_model_checks(doc, opts);
    for (const auto& r : results) {
      if (!r.pass) {
        pass = false;
        detail += std::string(job.file) + ":" + r.name + "; ";
      }
    }
  }
  report(8, "property suites (check)", pass, pass ? "all suites green" : detail);
}

// 9. Order verification (observed order >= 4). Halving the tolerances of a
//    sound adaptive controller halves the error (tolerance proportionality),
//    which cannot expose the method order, so the order is measured where it
//    is observable: halving the step size, gated at 2^4 = 16x. The literal
//    tolerance-halving ratio is reported alongside for transparency.
void criterion9() {
  CompartmentalModel m = fx::hippe();
  auto err_of = [&](const DecomposedTrajectory& traj) {
    double err = (traj.terminal.X - fx::hippe_X_exact(5.0)).lpNorm<Eigen::Infinity>();
    return std::max(err,
                    (traj.terminal.Xinit - fx::hippe_Xinit_exact(5.0)).lpNorm<Eigen::Infinity>());
  };
  auto run_h = [&](double h) {
    IntegratorConfig cfg;
    cfg.t_end = 5.0;
    cfg.rtol = 1e-2;
    cfg.atol = 1e-2;
    cfg.h0 = h;
    cfg.hmax = h;
    cfg.sample_grid = {5.0};
    return err_of(integrate(m, cfg));
  };
  auto run_tol = [&](double tol) {
    IntegratorConfig cfg;
    cfg.t_end = 5.0;
    cfg.rtol = tol;
    cfg.atol = tol;
    cfg.sample_grid = {5.0};
    return err_of(integrate(m, cfg));
  };
  double order_ratio = run_h(0.5) / run_h(0.25);
  double tol_ratio = run_tol(1e-6) / run_tol(5e-7);
  double order = std::log2(order_ratio);
  report(9, "order verification", order_ratio >= 16.0,
         "step halving: " + fmt("%.0f", order_ratio) + "x (order " + fmt("%.1f", order) +
             "); tolerance halving: " + fmt("%.1f", tol_ratio) + "x");
}

}  // namespace

int main() {
  std::vector<std::function<void()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                 criterion5, criterion6, criterion7, criterion8,
                                                 criterion9};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), "exception", false, e.what());
    }
  }
  if (failures == 0) {
    std::printf("acceptance: all %zu criteria passed\n", criteria.size());
  } else {
    std::printf("acceptance: %d criterion(s) FAILED\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
