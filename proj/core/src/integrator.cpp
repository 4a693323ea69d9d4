#include "decompart/integrator.hpp"

#include <algorithm>
#include <cmath>

namespace decompart {

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kSafe = 0.9, kFacMin = 0.2, kFacMax = 10.0, kBeta = 0.04;
constexpr long kMaxSteps = 100000000L;

double error_norm(const VectorXd& err, const VectorXd& y0, const VectorXd& y1, double atol,
                  double rtol) {
  double sum = 0.0;
  for (int i = 0; i < err.size(); ++i) {
    double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    double q = err[i] / sc;
    sum += q * q;
  }
  return std::sqrt(sum / static_cast<double>(err.size()));
}

VectorXd eval_segment(const DenseOutput::Segment& s, double t) {
  double theta = (t - s.t0) / s.h;
  double theta1 = 1.0 - theta;
  return s.c[0] +
         theta * (s.c[1] + theta1 * (s.c[2] + theta * (s.c[3] + theta1 * s.c[4])));
}

}  // namespace

VectorXd DenseOutput::eval(double t) const {
  if (segments_.empty()) throw OutOfRange("dense output is empty");
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                             [](double v, const Segment& s) { return v < s.t0; });
  if (it != segments_.begin()) --it;
  const Segment& s = *it;
  const double lo = t_begin(), hi = t_end();
  if (t < lo - 1e-12 * std::max(1.0, std::abs(lo)) ||
      t > hi + 1e-12 * std::max(1.0, std::abs(hi)))
    throw OutOfRange("dense output evaluated outside [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
  return eval_segment(s, t);
}

double DenseOutput::t_begin() const { return segments_.front().t0; }
double DenseOutput::t_end() const {
  const Segment& s = segments_.back();
  return s.t0 + s.h;
}

OdeResult integrate_ode(const std::function<void(double, const VectorXd&, VectorXd&)>& rhs,
                        const VectorXd& y0, const IntegratorConfig& config,
                        const std::vector<double>& breakpoints) {
  const double t0 = config.t0, t_end = config.t_end;
  if (!(t_end > t0)) throw Error("t_end must exceed t0");
  const int dim = static_cast<int>(y0.size());

  std::vector<double> grid = config.sample_grid;
  if (grid.empty()) {
    grid.resize(201);
    for (int i = 0; i <= 200; ++i) grid[static_cast<std::size_t>(i)] = t0 + (t_end - t0) * i / 200.0;
  }
  for (double tg : grid)
    if (tg < t0 - 1e-12 || tg > t_end + 1e-12)
      throw OutOfRange("sample grid point " + std::to_string(tg) + " outside integration window");
  std::sort(grid.begin(), grid.end());

  // mandatory step endpoints: breakpoints inside (t0, t_end), then t_end
  std::vector<double> stops;
  for (double b : breakpoints)
    if (b > t0 && b < t_end) stops.push_back(b);
  stops.push_back(t_end);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  OdeResult res;
  res.dense = std::make_shared<DenseOutput>();

  VectorXd y = y0;
  VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
  VectorXd ytmp(dim), ynew(dim), err(dim);
  double t = t0;

  rhs(t, y, k1);  // a failure at the initial state is authoritative
  res.stats.rhs_evaluations++;

  std::size_t gi = 0;
  while (gi < grid.size() && grid[gi] <= t0) {
    res.sample_times.push_back(grid[gi]);
    res.samples.push_back(y0);
    ++gi;
  }

  // initial step: crude second-derivative probe, clipped to the first stop
  double h = config.h0;
  if (h <= 0.0) {
    double sc_norm = 0.0, f_norm = 0.0;
    for (int i = 0; i < dim; ++i) {
      double sc = config.atol + config.rtol * std::abs(y[i]);
      sc_norm += (y[i] / sc) * (y[i] / sc);
      f_norm += (k1[i] / sc) * (k1[i] / sc);
    }
    sc_norm = std::sqrt(sc_norm / dim);
    f_norm = std::sqrt(f_norm / dim);
    double h_guess = (sc_norm < 1e-10 || f_norm < 1e-10) ? 1e-6 : 0.01 * sc_norm / f_norm;
    h_guess = std::min(h_guess, (t_end - t0) / 10.0);
    try {
      ytmp = y + h_guess * k1;
      rhs(t + h_guess, ytmp, k2);
      res.stats.rhs_evaluations++;
      double d2 = 0.0;
      for (int i = 0; i < dim; ++i) {
        double sc = config.atol + config.rtol * std::abs(y[i]);
        double q = (k2[i] - k1[i]) / sc;
        d2 += q * q;
      }
      d2 = std::sqrt(d2 / dim) / h_guess;
      double der = std::max(f_norm, d2);
      double h1 = der > 1e-15 ? std::pow(0.01 / der, 0.2) : std::max(1e-6, h_guess * 1e-3);
      h = std::min({100.0 * h_guess, h1, t_end - t0});
    } catch (const Error&) {
      h = std::min(1e-6, t_end - t0);
    }
  }
  h = std::min(h, config.hmax);

  std::size_t stop_i = 0;
  double facold = 1e-4;
  bool last_step_failed_eval = false;

  while (t < t_end) {
    if (res.stats.steps++ > kMaxSteps) throw Error("step budget exhausted");
    while (stop_i < stops.size() && stops[stop_i] <= t + 1e-14 * std::max(1.0, std::abs(t)))
      ++stop_i;
    double next_stop = stop_i < stops.size() ? stops[stop_i] : t_end;
    if (t + h >= next_stop) h = next_stop - t;
    if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0))
      throw StepSizeUnderflow(t);

    bool eval_ok = true;
    try {
      ytmp = y + h * (a21 * k1);
      rhs(t + c2 * h, ytmp, k2);
      ytmp = y + h * (a31 * k1 + a32 * k2);
      rhs(t + c3 * h, ytmp, k3);
      ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
      rhs(t + c4 * h, ytmp, k4);
      ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      rhs(t + c5 * h, ytmp, k5);
      ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      rhs(t + h, ytmp, k6);
      ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      rhs(t + h, ynew, k7);
      res.stats.rhs_evaluations += 6;
    } catch (const NegativeFlow&) {
      eval_ok = false;
    } catch (const EvalError&) {
      eval_ok = false;
    }
    if (!eval_ok) {
      // a trial state wandered out of the model's domain; shrink and retry
      res.stats.rejected++;
      if (last_step_failed_eval && h <= 1e-13 * std::max(std::abs(t), 1.0))
        throw StepSizeUnderflow(t);
      last_step_failed_eval = true;
      h *= 0.5;
      continue;
    }
    last_step_failed_eval = false;

    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double errn = error_norm(err, y, ynew, config.atol, config.rtol);

    double fac11 = std::pow(std::max(errn, 1e-16), 0.2);
    if (errn <= 1.0) {
      // accept
      DenseOutput::Segment seg;
      seg.t0 = t;
      seg.h = h;
      VectorXd ydiff = ynew - y;
      VectorXd bspl = h * k1 - ydiff;
      seg.c.resize(5);
      seg.c[0] = y;
      seg.c[1] = ydiff;
      seg.c[2] = bspl;
      seg.c[3] = ydiff - h * k7 - bspl;
      seg.c[4] = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      while (gi < grid.size() && grid[gi] <= t + h + 1e-14 * std::max(1.0, std::abs(t + h))) {
        double ts = std::min(grid[gi], t + h);
        res.sample_times.push_back(grid[gi]);
        res.samples.push_back(eval_segment(seg, ts));
        ++gi;
      }
      res.dense->add(std::move(seg));

      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::max(1.0 / kFacMax, std::min(1.0 / kFacMin, fac / kSafe));
      facold = std::max(errn, 1e-4);
      t += h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      res.stats.accepted++;
      h = std::min(h / fac, config.hmax);
    } else {
      res.stats.rejected++;
      h = h / std::min(1.0 / kFacMin, fac11 / kSafe);
    }
  }

  res.t_final = t;
  res.y_final = y;
  return res;
}

namespace {

struct FlatLayout {
  int n = 0;
  bool decomposed = false;
  int path_states = 0;

  int size() const { return decomposed ? n + 2 * n * n + path_states : n; }

  DecomposedState unpack(double t, const VectorXd& y) const {
    DecomposedState ds;
    ds.t = t;
    ds.x = y.head(n);
    if (decomposed) {
      ds.X = Eigen::Map<const MatrixXd>(y.data() + n, n, n);
      ds.Xinit = Eigen::Map<const MatrixXd>(y.data() + n + n * n, n, n);
    } else {
      ds.X = MatrixXd::Zero(n, n);
      ds.Xinit = MatrixXd::Zero(n, n);
    }
    return ds;
  }

  VectorXd path_part(const VectorXd& y) const {
    return path_states > 0 ? VectorXd(y.tail(path_states)) : VectorXd();
  }
};

}  // namespace

DecomposedState DecomposedTrajectory::state_at(double t) const {
  FlatLayout layout{n, mode != IntegrationMode::Original,
                    paths ? paths->state_size() : 0};
  return layout.unpack(t, dense->eval(t));
}

VectorXd DecomposedTrajectory::path_state_at(double t) const {
  FlatLayout layout{n, mode != IntegrationMode::Original,
                    paths ? paths->state_size() : 0};
  return layout.path_part(dense->eval(t));
}

DecomposedTrajectory integrate(const CompartmentalModel& model, const IntegratorConfig& config,
                               IntegrationMode mode, std::shared_ptr<const PathProgram> paths) {
  const int n = model.n();
  if (mode != IntegrationMode::DecomposedWithPaths) paths = nullptr;
  if (mode == IntegrationMode::DecomposedWithPaths && !paths)
    throw SchemaError("decomposed_with_paths requires a compiled path program");

  FlatLayout layout{n, mode != IntegrationMode::Original, paths ? paths->state_size() : 0};

  VectorXd y0(layout.size());
  y0.head(n) = model.x0();
  if (layout.decomposed) {
    Eigen::Map<MatrixXd>(y0.data() + n, n, n).setZero();
    Eigen::Map<MatrixXd>(y0.data() + n + n * n, n, n) = MatrixXd(model.x0().asDiagonal());
    if (paths) y0.tail(layout.path_states) = paths->initial_state(model);
  }

  auto rhs = [&model, layout, &paths](double t, const VectorXd& y, VectorXd& dy) {
    if (dy.size() != y.size()) dy.resize(y.size());
    const int n = layout.n;
    if (!layout.decomposed) {
      dy = rhs_original(model, t, y);
      return;
    }
    DecomposedState ds = layout.unpack(t, y);
    FlowSnapshot sys = snapshot(model, t, ds.x);
    dy.head(n) = sys.tau_in - sys.tau_out;
    Eigen::Map<MatrixXd> dX(dy.data() + n, n, n);
    Eigen::Map<MatrixXd> dXinit(dy.data() + n + n * n, n, n);
    dX.noalias() = sys.A * ds.X;
    dX.diagonal() += sys.z;
    dXinit.noalias() = sys.A * ds.Xinit;
    if (layout.path_states > 0) {
      paths->rhs(t, sys, ds, y.tail(layout.path_states), dy.tail(layout.path_states));
    }
  };

  std::vector<double> breaks = paths ? paths->breakpoints() : std::vector<double>{};
  OdeResult ode = integrate_ode(rhs, y0, config, breaks);

  DecomposedTrajectory traj;
  traj.n = n;
  traj.mode = mode;
  traj.t0 = config.t0;
  traj.t_end = ode.t_final;
  traj.times = ode.sample_times;
  traj.dense = ode.dense;
  traj.paths = paths;
  traj.stats = ode.stats;
  traj.states.reserve(ode.samples.size());
  for (std::size_t i = 0; i < ode.samples.size(); ++i) {
    traj.states.push_back(layout.unpack(ode.sample_times[i], ode.samples[i]));
    if (paths) traj.path_states.push_back(layout.path_part(ode.samples[i]));
  }
  traj.terminal = layout.unpack(ode.t_final, ode.y_final);
  if (paths) traj.terminal_path_state = layout.path_part(ode.y_final);
  return traj;
}

DecomposedTrajectory resample(const DecomposedTrajectory& traj, const std::vector<double>& times) {
  if (!traj.dense) throw OutOfRange("trajectory carries no dense output");
  FlatLayout layout{traj.n, traj.mode != IntegrationMode::Original,
                    traj.paths ? traj.paths->state_size() : 0};
  DecomposedTrajectory out = traj;
  out.times = times;
  out.states.clear();
  out.path_states.clear();
  for (double t : times) {
    if (t < traj.t0 - 1e-12 || t > traj.t_end + 1e-12)
      throw OutOfRange("resample time " + std::to_string(t) + " outside trajectory range");
    VectorXd y = traj.dense->eval(t);
    out.states.push_back(layout.unpack(t, y));
    if (traj.paths) out.path_states.push_back(layout.path_part(y));
  }
  return out;
}

}  // namespace decompart
