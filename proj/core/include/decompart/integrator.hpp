#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "decompart/decomposition.hpp"
#include "decompart/pathflow.hpp"

namespace decompart {

struct IntegratorConfig {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h0 = 0.0;  // 0 = choose automatically
  double hmax = std::numeric_limits<double>::infinity();
  double t0 = 0.0;
  double t_end = 1.0;
  std::vector<double> sample_grid;  // empty = 201 uniform samples
};

struct IntegrationStats {
  long steps = 0;
  long accepted = 0;
  long rejected = 0;
  long rhs_evaluations = 0;
};

/// Continuous extension of an adaptive run: one quartic interpolant per
/// accepted step.
class DenseOutput {
 public:
  struct Segment {
    double t0, h;
    std::vector<VectorXd> c;  // 5 coefficient vectors
  };

  void add(Segment seg) { segments_.push_back(std::move(seg)); }
  VectorXd eval(double t) const;
  double t_begin() const;
  double t_end() const;
  bool empty() const { return segments_.empty(); }
  const std::vector<Segment>& segments() const { return segments_; }

 private:
  std::vector<Segment> segments_;  // ordered by t0
};

/// Embedded Dormand-Prince 5(4) driver over a generic right-hand side.
/// The rhs may throw; failures at internal stages reject the step and retry
/// with a shorter one, failures at an accepted state propagate.
struct OdeResult {
  std::vector<double> sample_times;
  std::vector<VectorXd> samples;
  double t_final = 0.0;
  VectorXd y_final;
  std::shared_ptr<DenseOutput> dense;
  IntegrationStats stats;
};

OdeResult integrate_ode(const std::function<void(double, const VectorXd&, VectorXd&)>& rhs,
                        const VectorXd& y0, const IntegratorConfig& config,
                        const std::vector<double>& breakpoints = {});

enum class IntegrationMode { Original, Decomposed, DecomposedWithPaths };

/// Time-sampled solution of the (decomposed) system, with the continuous
/// extension retained for resampling and post-pass integrations.
struct DecomposedTrajectory {
  int n = 0;
  IntegrationMode mode = IntegrationMode::Decomposed;
  double t0 = 0.0, t_end = 0.0;
  std::vector<double> times;
  std::vector<DecomposedState> states;
  std::vector<VectorXd> path_states;  // per sample; empty without paths
  DecomposedState terminal;
  VectorXd terminal_path_state;
  std::shared_ptr<const DenseOutput> dense;
  std::shared_ptr<const PathProgram> paths;
  IntegrationStats stats;

  /// Interpolated state at any t in [t0, t_end].
  DecomposedState state_at(double t) const;
  VectorXd path_state_at(double t) const;
};

DecomposedTrajectory integrate(const CompartmentalModel& model, const IntegratorConfig& config,
                               IntegrationMode mode = IntegrationMode::Decomposed,
                               std::shared_ptr<const PathProgram> paths = nullptr);

/// Re-samples an existing trajectory onto new times (within [t0, t_end]).
DecomposedTrajectory resample(const DecomposedTrajectory& traj, const std::vector<double>& times);

}  // namespace decompart
