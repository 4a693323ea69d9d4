#pragma once

#include <array>
#include <map>
#include <vector>

#include "decompart/integrator.hpp"
#include "decompart/static_analysis.hpp"

namespace decompart {

/// Dynamic diact distribution matrices at one sample. Columns whose diagonal
/// outward subthroughflow is below the floor are zeroed across every kind and
/// flagged instead of producing NaN.
struct DiactDistribution {
  std::array<MatrixXd, 5> N;
  std::vector<int> degenerate;  // 0-based compartments
};

DiactDistribution diact_distribution(const SubflowMatrices& sub);

/// Flow matrices derived from the distribution: composite (input-generated),
/// simple, and the initial-stock-generated variants.
struct DiactFlows {
  std::array<MatrixXd, 5> T;             // N^* (T - That0)
  std::array<MatrixXd, 5> Tsimple;       // N^* diag(Tout)
  std::array<MatrixXd, 5> Tinit;         // N^* That0
  std::array<MatrixXd, 5> Tsimple_init;  // N^* diag(Tout_init)
};

DiactFlows diact_flows(const DiactDistribution& dist, const SubflowMatrices& sub);

/// Per-subsystem composite subflow matrix T^*_l = N^* ThatHat_l for one kind.
MatrixXd diact_subsystem_flow(const DiactDistribution& dist, const SubflowMatrices& sub,
                              DiactKind kind, int subsystem /*0..n*/);

enum class DiactVariant { Composite = 0, Simple, CompositeInit, SimpleInit };

/// Five flow and five storage matrix series along a trajectory. Storage
/// matrices integrate d x*/dt = tau*(t) - (tau_out_i / x_i) x* as a post-pass
/// over the trajectory's dense output.
struct DiactSeries {
  std::vector<double> times;
  std::vector<DiactKind> kinds;
  // flows[kind][variant][sample]; storages likewise; indexed by position in `kinds`
  std::vector<std::array<std::vector<MatrixXd>, 4>> flows;
  std::vector<std::array<std::vector<MatrixXd>, 4>> storages;  // empty without post-pass
  std::vector<std::vector<MatrixXd>> N;  // distribution per kind per sample
  std::vector<std::pair<double, int>> degeneracies;  // (t, compartment)
  bool has_storages = false;
};

struct DiactOptions {
  std::vector<DiactKind> kinds = {DiactKind::Direct, DiactKind::Indirect, DiactKind::Acyclic,
                                  DiactKind::Cycling, DiactKind::Transfer};
  bool storages = true;
  double t1 = std::numeric_limits<double>::quiet_NaN();  // storage start, NaN = t0
  double rtol = 1e-8;
  double atol = 1e-10;
};

DiactSeries compute_diact_series(const CompartmentalModel& model, const DecomposedTrajectory& traj,
                                 const DiactOptions& opts = {});

/// Independent cross-check of the closed-form diact matrices: the same
/// quantity computed by summing cumulative transient subflows/storages over
/// an enumerated subflow-path set. Small models only (n <= 4).
struct PathDiactCheck {
  std::vector<double> times;
  std::vector<double> path_flow;      // path-based value
  std::vector<double> formula_flow;   // closed-formula value
  std::vector<double> path_storage;
  std::vector<double> formula_storage;
  double max_flow_diff = 0.0;
  double max_storage_diff = 0.0;
  double truncation_tail = 0.0;  // estimated dropped tail of the path sum
};

/// subsystem: 0 for the initial subsystem, else the input subsystem index.
/// Supported kinds: Direct for any (i,k); Transfer and Cycling for k equal to
/// the subsystem connection (simple variants); Cycling diagonal (i,i) for the
/// initial subsystem.
PathDiactCheck path_based_diact_check(const CompartmentalModel& model,
                                      const IntegratorConfig& config, int subsystem,
                                      std::pair<int, int> entry, DiactKind kind, int cycles = 8);

}  // namespace decompart
