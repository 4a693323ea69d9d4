#pragma once

#include <array>
#include <optional>
#include <vector>

#include "decompart/model.hpp"

namespace decompart {

class SingularInput : public Error {
 public:
  using Error::Error;
};

/// Steady-state flow dataset with derived matrices. Storages are optional;
/// without them the flow side of the analysis is still available but the
/// storage matrices are omitted.
struct StaticSystem {
  MatrixXd F;
  VectorXd z, y;
  std::optional<VectorXd> x;

  VectorXd tau;      // throughflow (= inward = outward at steady state)
  double balance_residual_rel = 0.0;
  bool balanced = false;
  MatrixXd Qtau;     // F T^-1
  MatrixXd N;        // flow distribution (I - Qtau)^-1
  std::optional<VectorXd> r;  // residence times, with x
  std::vector<int> zero_input;  // compartments with z_k <= eps (0-based)

  static StaticSystem build(MatrixXd F, VectorXd z, VectorXd y, std::optional<VectorXd> x);
  static StaticSystem from_snapshot(const FlowSnapshot& s);
};

/// Steady-state system decomposition: substorage matrix X = -A^-1 Z (needs
/// storages) and subthroughflow matrix T = N Z; the initial substorage
/// matrix is identically zero at steady state.
struct StaticDecomposition {
  std::optional<MatrixXd> X;
  MatrixXd T;
  std::vector<std::string> notices;
};

StaticDecomposition static_decompose(const StaticSystem& s);

enum class DiactKind { Direct = 0, Indirect, Acyclic, Cycling, Transfer };
inline constexpr std::array<char, 5> kDiactSymbol = {'d', 'i', 'a', 'c', 't'};

/// Static diact analysis: distribution matrices N^*, storage distributions
/// S^* = R N^*, composite/simple flow matrices and (with storages) the
/// storage matrices.
struct StaticDiact {
  std::array<MatrixXd, 5> N;
  std::array<MatrixXd, 5> T;        // composite flows N^* T
  std::array<MatrixXd, 5> Tsimple;  // simple flows N^* diag(T)
  bool storages_available = false;
  std::array<MatrixXd, 5> S;        // R N^*
  std::array<MatrixXd, 5> X;        // composite storages S^* T
  std::array<MatrixXd, 5> Xsimple;  // simple storages S^* diag(T)
  std::vector<int> zero_input;      // flagged zero columns
};

StaticDiact static_diact(const StaticSystem& s);

struct ResidenceReport {
  VectorXd r;
  std::vector<int> infinite;  // compartments with tau_out <= eps
  std::vector<int> ordering;  // compartment indices sorted by increasing r
};

ResidenceReport residence_times(const StaticSystem& s);
ResidenceReport residence_times(const FlowSnapshot& s);

/// Residence times along a trajectory, with the reverse activity rate
/// (dr/dt) estimated by central differences on the sample grid.
struct ResidenceSeries {
  std::vector<double> times;
  MatrixXd r;     // samples x n
  MatrixXd rdot;  // finite differences, same shape
};

class CompartmentalModel;
struct DecomposedTrajectory;
ResidenceSeries residence_over_trajectory(const CompartmentalModel& model,
                                          const DecomposedTrajectory& traj);

}  // namespace decompart
