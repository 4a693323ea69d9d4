#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "decompart/decomposition.hpp"
#include "decompart/model.hpp"

namespace decompart {

/// Parsed subflow-path declaration.
///
/// Text form: `k: src=in 1 -> 2 -> 3 -> 1 cycles=3 from=0.5 out=0.06*x2`
///   k        subsystem index (0 = initial subsystem)
///   src      local source: `in` for the external input (for the initial
///            subsystem this seeds the connection with the initial stock),
///            or a compartment index; omitted means the connection itself
///            (local input = inward subthroughflow there)
///   nodes    visited compartments; a trailing `-> 0` is a terminal output
///   cycles   unroll depth for closed paths
///   from     start time t1 (default t0)
///   out      expression overriding the terminal output flow, for models
///            whose compartment output lumps several physical exits
struct PathSpec {
  int subsystem = 1;
  bool source_external = true;
  int source = 0;  // 1-based compartment, valid when !source_external
  std::vector<int> nodes;  // 1-based compartments in declared order
  bool terminal_output = false;
  std::optional<std::string> terminal_expr_src;
  std::optional<int> cycles;
  double start_time = std::numeric_limits<double>::quiet_NaN();  // NaN = t0
  std::string text;  // original declaration, kept for reports

  bool is_closed() const;
};

PathSpec parse_path_spec(std::string_view text);
std::string format_path_spec(const PathSpec& spec);

/// Compiled set of subflow paths.
///
/// Paths that share subsystem, local source, start time, and a common link
/// prefix share the underlying transient states: the program is a forest of
/// visit tries, and each compiled path is a root-to-terminal chain in it.
/// Visit states are appended to the integrator's flat state.
class PathProgram {
 public:
  struct Visit {
    int group = 0;
    int node = 0;    // 0-based compartment
    int parent = -1; // visit index, -1 for a root
    int cycle_index = 1;  // how many times the chain has entered this node
    bool has_same_node_ancestor = false;
  };

  struct Group {
    int subsystem = 0;  // 0 = initial subsystem
    bool source_external = true;
    int source = -1;    // 0-based, valid when !source_external
    double start_time = 0.0;
    bool gated = false;  // start_time > t0: hold states at zero through t1
    int root = 0;
    std::vector<int> visits;  // indices into visits(), pre-order
  };

  struct CompiledPath {
    int spec = 0;
    int group = 0;
    std::vector<int> chain;  // visit indices root..terminal
    bool terminal_output = false;
    Expr terminal_expr;      // flow expression of the terminal link
    int terminal_visit = -1;
  };

  static PathProgram compile(const CompartmentalModel& model, std::vector<PathSpec> specs,
                             int default_cycles, double t0);

  int state_size() const { return static_cast<int>(visits_.size()); }
  const std::vector<Visit>& visits() const { return visits_; }
  const std::vector<Group>& groups() const { return groups_; }
  const std::vector<CompiledPath>& paths() const { return paths_; }
  const std::vector<PathSpec>& specs() const { return specs_; }

  /// Initial visit states; nonzero only for initial-subsystem roots, which
  /// are seeded with their compartment's initial stock.
  VectorXd initial_state(const CompartmentalModel& model) const;

  /// Start times that the integrator must hit exactly.
  std::vector<double> breakpoints() const;

  /// d(state)/dt for all visit states. `sys` must be evaluated at (t, ds.x).
  void rhs(double t, const FlowSnapshot& sys, const DecomposedState& ds,
           const Eigen::Ref<const VectorXd>& p, Eigen::Ref<VectorXd> dp) const;

  /// Transient inflow feeding each visit (the local input for roots).
  VectorXd inflows(double t, const FlowSnapshot& sys, const DecomposedState& ds,
                   const Eigen::Ref<const VectorXd>& p) const;

  /// Transient outflow of each visit along its path link (the inflow of its
  /// first child); visits without a continuation report 0.
  VectorXd link_outflows(const FlowSnapshot& sys, const Eigen::Ref<const VectorXd>& p) const;

  /// Terminal output flow of each compiled path at the given visit states;
  /// zero for closed paths.
  VectorXd terminal_flows(double t, const FlowSnapshot& sys,
                          const Eigen::Ref<const VectorXd>& p) const;

 private:
  double local_input(const Group& g, double t, const FlowSnapshot& sys,
                     const DecomposedState& ds) const;

  std::vector<PathSpec> specs_;
  std::vector<Visit> visits_;
  std::vector<Group> groups_;
  std::vector<CompiledPath> paths_;
  std::vector<int> first_child_;  // visit -> first child visit (-1: none)
};

struct NaturalDecomposition {
  std::vector<PathSpec> specs;
  std::vector<std::string> warnings;  // e.g. outputs unreachable from the connection
};

/// Canonical path set of subsystem k: every path starts at the connection
/// (compartment k for k >= 1; each seeded compartment for the initial
/// subsystem), linear paths end at a compartment with external output, closed
/// paths end at the first revisited node. The returned set is mutually
/// exclusive; no path's link chain contains another's.
NaturalDecomposition natural_decomposition(const CompartmentalModel& model, int k,
                                           int default_cycles = 6);

/// Static transient values along one path, chained link by link; closed
/// paths accumulate geometrically until a pass contributes less than tol
/// (relative) or the cycle cap is reached.
struct StaticTransientVisit {
  int node = 0;  // 0-based
  int cycle_index = 1;
  double inflow = 0.0;
  double substorage = 0.0;  // requires storages; 0 when unavailable
  double outflow = 0.0;     // along the path's next link (or terminal output)
};

struct StaticTransientResult {
  std::vector<StaticTransientVisit> visits;
  double terminal_outflow = 0.0;
  bool storages_available = false;
  int cycles_used = 1;
};

StaticTransientResult static_transient(const MatrixXd& F, const VectorXd& z, const VectorXd& y,
                                       const VectorXd& tau, const VectorXd* x,
                                       const PathSpec& path, double tol = 1e-10,
                                       int cycle_cap = 64);

}  // namespace decompart
