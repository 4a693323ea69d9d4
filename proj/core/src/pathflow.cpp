#include "decompart/pathflow.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <span>
#include <sstream>
#include <tuple>

namespace decompart {

namespace {

constexpr int kMaxVisits = 20000;

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool done() {
    skip_ws();
    return pos >= s.size();
  }
  bool eat(std::string_view tok) {
    skip_ws();
    if (s.substr(pos, tok.size()) == tok) {
      pos += tok.size();
      return true;
    }
    return false;
  }
  int parse_int(const char* what) {
    skip_ws();
    int v = 0;
    auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v);
    if (res.ec != std::errc())
      throw SchemaError(std::string("path syntax: expected ") + what + " in '" + std::string(s) + "'");
    pos = static_cast<std::size_t>(res.ptr - s.data());
    return v;
  }
  double parse_double(const char* what) {
    skip_ws();
    double v = 0.0;
    auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v);
    if (res.ec != std::errc())
      throw SchemaError(std::string("path syntax: expected ") + what + " in '" + std::string(s) + "'");
    pos = static_cast<std::size_t>(res.ptr - s.data());
    return v;
  }
};

}  // namespace

bool PathSpec::is_closed() const {
  if (terminal_output || nodes.size() < 2) return false;
  return std::find(nodes.begin(), nodes.end() - 1, nodes.back()) != nodes.end() - 1;
}

PathSpec parse_path_spec(std::string_view text) {
  PathSpec spec;
  spec.text = std::string(text);
  Cursor c{text};

  spec.subsystem = c.parse_int("subsystem index");
  if (!c.eat(":")) throw SchemaError("path syntax: expected ':' after subsystem in '" + spec.text + "'");

  if (c.eat("src=")) {
    if (c.eat("in")) {
      spec.source_external = true;
    } else {
      spec.source_external = false;
      spec.source = c.parse_int("source compartment");
    }
  } else {
    spec.source_external = false;
    spec.source = 0;  // resolved to the connection below
  }

  bool terminated = false;
  for (;;) {
    int node = c.parse_int("compartment index");
    if (node == 0) {
      if (spec.nodes.empty()) throw SchemaError("path syntax: path cannot start at the exterior");
      spec.terminal_output = true;
      terminated = true;
    } else {
      if (terminated) throw SchemaError("path syntax: nothing may follow the terminal 0");
      spec.nodes.push_back(node);
    }
    if (!c.eat("->")) break;
    if (terminated) throw SchemaError("path syntax: nothing may follow the terminal 0");
  }
  if (spec.nodes.empty()) throw SchemaError("path syntax: no compartments in '" + spec.text + "'");
  if (!spec.source_external && spec.source == 0) spec.source = spec.nodes.front();

  while (!c.done()) {
    if (c.eat("cycles=")) {
      spec.cycles = c.parse_int("cycle count");
      if (*spec.cycles < 1) throw SchemaError("path syntax: cycles must be >= 1");
    } else if (c.eat("from=")) {
      spec.start_time = c.parse_double("start time");
    } else if (c.eat("out=")) {
      c.skip_ws();
      spec.terminal_expr_src = std::string(text.substr(c.pos));
      c.pos = text.size();
    } else {
      throw SchemaError("path syntax: unrecognized suffix in '" + spec.text + "'");
    }
  }
  if (spec.terminal_expr_src && !spec.terminal_output)
    throw SchemaError("path syntax: out= requires a terminal -> 0 in '" + spec.text + "'");
  return spec;
}

std::string format_path_spec(const PathSpec& spec) {
  std::ostringstream os;
  os << spec.subsystem << ": ";
  if (spec.source_external) {
    os << "src=in ";
  } else if (spec.source != spec.nodes.front()) {
    os << "src=" << spec.source << ' ';
  }
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    if (i) os << " -> ";
    os << spec.nodes[i];
  }
  if (spec.terminal_output) os << " -> 0";
  if (spec.cycles) os << " cycles=" << *spec.cycles;
  if (!std::isnan(spec.start_time)) os << " from=" << spec.start_time;
  if (spec.terminal_expr_src) os << " out=" << *spec.terminal_expr_src;
  return os.str();
}

PathProgram PathProgram::compile(const CompartmentalModel& model, std::vector<PathSpec> specs,
                                 int default_cycles, double t0) {
  const int n = model.n();
  PathProgram prog;
  prog.specs_ = std::move(specs);

  // group key: (subsystem, source kind, source, start time, root node)
  using Key = std::tuple<int, bool, int, double, int>;
  std::map<Key, int> group_index;
  // trie edges: (group, parent visit, node) -> visit
  std::map<std::tuple<int, int, int>, int> edge;

  for (std::size_t si = 0; si < prog.specs_.size(); ++si) {
    const PathSpec& spec = prog.specs_[si];
    if (spec.subsystem < 0 || spec.subsystem > n)
      throw SchemaError("path '" + spec.text + "': subsystem out of range");
    for (int node : spec.nodes)
      if (node < 1 || node > n)
        throw SchemaError("path '" + spec.text + "': compartment out of range");
    for (std::size_t i = 0; i + 1 < spec.nodes.size(); ++i)
      if (!model.has_flow(spec.nodes[i + 1] - 1, spec.nodes[i] - 1))
        throw SchemaError("path '" + spec.text + "': no flow " + std::to_string(spec.nodes[i]) +
                          " -> " + std::to_string(spec.nodes[i + 1]));
    if (spec.source_external && spec.subsystem >= 1 && spec.nodes.front() != spec.subsystem)
      throw SchemaError("path '" + spec.text +
                        "': external input enters subsystem k at compartment k");
    if (!spec.source_external && spec.source != spec.nodes.front() &&
        !model.has_flow(spec.nodes.front() - 1, spec.source - 1))
      throw SchemaError("path '" + spec.text + "': no flow from the local source");
    if (spec.subsystem == 0 && spec.source_external && !std::isnan(spec.start_time) &&
        spec.start_time != t0)
      throw SchemaError("path '" + spec.text +
                        "': initial-stock-seeded paths must start at t0");

    double t1 = std::isnan(spec.start_time) ? t0 : spec.start_time;

    // unroll: closed paths repeat the cycle body (from the first occurrence
    // of the revisited node) m times; open chains are taken literally
    std::vector<int> chain_nodes;
    if (spec.is_closed()) {
      int m = spec.cycles.value_or(default_cycles);
      auto it = std::find(spec.nodes.begin(), spec.nodes.end() - 1, spec.nodes.back());
      std::size_t s = static_cast<std::size_t>(it - spec.nodes.begin());
      chain_nodes.assign(spec.nodes.begin(), spec.nodes.begin() + s);
      for (int c = 0; c < m; ++c)
        chain_nodes.insert(chain_nodes.end(), spec.nodes.begin() + s, spec.nodes.end() - 1);
    } else {
      chain_nodes = spec.nodes;
    }

    Key key{spec.subsystem, spec.source_external, spec.source_external ? -1 : spec.source, t1,
            chain_nodes.front()};
    auto [git, inserted] = group_index.try_emplace(key, static_cast<int>(prog.groups_.size()));
    if (inserted) {
      Group g;
      g.subsystem = spec.subsystem;
      g.source_external = spec.source_external;
      g.source = spec.source_external ? -1 : spec.source - 1;
      g.start_time = t1;
      g.gated = t1 > t0;
      g.root = -1;
      prog.groups_.push_back(g);
    }
    int gi = git->second;
    Group& g = prog.groups_[gi];

    CompiledPath cp;
    cp.spec = static_cast<int>(si);
    cp.group = gi;
    int parent = -1;
    for (int node1 : chain_nodes) {
      int node = node1 - 1;
      auto [eit, fresh] = edge.try_emplace({gi, parent, node}, static_cast<int>(prog.visits_.size()));
      if (fresh) {
        if (static_cast<int>(prog.visits_.size()) >= kMaxVisits)
          throw PathSetTooLarge("compiled path set exceeds " + std::to_string(kMaxVisits) +
                                " transient states");
        Visit v;
        v.group = gi;
        v.node = node;
        v.parent = parent;
        int count = 1;
        bool ancestor_same = false;
        for (int a = parent; a != -1; a = prog.visits_[a].parent) {
          if (prog.visits_[a].node == node) {
            ++count;
            ancestor_same = true;
          }
        }
        v.cycle_index = count;
        v.has_same_node_ancestor = ancestor_same;
        prog.visits_.push_back(v);
        g.visits.push_back(eit->second);
        if (parent == -1) g.root = eit->second;
      }
      parent = eit->second;
      cp.chain.push_back(parent);
    }
    cp.terminal_visit = parent;
    cp.terminal_output = spec.terminal_output;
    if (spec.terminal_output) {
      int last = chain_nodes.back() - 1;
      if (spec.terminal_expr_src) {
        Expr e = Expr::parse(*spec.terminal_expr_src);
        if (e.max_state_index() > n)
          throw SchemaError("path '" + spec.text + "': out= expression references unknown state");
        cp.terminal_expr = e;
      } else {
        cp.terminal_expr = model.output(last);
      }
    }
    prog.paths_.push_back(std::move(cp));
  }

  prog.first_child_.assign(prog.visits_.size(), -1);
  for (int v = 0; v < static_cast<int>(prog.visits_.size()); ++v) {
    int p = prog.visits_[v].parent;
    if (p >= 0 && prog.first_child_[p] < 0) prog.first_child_[p] = v;
  }
  return prog;
}

VectorXd PathProgram::initial_state(const CompartmentalModel& model) const {
  VectorXd p = VectorXd::Zero(state_size());
  for (const Group& g : groups_)
    if (g.subsystem == 0 && g.source_external)
      p[g.root] = model.x0()[visits_[g.root].node];
  return p;
}

std::vector<double> PathProgram::breakpoints() const {
  std::vector<double> ts;
  for (const Group& g : groups_) ts.push_back(g.start_time);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

double PathProgram::local_input(const Group& g, double t, const FlowSnapshot& sys,
                                const DecomposedState& ds) const {
  const int j = visits_[g.root].node;
  if (g.subsystem >= 1) {
    const int k = g.subsystem - 1;
    if (g.source_external) return sys.z[k];
    if (g.source == j) {
      // connection = source: local input is the inward subthroughflow
      double tin = (j == k ? sys.z[k] : 0.0);
      tin += sys.Qx.row(j).dot(ds.X.col(k));
      return tin;
    }
    return sys.Qx(j, g.source) * ds.X(g.source, k);
  }
  // initial subsystem: no external input; seeded roots carry the stock in
  // their initial condition instead
  if (g.source_external) return 0.0;
  VectorXd x0v = ds.x0_vec();
  if (g.source == j) return sys.Qx.row(j).dot(x0v);
  return sys.Qx(j, g.source) * x0v[g.source];
}

void PathProgram::rhs(double t, const FlowSnapshot& sys, const DecomposedState& ds,
                      const Eigen::Ref<const VectorXd>& p, Eigen::Ref<VectorXd> dp) const {
  for (const Group& g : groups_) {
    // states are identically zero through the start time; holding the
    // derivative at zero up to and including t1 keeps the pre-switch dense
    // segments exact
    if (g.gated && t <= g.start_time) {
      for (int v : g.visits) dp[v] = 0.0;
      continue;
    }
    for (int v : g.visits) {
      const Visit& vis = visits_[v];
      double in;
      if (vis.parent < 0) {
        in = local_input(g, t, sys, ds);
      } else {
        const Visit& par = visits_[vis.parent];
        in = guarded_ratio(sys.F(vis.node, par.node), sys.x[par.node]) * p[vis.parent];
      }
      double out_intensity = guarded_ratio(sys.tau_out[vis.node], sys.x[vis.node]);
      dp[v] = in - out_intensity * p[v];
    }
  }
}

VectorXd PathProgram::inflows(double t, const FlowSnapshot& sys, const DecomposedState& ds,
                              const Eigen::Ref<const VectorXd>& p) const {
  VectorXd in = VectorXd::Zero(state_size());
  for (const Group& g : groups_) {
    if (g.gated && t <= g.start_time) continue;
    for (int v : g.visits) {
      const Visit& vis = visits_[v];
      if (vis.parent < 0) {
        in[v] = local_input(g, t, sys, ds);
      } else {
        const Visit& par = visits_[vis.parent];
        in[v] = guarded_ratio(sys.F(vis.node, par.node), sys.x[par.node]) * p[vis.parent];
      }
    }
  }
  return in;
}

VectorXd PathProgram::link_outflows(const FlowSnapshot& sys,
                                    const Eigen::Ref<const VectorXd>& p) const {
  VectorXd out = VectorXd::Zero(state_size());
  for (int v = 0; v < state_size(); ++v) {
    int c = first_child_[v];
    if (c < 0) continue;
    const Visit& vis = visits_[v];
    const Visit& child = visits_[c];
    out[v] = guarded_ratio(sys.F(child.node, vis.node), sys.x[vis.node]) * p[v];
  }
  return out;
}

VectorXd PathProgram::terminal_flows(double t, const FlowSnapshot& sys,
                                     const Eigen::Ref<const VectorXd>& p) const {
  VectorXd f = VectorXd::Zero(static_cast<int>(paths_.size()));
  std::span<const double> xs(sys.x.data(), static_cast<std::size_t>(sys.x.size()));
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    const CompiledPath& cp = paths_[i];
    if (!cp.terminal_output) continue;
    const Visit& vis = visits_[cp.terminal_visit];
    double flow = cp.terminal_expr.eval(t, xs);
    f[static_cast<int>(i)] = guarded_ratio(flow, sys.x[vis.node]) * p[cp.terminal_visit];
  }
  return f;
}

NaturalDecomposition natural_decomposition(const CompartmentalModel& model, int k,
                                           int default_cycles) {
  const int n = model.n();
  if (k < 0 || k > n) throw SchemaError("subsystem index out of range");
  NaturalDecomposition out;

  auto emit_for_root = [&](int root /*0-based*/, bool seeded) {
    std::vector<int> walk;      // 0-based nodes of the current simple walk
    std::vector<char> on_walk(static_cast<std::size_t>(n), 0);
    std::vector<char> reached(static_cast<std::size_t>(n), 0);

    auto make_spec = [&](bool closed, int closing_node) {
      PathSpec spec;
      spec.subsystem = k;
      spec.source_external = true;
      spec.nodes.reserve(walk.size() + 1);
      for (int v : walk) spec.nodes.push_back(v + 1);
      if (closed) {
        spec.nodes.push_back(closing_node + 1);
        spec.cycles = default_cycles;
      } else {
        spec.terminal_output = true;
      }
      spec.text = format_path_spec(spec);
      return spec;
    };

    auto dfs = [&](auto&& self, int v) -> void {
      walk.push_back(v);
      on_walk[v] = 1;
      reached[v] = 1;
      if (model.has_output(v)) out.specs.push_back(make_spec(false, -1));
      for (int u = 0; u < n; ++u) {
        if (!model.has_flow(u, v)) continue;
        if (on_walk[u]) {
          out.specs.push_back(make_spec(true, u));
        } else {
          self(self, u);
        }
        if (out.specs.size() > 4096)
          throw PathSetTooLarge("natural decomposition exceeds 4096 paths");
      }
      on_walk[v] = 0;
      walk.pop_back();
    };
    dfs(dfs, root);

    for (int v = 0; v < n; ++v)
      if (model.has_output(v) && !reached[v])
        out.warnings.push_back("output of compartment " + model.compartment_names()[v] +
                               " unreachable from connection " +
                               model.compartment_names()[root]);
    (void)seeded;
  };

  if (k >= 1) {
    emit_for_root(k - 1, false);
  } else {
    for (int j = 0; j < n; ++j)
      if (model.x0()[j] > 0.0) emit_for_root(j, true);
  }
  return out;
}

StaticTransientResult static_transient(const MatrixXd& F, const VectorXd& z, const VectorXd& y,
                                       const VectorXd& tau, const VectorXd* x,
                                       const PathSpec& path, double tol, int cycle_cap) {
  const int n = static_cast<int>(tau.size());
  StaticTransientResult res;
  res.storages_available = x != nullptr;

  for (int node : path.nodes) {
    if (node < 1 || node > n) throw SchemaError("static path: compartment out of range");
    if (tau[node - 1] <= kEpsState)
      throw ZeroThroughflow("zero throughflow at compartment " + std::to_string(node) +
                            " on path '" + path.text + "'");
  }

  const int j0 = path.nodes.front() - 1;
  double fin;
  if (path.source_external) {
    fin = path.subsystem == 0 ? 0.0 : z[j0];
  } else if (path.source == path.nodes.front()) {
    fin = tau[j0];  // connection = source: inward throughflow
  } else {
    fin = F(j0, path.source - 1);
  }

  // walks one contiguous segment of 0-based nodes; the inflow of each node
  // is the previous node's outflow; `next_after` is the node fed by the
  // segment's last link (terminal output when < 0 and the path ends at 0)
  auto run_segment = [&](std::span<const int> seg, double input, int pass, int next_after) {
    double carry = input;
    for (std::size_t i = 0; i < seg.size(); ++i) {
      int v = seg[i];
      StaticTransientVisit rec;
      rec.node = v;
      rec.cycle_index = pass;
      rec.inflow = carry;
      if (x) rec.substorage = (*x)[v] / tau[v] * carry;
      double link_flow;
      if (i + 1 < seg.size()) {
        link_flow = F(seg[i + 1], v);
      } else if (next_after >= 0) {
        link_flow = F(next_after, v);
      } else if (path.terminal_output) {
        link_flow = y[v];
      } else {
        link_flow = 0.0;
      }
      rec.outflow = link_flow / tau[v] * carry;
      carry = rec.outflow;
      res.visits.push_back(rec);
    }
    return carry;
  };

  std::vector<int> nodes0;
  for (int node : path.nodes) nodes0.push_back(node - 1);

  if (!path.is_closed()) {
    res.terminal_outflow =
        run_segment(std::span<const int>(nodes0), fin, 1, -1);
    res.cycles_used = 1;
    return res;
  }

  // closed path: acyclic prefix once, then the cycle body until a pass
  // contributes less than tol relative to the running total
  auto it = std::find(nodes0.begin(), nodes0.end() - 1, nodes0.back());
  std::size_t s = static_cast<std::size_t>(it - nodes0.begin());
  std::span<const int> prefix(nodes0.data(), s);
  std::span<const int> body(nodes0.data() + s, nodes0.size() - 1 - s);

  double carry = fin;
  if (!prefix.empty()) carry = run_segment(prefix, carry, 1, body.front());
  double total = 0.0;
  int cap = path.cycles.value_or(cycle_cap);
  int m = 1;
  for (; m <= cap; ++m) {
    double next = run_segment(body, carry, m, body.front());
    total += carry;
    carry = next;
    if (carry <= tol * std::max(total, 1e-300)) break;
  }
  res.cycles_used = std::min(m, cap);
  res.terminal_outflow = carry;
  return res;
}

}  // namespace decompart
