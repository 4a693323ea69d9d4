#include "decompart/check.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <thread>

#include "decompart/diact.hpp"

namespace decompart {

namespace {

struct Suite {
  std::string name;
  std::function<CheckResult()> run;
};

CheckResult pass(const std::string& name, const std::string& detail = "") {
  return {name, true, detail};
}
CheckResult fail(const std::string& name, const std::string& detail) {
  return {name, false, detail};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

int thread_cap(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DECOMPART_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// per-(group,node) truncation tail estimate from the two deepest cycle layers
double tail_estimate(const PathProgram& prog, const VectorXd& p, int node) {
  int max_cycle = 1;
  for (const auto& v : prog.visits())
    if (v.node == node) max_cycle = std::max(max_cycle, v.cycle_index);
  if (max_cycle == 1) return 0.0;
  double deepest = 0.0, prev = 0.0;
  for (std::size_t v = 0; v < prog.visits().size(); ++v) {
    if (prog.visits()[v].node != node) continue;
    if (prog.visits()[v].cycle_index == max_cycle) deepest += std::abs(p[static_cast<int>(v)]);
    if (prog.visits()[v].cycle_index == max_cycle - 1) prev += std::abs(p[static_cast<int>(v)]);
  }
  double rho = prev > 0.0 ? std::min(0.9, deepest / prev) : 0.0;
  return rho < 1.0 ? deepest * rho / (1.0 - rho) + deepest : 2.0 * deepest;
}

}  // namespace

bool all_pass(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

std::vector<CheckResult> run_model_checks(const LoadedDocument& doc, const CheckOptions& opts) {
  std::vector<Suite> suites;

  if (doc.model) {
    const CompartmentalModel& model = *doc.model;
    const int n = model.n();

    IntegratorConfig cfg;
    cfg.t0 = 0.0;
    cfg.t_end = opts.t_end;
    cfg.rtol = opts.rtol;
    cfg.atol = opts.atol;
    cfg.sample_grid.resize(static_cast<std::size_t>(opts.grid_points));
    for (int i = 0; i < opts.grid_points; ++i)
      cfg.sample_grid[static_cast<std::size_t>(i)] =
          opts.t_end * i / static_cast<double>(opts.grid_points - 1);

    // one shared decomposed run for the state-level suites
    auto traj = std::make_shared<DecomposedTrajectory>(integrate(model, cfg));

    suites.push_back({"partition-of-unity", [&model, traj]() {
      double worst = 0.0;
      for (std::size_t s = 0; s < traj->times.size(); ++s) {
        SubflowMatrices sub = decomposed_snapshot(model, traj->times[s], traj->states[s]);
        for (int j = 0; j < model.n(); ++j) {
          if (traj->states[s].x[j] <= kEpsState) continue;
          double total = sub.D0[j] + sub.D.row(j).sum();
          worst = std::max(worst, std::abs(total - 1.0));
        }
      }
      return worst < 1e-9 ? pass("partition-of-unity", "max |D0 + D*1 - 1| = " + fmt(worst))
                          : fail("partition-of-unity", "max deviation " + fmt(worst));
    }});

    suites.push_back({"reconstruction", [traj, &opts]() {
      double worst = 0.0;
      for (const auto& st : traj->states) {
        double scale = std::max(1.0, st.x.lpNorm<Eigen::Infinity>());
        worst = std::max(worst,
                         (st.x - st.x0_vec() - st.xbar()).lpNorm<Eigen::Infinity>() / scale);
      }
      double tol = 10.0 * opts.rtol;
      return worst < tol ? pass("reconstruction", "max rel deviation " + fmt(worst))
                         : fail("reconstruction", "max rel deviation " + fmt(worst) +
                                                      " exceeds " + fmt(tol));
    }});

    suites.push_back({"conservation-closure", [&model, &cfg]() {
      CompartmentalModel closed = model.closed();
      double total0 = closed.x0().sum();
      DecomposedTrajectory ct = integrate(closed, cfg, IntegrationMode::Original);
      double worst = 0.0;
      for (const auto& st : ct.states) worst = std::max(worst, std::abs(st.x.sum() - total0));
      double tol = total0 > 0.0 ? 1e-6 * total0 : 1e-10;
      return worst < tol ? pass("conservation-closure", "max drift " + fmt(worst))
                         : fail("conservation-closure", "mass drift " + fmt(worst));
    }});

    suites.push_back({"null-subsystem", [&model, traj, &opts]() {
      double worst = 0.0;
      for (const auto& st : traj->states) {
        for (int k = 0; k < model.n(); ++k) {
          if (!model.has_input(k))
            worst = std::max(worst, st.X.col(k).lpNorm<Eigen::Infinity>());
          if (model.x0()[k] == 0.0)
            worst = std::max(worst, st.Xinit.col(k).lpNorm<Eigen::Infinity>());
        }
      }
      return worst <= opts.atol
                 ? pass("null-subsystem", "max null-column magnitude " + fmt(worst))
                 : fail("null-subsystem", "null subsystem grew to " + fmt(worst));
    }});

    suites.push_back({"fundamental-invertibility", [&model, traj]() {
      bool applicable = (model.x0().array() > 0.0).all();
      for (int i = 0; i < model.n() && applicable; ++i)
        if (!model.has_input(i)) applicable = false;
      if (!applicable)
        return pass("fundamental-invertibility", "skipped: needs positive inputs and stocks");
      double min_det = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < traj->states.size(); ++s) {
        if (traj->times[s] <= traj->t0) continue;
        min_det = std::min(min_det, std::abs(traj->states[s].X.determinant()));
        min_det = std::min(min_det, std::abs(traj->states[s].Xinit.determinant()));
      }
      return min_det > 1e-8
                 ? pass("fundamental-invertibility", "min |det| = " + fmt(min_det))
                 : fail("fundamental-invertibility", "min |det| = " + fmt(min_det));
    }});

    suites.push_back({"diact-identities", [&model, traj]() {
      double worst = 0.0;
      for (std::size_t s = 0; s < traj->times.size(); ++s) {
        SubflowMatrices sub = decomposed_snapshot(model, traj->times[s], traj->states[s]);
        DiactDistribution dist = diact_distribution(sub);
        const auto& N = dist.N;
        worst = std::max(worst, (N[0] + N[1] - N[4]).lpNorm<Eigen::Infinity>());
        worst = std::max(worst, (N[2] + N[3] - N[4]).lpNorm<Eigen::Infinity>());
        // T^d reduction: Qtau (T - That0) = F (I - X^-1 X0)
        VectorXd that0 = sub.Tout_init.rowwise().sum();
        MatrixXd lhs = sub.sys.Qtau * VectorXd(sub.sys.tau_out - that0).asDiagonal();
        VectorXd ratio(model.n());
        VectorXd x0v = traj->states[s].x0_vec();
        for (int j = 0; j < model.n(); ++j)
          ratio[j] = 1.0 - guarded_ratio(x0v[j], traj->states[s].x[j]);
        MatrixXd rhs = sub.sys.F * ratio.asDiagonal();
        double scale = std::max(1.0, sub.sys.F.lpNorm<Eigen::Infinity>());
        worst = std::max(worst, (lhs - rhs).lpNorm<Eigen::Infinity>() / scale);
      }
      return worst < 1e-10 ? pass("diact-identities", "max residual " + fmt(worst))
                           : fail("diact-identities", "max residual " + fmt(worst));
    }});

    if (n <= 4) {
      suites.push_back({"natural-exhaustiveness", [&model, &cfg, &opts]() {
        std::ostringstream detail;
        double worst_rel = 0.0;
        for (int k = 0; k <= model.n(); ++k) {
          if (k >= 1 && !model.has_input(k - 1)) continue;
          if (k == 0 && !(model.x0().array() > 0.0).any()) continue;
          NaturalDecomposition nat = natural_decomposition(model, k, opts.cycles);
          if (nat.specs.empty()) continue;
          auto prog = std::make_shared<PathProgram>(
              PathProgram::compile(model, nat.specs, opts.cycles, cfg.t0));
          DecomposedTrajectory tr =
              integrate(model, cfg, IntegrationMode::DecomposedWithPaths, prog);
          for (std::size_t s = 0; s < tr.times.size(); ++s) {
            const VectorXd& p = tr.path_states[s];
            // per (group, node) sums of distinct visit states
            for (const auto& g : prog->groups()) {
              VectorXd sums = VectorXd::Zero(model.n());
              for (int v : g.visits) sums[prog->visits()[v].node] += p[v];
              for (int node = 0; node < model.n(); ++node) {
                double ref;
                if (k >= 1) {
                  ref = tr.states[s].X(node, k - 1);
                } else {
                  int seed = prog->visits()[static_cast<std::size_t>(g.root)].node;
                  ref = tr.states[s].Xinit(node, seed);
                }
                double tail = tail_estimate(*prog, p, node);
                double tol = std::max(1e-4 * std::max(1.0, std::abs(ref)), 3.0 * tail) +
                             100.0 * opts.atol;
                double diff = std::abs(sums[node] - ref);
                if (diff > tol) {
                  detail << "subsystem " << k << " node " << node + 1 << " t=" << tr.times[s]
                         << " diff=" << fmt(diff) << " tol=" << fmt(tol) << "; ";
                }
                worst_rel = std::max(worst_rel, diff / std::max(1.0, std::abs(ref)));
              }
            }
          }
        }
        std::string d = detail.str();
        return d.empty() ? pass("natural-exhaustiveness", "max rel deviation " + fmt(worst_rel))
                         : fail("natural-exhaustiveness", d);
      }});

      suites.push_back({"path-formula-diact", [&model, &cfg, &opts]() {
        std::ostringstream detail;
        auto run_entry = [&](int subsystem, int i, int k, DiactKind kind) {
          PathDiactCheck rep =
              path_based_diact_check(model, cfg, subsystem, {i, k}, kind, opts.cycles);
          double tol = std::max(1e-4, 3.0 * rep.truncation_tail + 100.0 * opts.atol);
          if (rep.max_flow_diff > tol || rep.max_storage_diff > tol)
            detail << "subsystem " << subsystem << " (" << i << "," << k << ") kind "
                   << kDiactSymbol[static_cast<int>(kind)] << " flow diff "
                   << fmt(rep.max_flow_diff) << " storage diff " << fmt(rep.max_storage_diff)
                   << " tol " << fmt(tol) << "; ";
        };
        for (int k = 1; k <= model.n(); ++k) {
          if (!model.has_input(k - 1)) continue;
          for (int i = 1; i <= model.n(); ++i) {
            if (model.has_flow(i - 1, k - 1)) run_entry(k, i, k, DiactKind::Direct);
            run_entry(k, i, k, DiactKind::Transfer);
          }
          // at the connection every return is cycling, so the path sum and
          // the closed formula coincide exactly; off the diagonal the
          // formula carries another subsystem's age structure and the two
          // only converge with the transients
          run_entry(k, k, k, DiactKind::Cycling);
        }
        std::string d = detail.str();
        return d.empty() ? pass("path-formula-diact") : fail("path-formula-diact", d);
      }});
    }
  }

  if (doc.static_system) {
    const StaticSystem& s = *doc.static_system;

    suites.push_back({"static-balance", [&s]() {
      return s.balanced
                 ? pass("static-balance", "rel residual " + fmt(s.balance_residual_rel))
                 : fail("static-balance", "rel residual " + fmt(s.balance_residual_rel));
    }});

    suites.push_back({"static-diact-identities", [&s]() {
      StaticDiact d = static_diact(s);
      double scale = std::max(1.0, d.N[4].lpNorm<Eigen::Infinity>());
      double worst =
          std::max((d.N[0] + d.N[1] - d.N[4]).lpNorm<Eigen::Infinity>(),
                   (d.N[2] + d.N[3] - d.N[4]).lpNorm<Eigen::Infinity>()) /
          scale;
      return worst < 1e-10 ? pass("static-diact-identities", "max residual " + fmt(worst))
                           : fail("static-diact-identities", "max residual " + fmt(worst));
    }});

    suites.push_back({"static-zero-input-columns", [&s]() {
      StaticDecomposition dec = static_decompose(s);
      double worst = 0.0;
      for (int k : s.zero_input) {
        worst = std::max(worst, dec.T.col(k).lpNorm<Eigen::Infinity>());
        if (dec.X) worst = std::max(worst, dec.X->col(k).lpNorm<Eigen::Infinity>());
      }
      return worst <= kEpsState
                 ? pass("static-zero-input-columns")
                 : fail("static-zero-input-columns", "zero-input column magnitude " + fmt(worst));
    }});
  }

  // fan the suites out across threads; results keep declaration order
  std::vector<CheckResult> results(suites.size());
  int cap = std::min<int>(thread_cap(opts.max_threads), static_cast<int>(suites.size()));
  if (cap <= 1) {
    for (std::size_t i = 0; i < suites.size(); ++i) {
      try {
        results[i] = suites[i].run();
      } catch (const Error& e) {
        results[i] = fail(suites[i].name, std::string("error: ") + e.what());
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= suites.size()) return;
        try {
          results[i] = suites[i].run();
        } catch (const Error& e) {
          results[i] = fail(suites[i].name, std::string("error: ") + e.what());
        }
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < cap; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

}  // namespace decompart
