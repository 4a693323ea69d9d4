#include <benchmark/benchmark.h>

#include "decompart/diact.hpp"
#include "decompart/model_io.hpp"

using namespace decompart;

namespace {

const LoadedDocument& sirs_doc() {
  static LoadedDocument doc = load_model(std::string(DECOMPART_MODELS_DIR) + "/sirs.json");
  return doc;
}

const LoadedDocument& cone_doc() {
  static LoadedDocument doc = load_model(std::string(DECOMPART_MODELS_DIR) + "/cone_spring.json");
  return doc;
}

void BM_Snapshot(benchmark::State& state) {
  const CompartmentalModel& m = *sirs_doc().model;
  VectorXd x(3);
  x << 18.9, 2.9, 4.3;
  for (auto _ : state) {
    FlowSnapshot s = snapshot(m, 100.0, x);
    benchmark::DoNotOptimize(s.A);
  }
}
BENCHMARK(BM_Snapshot);

void BM_DecomposedIntegrate(benchmark::State& state) {
  const CompartmentalModel& m = *sirs_doc().model;
  IntegratorConfig cfg;
  cfg.t_end = static_cast<double>(state.range(0));
  cfg.sample_grid = {cfg.t_end};
  for (auto _ : state) {
    DecomposedTrajectory traj = integrate(m, cfg);
    benchmark::DoNotOptimize(traj.terminal.X);
  }
}
BENCHMARK(BM_DecomposedIntegrate)->Arg(100)->Arg(500);

void BM_PathIntegrate(benchmark::State& state) {
  const LoadedDocument& doc = sirs_doc();
  auto prog = std::make_shared<PathProgram>(PathProgram::compile(*doc.model, doc.paths, 6, 0.0));
  IntegratorConfig cfg;
  cfg.t_end = 100.0;
  cfg.sample_grid = {cfg.t_end};
  for (auto _ : state) {
    DecomposedTrajectory traj =
        integrate(*doc.model, cfg, IntegrationMode::DecomposedWithPaths, prog);
    benchmark::DoNotOptimize(traj.terminal_path_state);
  }
}
BENCHMARK(BM_PathIntegrate);

void BM_StaticDiact(benchmark::State& state) {
  const StaticSystem& s = *cone_doc().static_system;
  for (auto _ : state) {
    StaticDiact d = static_diact(s);
    benchmark::DoNotOptimize(d.T);
  }
}
BENCHMARK(BM_StaticDiact);

}  // namespace

BENCHMARK_MAIN();
