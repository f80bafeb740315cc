#include <benchmark/benchmark.h>

#include <vector>

#include "marscost/dataset.hpp"
#include "marscost/labeling.hpp"
#include "marscost/net.hpp"
#include "marscost/train.hpp"

using namespace marscost;

namespace {

struct Fixture {
  SimConfig sim = synthetic_sim_config(1, 0);
  Heightfield hf;
  SimRun run;
  LabelSet labels;
  std::vector<Sample> samples;

  Fixture() {
    hf = make_terrain(sim, 7, 0);
    run = simulate_run(hf, sim, 0, 7);
    labels = build_labels(run.trajectory, run.imu, LabelingConfig{});
    samples = make_samples(run, labels.dense, SampleConfig{}.grid(), sim.lidar.mount_height);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_SimulateLidar(benchmark::State& state) {
  const Fixture& f = fixture();
  const Pose& pose = f.run.trajectory.poses[f.run.frames.front()];
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_lidar(f.hf, pose, static_cast<int>(state.range(0)), f.sim.lidar_range, ++seed,
                                            f.sim.lidar));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateLidar)->Arg(600)->Arg(3000);

void BM_RenderCamera(benchmark::State& state) {
  const Fixture& f = fixture();
  const Pose& pose = f.run.trajectory.poses[f.run.frames.front()];
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_camera(f.hf, pose, f.sim.image_rows, f.sim.image_cols, f.sim.camera));
  }
}
BENCHMARK(BM_RenderCamera);

void BM_BuildLabels(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(build_labels(f.run.trajectory, f.run.imu, LabelingConfig{}));
}
BENCHMARK(BM_BuildLabels)->Unit(benchmark::kMillisecond);

void BM_InterpolateCostmap(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(interpolate_costmap(f.labels.sparse, f.labels.fine_grid, LabelingConfig{}));
  }
  state.counters["cells"] = static_cast<double>(f.labels.fine_grid.rows) * f.labels.fine_grid.cols;
  state.counters["entries"] = static_cast<double>(f.labels.sparse.entries.size());
}
BENCHMARK(BM_InterpolateCostmap)->Unit(benchmark::kMillisecond);

void BM_Pillarize(benchmark::State& state) {
  const Fixture& f = fixture();
  const Sample& s = f.samples.front();
  for (auto _ : state) benchmark::DoNotOptimize(pillarize(s.cloud, s.target.grid));
}
BENCHMARK(BM_Pillarize);

void BM_Forward(benchmark::State& state) {
  const Fixture& f = fixture();
  const ModelParams p = init_params(ModelConfig{}, 1);
  const Sample& s = f.samples.front();
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, s.cloud, s.image, s.target.grid));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_LossAndGrads(benchmark::State& state) {
  const Fixture& f = fixture();
  const ModelParams p = init_params(ModelConfig{}, 1);
  std::vector<Sample> batch;
  for (std::size_t k = 0; k < static_cast<std::size_t>(state.range(0)); ++k) {
    batch.push_back(f.samples[k % f.samples.size()]);
  }
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(p, batch, LossConfig{}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrads)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  ModelParams p = init_params(ModelConfig{}, 1);
  const ModelParams g = init_params(ModelConfig{}, 2);
  AdamState st(p);
  for (auto _ : state) adam_step(p, g, st, 1e-4);
  state.counters["params"] = static_cast<double>(p.parameter_count());
}
BENCHMARK(BM_AdamStep);

}  // namespace
BENCHMARK_MAIN();
