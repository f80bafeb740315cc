// Acceptance checks 1-8. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "marscost/checkpoint.hpp"
#include "marscost/dataset.hpp"
#include "marscost/eval.hpp"
#include "marscost/labeling.hpp"
#include "marscost/train.hpp"
#include "oracles.hpp"

using namespace marscost;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------------------------

Outcome kernel_exactness() {
  const auto t0 = Clock::now();
  bool ok = sparse_kernel(0.0, 1.0) == 1.0 && sparse_kernel(1.0, 1.0) == 0.0;
  const double half = std::abs(sparse_kernel(0.5, 1.0) - 1.0 / 6.0);
  ok = ok && half <= 1e-12;
  double min_k = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 10000; ++k) min_k = std::min(min_k, sparse_kernel(k / 9999.0, 1.0));
  ok = ok && min_k >= 0.0;
  const double t = seconds_since(t0);
  ok = ok && t < 1.0;
  std::ostringstream s;
  s << "K(0)=" << sparse_kernel(0.0, 1.0) << " K(1)=" << sparse_kernel(1.0, 1.0) << " |K(0.5)-1/6|=" << half
    << " min K on 1e4 samples=" << min_k;
  return {ok, s.str()};
}

Outcome gradient_gate() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const GridSpec g = centered_grid(16, 0.25);
  // Random init puts dozens of ReLU pre-activations within reach of a 1e-4 step on a 16x16 grid.
  const ModelParams p = oracle::with_relu_margin(init_params(oracle::toy_model(), 17), 2.0);
  std::vector<Sample> batch{oracle::random_sample(rng, g, 200), oracle::random_sample(rng, g, 200)};
  const LossAndGrads lg = loss_and_grads(p, batch, LossConfig{});
  const oracle::GradCheck r = oracle::check_gradients(p, batch, LossConfig{}, lg.grads, 1e-4);
  const double t = seconds_since(t0);
  const bool ok = r.max_rel_error < 1e-4 && p.parameter_count() <= 5000 && r.checked == p.parameter_count() && t < 60.0;
  std::ostringstream s;
  s << p.parameter_count() << " parameters, max relative error " << r.max_rel_error << " at " << r.worst_tensor
    << "[" << r.worst_index << "]";
  return {ok, s.str()};
}

// Brute-force binning and IMU association, independent of bin_trajectory.
Outcome labeling_oracle() {
  SimConfig sim = synthetic_sim_config(1, 0);
  const std::uint64_t seed = 5;
  const Heightfield hf = make_terrain(sim, seed, 0);
  const SimRun run = simulate_run(hf, sim, 0, seed);
  const LabelingConfig cfg;
  const auto [coarse, fine] = label_grids(run.trajectory.poses, cfg);
  const SparseCostmap sparse = sparse_labels(run.trajectory.poses, run.imu, cfg, coarse);

  std::map<std::pair<long, long>, std::vector<InertialSample>> cells;
  for (const auto& pose : run.trajectory.poses) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < run.imu.size(); ++m) {
      if (std::abs(run.imu[m].t - pose.t) < std::abs(run.imu[best].t - pose.t)) best = m;
    }
    const long i = static_cast<long>(std::floor((pose.position.y() - coarse.origin_y) / coarse.resolution));
    const long j = static_cast<long>(std::floor((pose.position.x() - coarse.origin_x) / coarse.resolution));
    cells[{i, j}].push_back({pose.position, run.imu[best].accel, run.imu[best].gyro});
  }
  if (cells.size() != sparse.entries.size()) return {false, "cell count differs from brute-force binning"};

  std::mt19937_64 rng(3);
  std::vector<std::size_t> pick(sparse.entries.size());
  for (std::size_t k = 0; k < pick.size(); ++k) pick[k] = k;
  std::shuffle(pick.begin(), pick.end(), rng);
  pick.resize(10);

  double worst = 0.0;
  for (std::size_t k : pick) {
    const auto& e = sparse.entries[k];
    const long i = static_cast<long>(std::floor((e.y - coarse.origin_y) / coarse.resolution));
    const long j = static_cast<long>(std::floor((e.x - coarse.origin_x) / coarse.resolution));
    const auto it = cells.find({i, j});
    if (it == cells.end()) return {false, "pipeline cell missing from brute-force binning"};
    worst = std::max(worst, std::abs(e.cost - oracle::tc(it->second, cfg)));
  }
  std::ostringstream s;
  s << "10 of " << cells.size() << " cells, max |TC - oracle| = " << worst;
  return {worst <= 1e-9, s.str()};
}

Outcome interpolation_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 5.0), cost(0.0, 3.0);
  SparseCostmap s;
  for (int n = 0; n < 5; ++n) s.entries.push_back({u(rng), u(rng), cost(rng)});
  GridSpec g;
  g.resolution = 0.25;
  g.rows = g.cols = 20;
  LabelingConfig cfg;
  cfg.kernel_radius = 1.5;
  const DenseCostmap d = interpolate_costmap(s, g, cfg);
  double worst = 0.0;
  int mask_mismatch = 0, valid = 0;
  for (int i = 0; i < g.rows; ++i) {
    for (int j = 0; j < g.cols; ++j) {
      const auto o = oracle::interpolate_at(s, g.center_x(j), g.center_y(i), cfg.kernel_radius);
      worst = std::max(worst, std::abs(d.at(i, j) - o.value));
      mask_mismatch += d.is_valid(i, j) != o.valid;
      valid += o.valid;
    }
  }
  std::ostringstream out;
  out << "5 entries x 400 cells (" << valid << " valid), max deviation " << worst << ", mask mismatches "
      << mask_mismatch;
  return {worst <= 1e-9 && mask_mismatch == 0, out.str()};
}

// Shared by criteria 5 and 6.
struct Trained {
  Dataset data;
  FitResult fit;
  double seconds = 0.0;
};

Trained& trained() {
  static Trained t = [] {
    Trained r;
    const auto t0 = Clock::now();
    const std::uint64_t seed = 42;
    r.data = build_dataset(synthetic_sim_config(4, 2), LabelingConfig{}, SampleConfig{}, seed);
    TrainConfig cfg;
    cfg.lr = 1e-4;
    cfg.batch_size = 8;
    cfg.epochs = 1000000;
    cfg.max_steps = 500;
    cfg.seed = seed;
    r.fit = fit(r.data.train, cfg, ModelConfig{});
    r.seconds = seconds_since(t0);
    return r;
  }();
  return t;
}

Outcome convergence() {
  Trained& t = trained();
  const auto& h = t.fit.history;
  if (h.size() < 20) return {false, "too few steps"};
  double first = 0.0, last = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    first += h[k].loss.total / 10.0;
    last += h[h.size() - 10 + k].loss.total / 10.0;
  }
  const MetricsRow test = evaluate(t.fit.params, t.data.test);
  const GridSpec g = SampleConfig{}.grid();
  const bool ok = t.data.train.size() >= 32 && g.rows == 32 && g.cols == 32 && h.size() <= 500 &&
                  last <= 0.5 * first && test.mae <= 0.15 && t.seconds < 300.0;
  std::ostringstream s;
  s << t.data.train.size() << " train / " << t.data.test.size() << " test samples, " << h.size()
    << " steps, loss " << first << " -> " << last << " (ratio " << last / first << "), held-out MAE " << test.mae
    << ", build+fit " << fmt("%.1f", t.seconds) << " s";
  return {ok, s.str()};
}

Outcome ablation_ordering() {
  Trained& t = trained();
  std::vector<AblationSpec> specs;
  for (AblationMode m : {AblationMode::baseline, AblationMode::sparse_pointcloud, AblationMode::gaussian_noise}) {
    AblationSpec s;
    s.mode = m;
    s.seed = 42;
    specs.push_back(s);
  }
  const MetricsReport rep = run_ablation_suite(t.fit.params, t.data.test, specs);
  const MetricsRow plain = evaluate(t.fit.params, t.data.test);
  const double base = rep.row("baseline").mae;
  const double sparse = rep.row("sparse_pointcloud").mae;
  const double noise = rep.row("gaussian_noise").mae;
  const bool exact = rep.row("baseline").mae == plain.mae && rep.row("baseline").mse == plain.mse;
  std::ostringstream s;
  s.precision(6);
  s << "MAE baseline " << base << ", sparse " << sparse << ", noise " << noise
    << (exact ? ", baseline row equals plain evaluation" : ", baseline row differs from plain evaluation");
  return {sparse >= base && noise >= base && exact, s.str()};
}

Outcome invariance_suite() {
  std::vector<std::string> failed;
  std::mt19937_64 rng(8);

  {  // Pillar permutation invariance, 100 shuffles.
    const GridSpec g = centered_grid(12, 0.25);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Affine w(kPointFeatures, 8);
    for (double& v : w.weight.data) v = u(rng);
    for (double& v : w.bias.data) v = u(rng);
    const PillarTensor pt = pillarize(oracle::random_cloud(rng, g, 400), g);
    const FeatureMap ref = pillar_encode(pt, w, g);
    for (int k = 0; k < 100; ++k) {
      PillarTensor s = pt;
      for (auto& pl : s.pillars) std::shuffle(pl.points.begin(), pl.points.end(), rng);
      std::shuffle(s.pillars.begin(), s.pillars.end(), rng);
      if (!(pillar_encode(s, w, g) == ref)) {
        failed.push_back("pillar permutation");
        break;
      }
    }
  }
  {  // FiLM identity.
    FeatureMap f(centered_grid(6, 1.0), 5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : f.data) v = n(rng);
    if (!(film_modulate(f, embed_image(oracle::random_image(rng, 8, 8)), FilmParams(kEmbeddingDim, 4, 5)) == f)) {
      failed.push_back("FiLM identity");
    }
  }
  {  // Huber C1 continuity at |e| = delta.
    GridSpec g;
    const double delta = 0.1, tiny = 1e-9, step = 1e-7;
    auto h = [&](double e) {
      DenseCostmap p(g, e, true), t(g, 0.0, true);
      return huber_loss(p, t, delta);
    };
    const bool value = std::abs(h(delta - tiny) - 0.5 * delta * delta) < 1e-9 &&
                       std::abs(h(delta + tiny) - 0.5 * delta * delta) < 1e-9;
    const double d_lo = (h(delta - tiny) - h(delta - tiny - step)) / step;
    const double d_hi = (h(delta + tiny + step) - h(delta + tiny)) / step;
    if (!value || std::abs(d_lo - delta) > 1e-6 || std::abs(d_hi - delta) > 1e-6) failed.push_back("Huber C1");
  }
  {  // cell_cost under time reparameterization.
    SimConfig sim = synthetic_sim_config(1, 0);
    const Heightfield hf = make_terrain(sim, 9, 0);
    const SimRun run = simulate_run(hf, sim, 0, 9);
    const auto [coarse, fine] = label_grids(run.trajectory.poses, LabelingConfig{});
    const SparseCostmap a = sparse_labels(run.trajectory.poses, run.imu, LabelingConfig{}, coarse);
    auto poses = run.trajectory.poses;
    auto imu = run.imu;
    for (auto& p : poses) p.t = 100.0 + 2.5 * p.t;
    for (auto& s : imu) s.t = 100.0 + 2.5 * s.t;
    const SparseCostmap b = sparse_labels(poses, imu, LabelingConfig{}, coarse);
    bool same = a.entries.size() == b.entries.size();
    for (std::size_t k = 0; same && k < a.entries.size(); ++k) same = a.entries[k].cost == b.entries[k].cost;
    if (!same) failed.push_back("TC time reparameterization");
  }
  {  // Smoothness zero iff constant.
    const GridSpec g = centered_grid(7, 1.0);
    bool ok = true;
    for (int k = 0; k < 100 && ok; ++k) {
      DenseCostmap m(g, 0.01 * k, true);
      ok = smoothness_loss(m, 0.1) == 0.0;
      m.values[rng() % m.values.size()] += 1e-9;
      ok = ok && smoothness_loss(m, 0.1) > 0.0;
    }
    if (!ok) failed.push_back("smoothness zero iff constant");
  }

  std::string detail = "pillar permutation, FiLM identity, Huber C1, TC reparameterization, smoothness";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f + ";";
  }
  return {failed.empty(), detail};
}

Outcome determinism_and_round_trips() {
  std::vector<std::string> failed;

  SimConfig sim;
  sim.terrain_rows = sim.terrain_cols = 81;
  sim.frame_stride = 8;
  sim.lidar_rays = 600;
  sim.lidar_range = 4.0;
  sim.image_rows = 16;
  sim.image_cols = 24;
  sim.runs.push_back({{{1.0, 1.5}, {9.0, 2.5}, {8.5, 8.5}}});
  sim.runs.push_back({{{1.5, 8.5}, {8.5, 1.5}}});
  sim.test_runs = {1};
  const SampleConfig bev{16, 0.25};
  const Dataset a = build_dataset(sim, LabelingConfig{}, bev, 13);
  const Dataset b = build_dataset(sim, LabelingConfig{}, bev, 13);

  bool sim_same = a.runs.size() == b.runs.size();
  for (std::size_t r = 0; sim_same && r < a.runs.size(); ++r) {
    sim_same = trajectory_csv(a.runs[r].trajectory) == trajectory_csv(b.runs[r].trajectory) &&
               imu_csv(a.runs[r].imu) == imu_csv(b.runs[r].imu) && a.runs[r].images == b.runs[r].images;
    for (std::size_t f = 0; sim_same && f < a.runs[r].clouds.size(); ++f) {
      sim_same = cloud_csv(a.runs[r].clouds[f]) == cloud_csv(b.runs[r].clouds[f]);
    }
  }
  if (!sim_same) failed.push_back("simulate");

  bool label_same = true;
  for (std::size_t r = 0; label_same && r < a.labels.size(); ++r) {
    label_same = a.labels[r].dense == b.labels[r].dense &&
                 sparse_csv(a.labels[r].sparse[0]) == sparse_csv(b.labels[r].sparse[0]);
  }
  if (!label_same) failed.push_back("label");

  ModelConfig model = oracle::toy_model();
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 4;
  tc.epochs = 3;
  tc.seed = 13;
  const FitResult fa = fit(a.train, tc, model), fb = fit(b.train, tc, model);
  bool train_same = fa.params == fb.params && fa.history.size() == fb.history.size();
  for (std::size_t k = 0; train_same && k < fa.history.size(); ++k) {
    train_same = fa.history[k].loss.total == fb.history[k].loss.total;
  }
  if (!train_same) failed.push_back("train");

  if (!(decode_checkpoint(encode_checkpoint(fa.params)) == fa.params)) failed.push_back("checkpoint");

  const auto dir = std::filesystem::temp_directory_path() / "marscost_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const DenseCostmap& labels = a.labels[0].dense;
  export_costmap(labels, dir / "l.csv", CostmapFormat::csv);
  export_costmap(labels, dir / "l.pgm", CostmapFormat::pgm);
  const DenseCostmap csv = import_costmap(dir / "l.csv", CostmapFormat::csv);
  const DenseCostmap pgm = import_costmap(dir / "l.pgm", CostmapFormat::pgm);
  bool csv_exact = csv.grid == labels.grid && csv.valid == labels.valid;
  double pgm_err = 0.0;
  bool pgm_mask = pgm.valid == labels.valid;
  for (std::size_t k = 0; k < labels.values.size(); ++k) {
    if (!labels.valid[k]) continue;
    csv_exact = csv_exact && csv.values[k] == labels.values[k];
    pgm_err = std::max(pgm_err, std::abs(pgm.values[k] - labels.values[k]));
  }
  std::filesystem::remove_all(dir);
  if (!csv_exact) failed.push_back("costmap CSV");
  if (!pgm_mask || pgm_err > 1.6e-5) failed.push_back("costmap PGM");

  std::string detail = "simulate, label, train bit-identical; checkpoint exact; CSV exact; PGM max error " +
                       fmt("%.2e", pgm_err);
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f + ";";
  }
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  report(1, "kernel exactness", kernel_exactness);
  report(2, "gradient gate", gradient_gate);
  report(3, "labeling oracle", labeling_oracle);
  report(4, "interpolation oracle", interpolation_oracle);
  report(5, "convergence", convergence);
  report(6, "ablation ordering", ablation_ordering);
  report(7, "invariance suite", invariance_suite);
  report(8, "determinism and round-trips", determinism_and_round_trips);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
