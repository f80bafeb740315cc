#include "marscost/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "marscost/raster_io.hpp"

namespace marscost {
namespace fs = std::filesystem;
using io::format_double;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SimConfig::SimConfig() {
  // The rover needs to see the ground it is about to cross; an upward-biased fan sees almost none of it.
  lidar.elevation_min_deg = -75.0;
  lidar.elevation_max_deg = 15.0;
  camera.max_range = 15.0;
}

void SimConfig::validate() const {
  if (heightmap.empty() && (terrain_rows < 2 || terrain_cols < 2)) {
    throw ArgumentError("sim: terrain needs at least 2x2 nodes");
  }
  if (!(cell_size > 0.0) || !(speed > 0.0) || !(dt > 0.0) || !(lidar_range > 0.0)) {
    throw ArgumentError("sim: cell_size, speed, dt and lidar_range must be positive");
  }
  if (roughness < 0.0 || imu_noise < 0.0) throw ArgumentError("sim: roughness and imu_noise must be >= 0");
  if (frame_stride < 1 || lidar_rays < 1 || image_rows < 1 || image_cols < 1) {
    throw ArgumentError("sim: frame_stride, lidar_rays and image dimensions must be >= 1");
  }
  if (runs.empty()) throw ArgumentError("sim: no runs configured");
  for (std::size_t r : test_runs) {
    if (r >= runs.size()) throw ArgumentError("sim: test run " + std::to_string(r) + " does not exist");
  }
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].waypoints.size() < 2) {
      throw ArgumentError("sim: run " + std::to_string(r) + " needs at least 2 waypoints");
    }
  }
}

Split SimConfig::split_of(std::size_t run) const {
  return std::find(test_runs.begin(), test_runs.end(), run) != test_runs.end() ? Split::test : Split::train;
}

Heightfield make_terrain(const SimConfig& cfg, std::uint64_t seed, std::size_t run_index) {
  if (!cfg.heightmap.empty()) return load_heightfield(cfg.heightmap, cfg.cell_size);
  return generate_heightfield(derive_seed(seed, 2000 + run_index), cfg.terrain_rows, cfg.terrain_cols, cfg.cell_size,
                              cfg.roughness, cfg.terrain);
}

namespace {

Image quantize(Image img) {
  for (double& v : img.pixels) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return img;
}

}  // namespace

SimRun simulate_run(const Heightfield& hf, const SimConfig& cfg, std::size_t run_index, std::uint64_t seed) {
  if (run_index >= cfg.runs.size()) throw ArgumentError("simulate_run: run index out of range");
  const std::uint64_t run_seed = derive_seed(seed, 1000 + run_index);
  SimRun run;
  run.trajectory = generate_trajectory(hf, cfg.runs[run_index].waypoints, cfg.speed, cfg.dt, cfg.trajectory);
  run.imu = synthesize_imu(run.trajectory, hf, cfg.gravity, cfg.imu_noise, derive_seed(run_seed, 0));
  const auto& poses = run.trajectory.poses;
  for (std::size_t k = 0; k < poses.size(); k += static_cast<std::size_t>(cfg.frame_stride)) {
    run.frames.push_back(static_cast<int>(k));
    run.clouds.push_back(
        simulate_lidar(hf, poses[k], cfg.lidar_rays, cfg.lidar_range, derive_seed(run_seed, 1 + k), cfg.lidar));
    run.images.push_back(quantize(render_camera(hf, poses[k], cfg.image_rows, cfg.image_cols, cfg.camera)));
  }
  return run;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t,x,y,z,qw,qx,qy,qz\n";
  for (const auto& p : traj.poses) {
    const auto& q = p.orientation;
    for (double v : {p.t, p.position.x(), p.position.y(), p.position.z(), q.w(), q.x(), q.y(), q.z()}) {
      out += format_double(v);
      out += ',';
    }
    out.back() = '\n';
  }
  return out;
}

std::string imu_csv(std::span<const ImuSample> imu) {
  std::string out = "t,ax,ay,az,wx,wy,wz\n";
  for (const auto& s : imu) {
    for (double v : {s.t, s.accel.x(), s.accel.y(), s.accel.z(), s.gyro.x(), s.gyro.y(), s.gyro.z()}) {
      out += format_double(v);
      out += ',';
    }
    out.back() = '\n';
  }
  return out;
}

std::string cloud_csv(const PointCloud& cloud) {
  std::string out = "x,y,z,r,g,b\n";
  for (const auto& p : cloud.points) {
    for (double v : {p.xyz.x(), p.xyz.y(), p.xyz.z(), p.rgb.r, p.rgb.g, p.rgb.b}) {
      out += format_double(v);
      out += ',';
    }
    out.back() = '\n';
  }
  return out;
}

namespace {

/// Parses a CSV with the exact header `header`; every row must have the same column count.
std::vector<std::vector<double>> read_table(const std::string& text, const std::string& header,
                                            const std::string& what) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(what + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw FormatError(what + ": expected header '" + header + "'");
  const std::size_t cols = io::split_csv_line(header).size();
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != cols) throw FormatError(what + ": wrong column count on line " + std::to_string(lineno));
    std::vector<double> row;
    row.reserve(cols);
    for (const auto& f : fields) row.push_back(io::parse_double(f));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_run(const fs::path& dir, const SimRun& run) {
  fs::create_directories(dir);
  io::write_file_atomic(dir / "trajectory.csv", trajectory_csv(run.trajectory));
  io::write_file_atomic(dir / "imu.csv", imu_csv(run.imu));
  for (std::size_t f = 0; f < run.frames.size(); ++f) {
    const std::string k = std::to_string(run.frames[f]);
    io::write_file_atomic(dir / ("cloud_" + k + ".csv"), cloud_csv(run.clouds[f]));
    io::write_ppm(dir / ("image_" + k + ".ppm"), run.images[f]);
  }
}

SimRun read_run(const fs::path& dir) {
  SimRun run;
  for (const auto& r : read_table(io::read_file(dir / "trajectory.csv"), "t,x,y,z,qw,qx,qy,qz", "trajectory.csv")) {
    Pose p;
    p.t = r[0];
    p.position = Vec3(r[1], r[2], r[3]);
    p.orientation = Quat(r[4], r[5], r[6], r[7]);
    run.trajectory.poses.push_back(p);
  }
  for (const auto& r : read_table(io::read_file(dir / "imu.csv"), "t,ax,ay,az,wx,wy,wz", "imu.csv")) {
    run.imu.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  }

  std::map<int, fs::path> clouds;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with("cloud_") || !name.ends_with(".csv")) continue;
    const std::string_view digits(name.data() + 6, name.size() - 10);
    int k = -1;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || k < 0) continue;
    clouds.emplace(k, entry.path());
  }
  for (const auto& [k, path] : clouds) {
    if (static_cast<std::size_t>(k) >= run.trajectory.poses.size()) {
      throw FormatError(path.filename().string() + ": frame index beyond trajectory");
    }
    PointCloud cloud;
    for (const auto& r : read_table(io::read_file(path), "x,y,z,r,g,b", path.filename().string())) {
      cloud.points.push_back({Vec3(r[0], r[1], r[2]), Rgb{r[3], r[4], r[5]}});
    }
    run.frames.push_back(k);
    run.clouds.push_back(std::move(cloud));
    run.images.push_back(io::read_ppm(dir / ("image_" + std::to_string(k) + ".ppm")));
  }
  run.trajectory.validate();
  return run;
}

std::string sparse_csv(const SparseCostmap& sparse) {
  std::string out = "x_m,y_m,tc\n";
  for (const auto& e : sparse.entries) {
    out += format_double(e.x) + ',' + format_double(e.y) + ',' + format_double(e.cost) + '\n';
  }
  return out;
}

SparseCostmap parse_sparse_csv(const std::string& text) {
  SparseCostmap s;
  for (const auto& r : read_table(text, "x_m,y_m,tc", "sparse labels")) s.entries.push_back({r[0], r[1], r[2]});
  return s;
}

SceneLabels label_scene(std::span<const SimRun> runs, const LabelingConfig& cfg) {
  cfg.validate();
  if (runs.empty()) throw ArgumentError("label_scene: no runs");
  std::vector<Pose> all;
  for (const auto& run : runs) all.insert(all.end(), run.trajectory.poses.begin(), run.trajectory.poses.end());

  SceneLabels out;
  std::tie(out.coarse, out.fine) = label_grids(all, cfg);
  SparseCostmap merged;
  for (const auto& run : runs) {
    out.sparse.push_back(sparse_labels(run.trajectory.poses, run.imu, cfg, out.coarse));
    const auto& e = out.sparse.back().entries;
    merged.entries.insert(merged.entries.end(), e.begin(), e.end());
  }
  out.dense = interpolate_costmap(merged, out.fine, cfg);
  return out;
}

LabelRange normalize_scenes(std::span<SceneLabels* const> scenes) {
  std::vector<DenseCostmap> maps;
  for (const SceneLabels* s : scenes) maps.push_back(s->dense);
  NormalizedLabels norm = normalize_labels(std::move(maps));
  for (std::size_t k = 0; k < scenes.size(); ++k) scenes[k]->dense = std::move(norm.maps[k]);
  return {norm.min, norm.max, norm.degenerate};
}

Sample make_sample(const PointCloud& sensor_cloud, const Image& image, const Pose& pose,
                   const DenseCostmap& world_labels, const GridSpec& bev, double lidar_mount) {
  bev.validate();
  const double yaw = yaw_pitch_roll(pose.orientation).x();
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Eigen::Isometry3d world_from_sensor = sensor_pose(pose, lidar_mount);

  Sample out;
  out.image = image;
  out.cloud.points.reserve(sensor_cloud.points.size());
  for (const auto& p : sensor_cloud.points) {
    const Vec3 d = world_from_sensor * p.xyz - pose.position;
    out.cloud.points.push_back({Vec3(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()), p.rgb});
  }

  out.target = DenseCostmap(bev);
  for (int i = 0; i < bev.rows; ++i) {
    for (int j = 0; j < bev.cols; ++j) {
      const double lx = bev.center_x(j), ly = bev.center_y(i);
      const double wx = pose.position.x() + c * lx - s * ly;
      const double wy = pose.position.y() + s * lx + c * ly;
      const auto cell = world_labels.grid.locate(wx, wy);
      if (!cell || !world_labels.is_valid(cell->row, cell->col)) continue;
      out.target.at(i, j) = world_labels.at(cell->row, cell->col);
      out.target.valid[bev.flat(i, j)] = 1;
    }
  }
  return out;
}

std::vector<Sample> make_samples(const SimRun& run, const DenseCostmap& world_labels, const GridSpec& bev,
                                 double lidar_mount) {
  std::vector<Sample> out;
  for (std::size_t f = 0; f < run.frames.size(); ++f) {
    const Pose& pose = run.trajectory.poses.at(static_cast<std::size_t>(run.frames[f]));
    Sample s = make_sample(run.clouds[f], run.images[f], pose, world_labels, bev, lidar_mount);
    if (s.target.valid_count() > 0) out.push_back(std::move(s));
  }
  return out;
}

Dataset build_dataset(const SimConfig& sim, const LabelingConfig& labeling, const SampleConfig& samples,
                      std::uint64_t seed) {
  sim.validate();
  if (sim.test_runs.empty() || sim.test_runs.size() == sim.runs.size()) {
    throw ArgumentError("build_dataset: need at least one training run and one test run");
  }
  Dataset ds;
  for (std::size_t r = 0; r < sim.runs.size(); ++r) {
    ds.runs.push_back(simulate_run(make_terrain(sim, seed, r), sim, r, seed));
    ds.labels.push_back(label_scene(std::span<const SimRun>(&ds.runs.back(), 1), labeling));
  }
  std::vector<SceneLabels*> scenes;
  for (auto& l : ds.labels) scenes.push_back(&l);
  ds.range = normalize_scenes(scenes);

  const GridSpec bev = samples.grid();
  for (std::size_t r = 0; r < ds.runs.size(); ++r) {
    auto part = make_samples(ds.runs[r], ds.labels[r].dense, bev, sim.lidar.mount_height);
    auto& dst = sim.split_of(r) == Split::test ? ds.test : ds.train;
    std::move(part.begin(), part.end(), std::back_inserter(dst));
  }
  return ds;
}

SimConfig synthetic_sim_config(int train_runs, int test_runs) {
  static const std::vector<std::vector<Eigen::Vector2d>> kPaths = {
      {{2.0, 3.0}, {18.0, 5.0}, {17.0, 17.0}},
      {{3.0, 17.0}, {10.0, 2.5}, {18.0, 11.0}},
      {{2.0, 10.0}, {18.0, 9.0}},
      {{5.0, 2.0}, {6.0, 18.0}, {14.0, 17.5}},
      {{17.5, 2.0}, {3.0, 7.0}, {12.0, 15.0}},
      {{10.0, 18.0}, {13.0, 3.0}},
  };
  const int total = train_runs + test_runs;
  if (train_runs < 1 || test_runs < 0 || total > static_cast<int>(kPaths.size())) {
    throw ArgumentError("synthetic_sim_config: at most " + std::to_string(kPaths.size()) + " runs, at least one for training");
  }
  SimConfig cfg;
  for (int r = 0; r < train_runs; ++r) cfg.runs.push_back({kPaths[static_cast<std::size_t>(r)]});
  // Held-out runs reuse the first paths; each run has its own terrain anyway.
  for (int r = 0; r < test_runs; ++r) {
    cfg.test_runs.push_back(cfg.runs.size());
    cfg.runs.push_back({kPaths[static_cast<std::size_t>(r)]});
  }
  return cfg;
}

}  // namespace marscost
