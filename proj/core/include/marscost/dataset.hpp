#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "marscost/labeling.hpp"
#include "marscost/net.hpp"
#include "marscost/sim.hpp"

namespace marscost {

/// splitmix-style combination used to derive per-run and per-frame seeds from one global seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

struct RunSpec {
  std::vector<Eigen::Vector2d> waypoints;
};

enum class Split { train, test };

struct SimConfig {
  // Every run drives its own generated terrain (seed derived from the run index) unless
  // `heightmap` names a PGM with a sidecar, which all runs then share.
  int terrain_rows = 161;
  int terrain_cols = 161;
  double cell_size = 0.125;
  double roughness = 1.0;
  TerrainOptions terrain;
  std::filesystem::path heightmap;

  double speed = 0.5;   // m/s
  double dt = 0.2;      // s
  double gravity = 3.71;
  double imu_noise = 2.0;
  TrajectoryOptions trajectory;

  int frame_stride = 4;  // capture sensors every n-th pose
  int lidar_rays = 3000;
  double lidar_range = 6.0;
  LidarOptions lidar;
  int image_rows = 48;
  int image_cols = 64;
  CameraOptions camera;

  std::vector<RunSpec> runs;
  std::vector<std::size_t> test_runs;

  Split split_of(std::size_t run) const;

  SimConfig();  // sets a downward-looking LiDAR field of view
  void validate() const;
};

struct SimRun {
  Trajectory trajectory;
  std::vector<ImuSample> imu;
  std::vector<int> frames;  // pose indices with a capture
  std::vector<PointCloud> clouds;  // sensor frame
  std::vector<Image> images;       // quantized to 8 bits, as stored on disk
};

Heightfield make_terrain(const SimConfig& cfg, std::uint64_t seed, std::size_t run_index);

/// Simulates run `run_index` on `hf` (normally make_terrain for the same run).
SimRun simulate_run(const Heightfield& hf, const SimConfig& cfg, std::size_t run_index, std::uint64_t seed);

/// Per-run directory: trajectory.csv, imu.csv, cloud_<k>.csv, image_<k>.ppm (k = pose index).
void write_run(const std::filesystem::path& dir, const SimRun& run);
SimRun read_run(const std::filesystem::path& dir);

std::string trajectory_csv(const Trajectory& traj);
std::string imu_csv(std::span<const ImuSample> imu);
std::string cloud_csv(const PointCloud& cloud);

/// Sparse labels as CSV (x_m, y_m, tc).
std::string sparse_csv(const SparseCostmap& sparse);
SparseCostmap parse_sparse_csv(const std::string& text);

struct SceneLabels {
  GridSpec coarse;
  GridSpec fine;
  std::vector<SparseCostmap> sparse;  // per run, raw TC
  DenseCostmap dense;                 // all runs merged
};

/// Labels runs that share one terrain on a common grid. The dense map holds raw TC.
SceneLabels label_scene(std::span<const SimRun> runs, const LabelingConfig& cfg);

struct LabelRange {
  double tc_min = 0.0;
  double tc_max = 0.0;
  bool degenerate = false;
};

/// Joint min-max normalization of the dense maps of several scenes, in place.
LabelRange normalize_scenes(std::span<SceneLabels* const> scenes);

struct SampleConfig {
  int bev_cells = 32;
  double bev_resolution = 0.125;
  GridSpec grid() const { return centered_grid(bev_cells, bev_resolution); }
};

/// Re-expresses the sensor-frame cloud in the rover's level frame (yaw only, origin at the body
/// position) and crops the matching target from the world label map by nearest fine cell.
Sample make_sample(const PointCloud& sensor_cloud, const Image& image, const Pose& pose,
                   const DenseCostmap& world_labels, const GridSpec& bev, double lidar_mount);

/// One sample per captured frame whose target has at least one valid cell.
std::vector<Sample> make_samples(const SimRun& run, const DenseCostmap& world_labels, const GridSpec& bev,
                                 double lidar_mount);

struct Dataset {
  std::vector<SimRun> runs;
  std::vector<SceneLabels> labels;  // per run, normalized jointly
  LabelRange range;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// In-memory simulate -> label -> sample pipeline; sim.test_runs form the test split.
Dataset build_dataset(const SimConfig& sim, const LabelingConfig& labeling, const SampleConfig& samples,
                      std::uint64_t seed);

/// Runs over rough terrain with the last `test_runs` of them held out.
SimConfig synthetic_sim_config(int train_runs, int test_runs);

}  // namespace marscost
