#pragma once

#include <span>
#include <vector>

#include "marscost/grid.hpp"
#include "marscost/sim.hpp"

namespace marscost {

struct InertialSample {
  Vec3 position = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// Samples that fell into one cell, in trajectory order.
struct CellSamples {
  CellIndex cell;
  std::vector<InertialSample> samples;
};

struct SparseLabel {
  double x = 0.0;
  double y = 0.0;
  double cost = 0.0;
};

struct SparseCostmap {
  std::vector<SparseLabel> entries;
};

struct LabelingConfig {
  double w1 = 1.0;  // acceleration RMS
  double w2 = 1.0;  // cumulative angular change
  double w3 = 1.0;  // spatial jerk RMS
  double epsilon = 1e-3;
  double kernel_radius = 1.0;
  double coarse_res = 0.2;
  double fine_res = 0.05;

  void validate() const;
};

/// Pairs each pose with the nearest-in-time IMU sample (skew at most half the local pose
/// spacing) and groups the pairs by grid cell. Cells appear in order of first visit.
/// Throws RangeError naming the first pose that falls outside `grid`.
std::vector<CellSamples> bin_trajectory(std::span<const Pose> poses, std::span<const ImuSample> imu,
                                        const GridSpec& grid);

/// Traversability cost of one cell:
///   w1 * RMS(|a_i|) + w2 * theta_cum + w3 * RMS(|a_{i+1} - a_i| / max(ds_i, eps))
/// with theta_cum = sum |w_i| ds_i / sum ds_i over consecutive pairs. Jerk and theta_cum are
/// zero for single-sample cells. When every ds_i is zero theta_cum falls back to the plain
/// mean of |w_i| over the pairs (the limit of equal weights).
double cell_cost(const CellSamples& samples, const LabelingConfig& cfg);

/// Compactly supported kernel, K(0) = 1, K(d >= r) = 0, C^1 at the boundary.
double sparse_kernel(double d, double r);

/// Kernel-weighted mean of the sparse labels at every cell center of `grid`.
/// Cells whose total weight is <= 1e-12 are marked invalid with value 0.
DenseCostmap interpolate_costmap(const SparseCostmap& sparse, const GridSpec& grid, const LabelingConfig& cfg);

struct NormalizedLabels {
  std::vector<DenseCostmap> maps;
  double min = 0.0;
  double max = 0.0;
  bool degenerate = false;  // max == min; every valid cell set to 0
};

/// Joint min-max over the valid cells of all maps.
NormalizedLabels normalize_labels(std::vector<DenseCostmap> maps);

struct LabelSet {
  GridSpec coarse_grid;
  GridSpec fine_grid;
  SparseCostmap sparse;  // one entry per visited coarse cell, at the cell center
  DenseCostmap dense;    // raw (unnormalized) interpolated costs on the fine grid
};

/// Coarse grid snapped to multiples of coarse_res covering the poses plus one kernel radius;
/// the fine grid shares its origin and spans ceil(extent / fine_res) cells per axis.
std::pair<GridSpec, GridSpec> label_grids(std::span<const Pose> poses, const LabelingConfig& cfg);

LabelSet build_labels(const Trajectory& traj, std::span<const ImuSample> imu, const LabelingConfig& cfg);

/// Same as above on caller-supplied grids, so several runs can share one scene grid.
LabelSet build_labels(const Trajectory& traj, std::span<const ImuSample> imu, const LabelingConfig& cfg,
                      const GridSpec& coarse, const GridSpec& fine);

/// Sparse labels for one run binned on `coarse`.
SparseCostmap sparse_labels(std::span<const Pose> poses, std::span<const ImuSample> imu, const LabelingConfig& cfg,
                            const GridSpec& coarse);

}  // namespace marscost
