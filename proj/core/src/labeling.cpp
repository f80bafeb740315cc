#include "marscost/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_map>

namespace marscost {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t nearest_imu(std::span<const ImuSample> imu, double t) {
  auto it = std::lower_bound(imu.begin(), imu.end(), t, [](const ImuSample& s, double v) { return s.t < v; });
  if (it == imu.end()) return imu.size() - 1;
  const auto idx = static_cast<std::size_t>(it - imu.begin());
  if (idx == 0) return 0;
  return (t - imu[idx - 1].t) <= (imu[idx].t - t) ? idx - 1 : idx;
}

std::int64_t bucket_key(std::int64_t bx, std::int64_t by) { return (by << 32) ^ (bx & 0xffffffffLL); }

}  // namespace

void LabelingConfig::validate() const {
  for (double v : {w1, w2, w3, epsilon, kernel_radius, coarse_res, fine_res}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError("LabelingConfig: all fields must be positive");
  }
}

std::vector<CellSamples> bin_trajectory(std::span<const Pose> poses, std::span<const ImuSample> imu,
                                        const GridSpec& grid) {
  grid.validate();
  if (poses.empty()) throw ArgumentError("bin_trajectory: no poses");
  if (imu.empty()) throw ArgumentError("bin_trajectory: no IMU samples");
  for (std::size_t i = 1; i < imu.size(); ++i) {
    if (imu[i].t < imu[i - 1].t) throw ArgumentError("bin_trajectory: IMU timestamps not sorted");
  }

  std::vector<CellSamples> cells;
  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Pose& p = poses[k];
    const CellIndex c = grid.cell_of(p.position.x(), p.position.y());
    if (!grid.contains(c)) throw RangeError("bin_trajectory: pose " + std::to_string(k) + " outside grid");

    const std::size_t m = nearest_imu(imu, p.t);
    if (poses.size() > 1) {
      double spacing = std::numeric_limits<double>::infinity();
      if (k > 0) spacing = std::min(spacing, p.t - poses[k - 1].t);
      if (k + 1 < poses.size()) spacing = std::min(spacing, poses[k + 1].t - p.t);
      if (std::abs(imu[m].t - p.t) > 0.5 * spacing + 1e-12) {
        throw ArgumentError("bin_trajectory: no IMU sample within half a period of pose " + std::to_string(k));
      }
    }

    const std::size_t key = grid.flat(c.row, c.col);
    auto [it, inserted] = slot.try_emplace(key, cells.size());
    if (inserted) cells.push_back({c, {}});
    cells[it->second].samples.push_back({p.position, imu[m].accel, imu[m].gyro});
  }
  return cells;
}

double cell_cost(const CellSamples& cs, const LabelingConfig& cfg) {
  const auto& s = cs.samples;
  if (s.empty()) throw ArgumentError("cell_cost: cell has no samples");
  const std::size_t T = s.size();

  double sum_a2 = 0.0;
  for (const auto& x : s) sum_a2 += x.accel.squaredNorm();
  const double accel_rms = std::sqrt(sum_a2 / static_cast<double>(T));

  double theta = 0.0;
  double jerk_rms = 0.0;
  if (T >= 2) {
    double sum_ds = 0.0, sum_wds = 0.0, sum_w = 0.0, sum_j2 = 0.0;
    for (std::size_t i = 0; i + 1 < T; ++i) {
      const double ds = (s[i + 1].position - s[i].position).norm();
      const double w = s[i].gyro.norm();
      sum_ds += ds;
      sum_wds += w * ds;
      sum_w += w;
      const double j = (s[i + 1].accel - s[i].accel).norm() / std::max(ds, cfg.epsilon);
      sum_j2 += j * j;
    }
    const auto pairs = static_cast<double>(T - 1);
    theta = sum_ds > 0.0 ? sum_wds / sum_ds : sum_w / pairs;
    jerk_rms = std::sqrt(sum_j2 / pairs);
  }
  return cfg.w1 * accel_rms + cfg.w2 * theta + cfg.w3 * jerk_rms;
}

double sparse_kernel(double d, double r) {
  if (!(d >= 0.0)) throw ArgumentError("sparse_kernel: distance must be non-negative");
  if (!(r > 0.0)) throw ArgumentError("sparse_kernel: radius must be positive");
  if (d >= r) return 0.0;
  const double u = d / r;
  // Reflect about u = 1/2 so the sine argument stays small near the boundary, where the two
  // terms cancel to fifth order.
  double s, c;
  if (u > 0.5) {
    const double e = 1.0 - u;
    s = -std::sin(kTwoPi * e);
    c = std::cos(kTwoPi * e);
  } else {
    s = std::sin(kTwoPi * u);
    c = std::cos(kTwoPi * u);
  }
  const double k = (2.0 + c) / 3.0 * (1.0 - u) + s / kTwoPi;
  return k > 0.0 ? k : 0.0;
}

DenseCostmap interpolate_costmap(const SparseCostmap& sparse, const GridSpec& grid, const LabelingConfig& cfg) {
  grid.validate();
  cfg.validate();
  if (sparse.entries.empty()) throw ArgumentError("interpolate_costmap: no sparse labels");
  for (const auto& e : sparse.entries) {
    if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.cost) || e.cost < 0.0) {
      throw ArgumentError("interpolate_costmap: labels must be finite with non-negative cost");
    }
  }

  // Buckets of side r: everything within r of a query lies in the 3x3 neighbourhood.
  const double r = cfg.kernel_radius;
  auto bucket_of = [&](double x, double y) {
    return std::pair<std::int64_t, std::int64_t>{static_cast<std::int64_t>(std::floor((x - grid.origin_x) / r)),
                                                 static_cast<std::int64_t>(std::floor((y - grid.origin_y) / r))};
  };
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets;
  for (std::size_t n = 0; n < sparse.entries.size(); ++n) {
    const auto [bx, by] = bucket_of(sparse.entries[n].x, sparse.entries[n].y);
    buckets[bucket_key(bx, by)].push_back(n);
  }

  DenseCostmap out(grid);
  std::vector<std::size_t> candidates;
  for (int i = 0; i < grid.rows; ++i) {
    const double qy = grid.center_y(i);
    for (int j = 0; j < grid.cols; ++j) {
      const double qx = grid.center_x(j);
      const auto [bx, by] = bucket_of(qx, qy);
      candidates.clear();
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          auto it = buckets.find(bucket_key(bx + dx, by + dy));
          if (it != buckets.end()) candidates.insert(candidates.end(), it->second.begin(), it->second.end());
        }
      }
      // Entry order matches a plain scan over all labels, so sums agree with it exactly.
      std::sort(candidates.begin(), candidates.end());
      double sw = 0.0, swv = 0.0;
      for (std::size_t n : candidates) {
        const auto& e = sparse.entries[n];
        const double d = std::hypot(e.x - qx, e.y - qy);
        if (d >= r) continue;
        const double w = sparse_kernel(d, r);
        sw += w;
        swv += w * e.cost;
      }
      if (sw > 1e-12) {
        out.at(i, j) = swv / sw;
        out.valid[grid.flat(i, j)] = 1;
      }
    }
  }
  return out;
}

NormalizedLabels normalize_labels(std::vector<DenseCostmap> maps) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  for (const auto& m : maps) {
    for (std::size_t k = 0; k < m.values.size(); ++k) {
      if (!m.valid[k]) continue;
      lo = std::min(lo, m.values[k]);
      hi = std::max(hi, m.values[k]);
      ++count;
    }
  }
  if (count == 0) throw ArgumentError("normalize_labels: no valid cells");

  NormalizedLabels out;
  out.min = lo;
  out.max = hi;
  out.degenerate = !(hi > lo);
  for (auto& m : maps) {
    for (std::size_t k = 0; k < m.values.size(); ++k) {
      if (!m.valid[k]) continue;
      m.values[k] = out.degenerate ? 0.0 : (m.values[k] - lo) / (hi - lo);
    }
  }
  out.maps = std::move(maps);
  return out;
}

std::pair<GridSpec, GridSpec> label_grids(std::span<const Pose> poses, const LabelingConfig& cfg) {
  cfg.validate();
  if (poses.empty()) throw ArgumentError("label_grids: no poses");
  double x0 = poses[0].position.x(), x1 = x0, y0 = poses[0].position.y(), y1 = y0;
  for (const auto& p : poses) {
    x0 = std::min(x0, p.position.x());
    x1 = std::max(x1, p.position.x());
    y0 = std::min(y0, p.position.y());
    y1 = std::max(y1, p.position.y());
  }
  const double r = cfg.kernel_radius, res = cfg.coarse_res;
  GridSpec coarse;
  coarse.resolution = res;
  coarse.origin_x = std::floor((x0 - r) / res) * res;
  coarse.origin_y = std::floor((y0 - r) / res) * res;
  coarse.cols = static_cast<int>(std::floor((x1 + r - coarse.origin_x) / res)) + 1;
  coarse.rows = static_cast<int>(std::floor((y1 + r - coarse.origin_y) / res)) + 1;

  GridSpec fine = coarse;
  fine.resolution = cfg.fine_res;
  fine.cols = static_cast<int>(std::ceil(coarse.cols * res / cfg.fine_res - 1e-9));
  fine.rows = static_cast<int>(std::ceil(coarse.rows * res / cfg.fine_res - 1e-9));
  return {coarse, fine};
}

SparseCostmap sparse_labels(std::span<const Pose> poses, std::span<const ImuSample> imu, const LabelingConfig& cfg,
                            const GridSpec& coarse) {
  cfg.validate();
  SparseCostmap sparse;
  for (const auto& cell : bin_trajectory(poses, imu, coarse)) {
    sparse.entries.push_back(
        {coarse.center_x(cell.cell.col), coarse.center_y(cell.cell.row), cell_cost(cell, cfg)});
  }
  return sparse;
}

LabelSet build_labels(const Trajectory& traj, std::span<const ImuSample> imu, const LabelingConfig& cfg,
                      const GridSpec& coarse, const GridSpec& fine) {
  traj.validate();
  LabelSet out;
  out.coarse_grid = coarse;
  out.fine_grid = fine;
  out.sparse = sparse_labels(traj.poses, imu, cfg, coarse);
  out.dense = interpolate_costmap(out.sparse, fine, cfg);
  return out;
}

LabelSet build_labels(const Trajectory& traj, std::span<const ImuSample> imu, const LabelingConfig& cfg) {
  const auto [coarse, fine] = label_grids(traj.poses, cfg);
  return build_labels(traj, imu, cfg, coarse, fine);
}

}  // namespace marscost
