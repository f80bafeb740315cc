#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "marscost/grid.hpp"

namespace marscost {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Elevation grid with aligned surface colors. Node (row, col) sits at world
/// (origin_x + col*cell_size, origin_y + row*cell_size); the queryable extent is the
/// closed rectangle spanned by the nodes.
struct Heightfield {
  Grid2<double> elevations;
  Grid2<Rgb> colors;
  double cell_size = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  int rows() const { return elevations.rows(); }
  int cols() const { return elevations.cols(); }
  double max_x() const { return origin_x + (cols() - 1) * cell_size; }
  double max_y() const { return origin_y + (rows() - 1) * cell_size; }
  bool inside(double x, double y) const {
    return x >= origin_x && x <= max_x() && y >= origin_y && y <= max_y();
  }

  /// Throws ArgumentError when any invariant is broken.
  void validate() const;
};

struct Pose {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();  // world <- body
};

struct Trajectory {
  std::vector<Pose> poses;

  /// >= 2 poses, strictly increasing t, unit quaternions.
  void validate() const;
};

struct ImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();  // specific force, body frame, m/s^2
  Vec3 gyro = Vec3::Zero();   // body rates, rad/s
};

struct ColoredPoint {
  Vec3 xyz = Vec3::Zero();
  Rgb rgb;
};

struct PointCloud {
  std::vector<ColoredPoint> points;
};

/// H x W x 3 image, row-major interleaved, values in [0,1].
struct Image {
  int rows = 0;
  int cols = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : rows(h), cols(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, fill) {}

  double& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * cols + c) * 3 + ch]; }
  double at(int r, int c, int ch) const { return pixels[(static_cast<std::size_t>(r) * cols + c) * 3 + ch]; }

  friend bool operator==(const Image&, const Image&) = default;
};

struct SurfaceSample {
  double height = 0.0;
  Vec3 normal = Vec3::UnitZ();
  Rgb color;
};

// --- terrain --------------------------------------------------------------

struct TerrainOptions {
  // Large-scale relief: octave wavelengths in cells and amplitudes in meters.
  double relief_wavelength_cells = 32.0;
  double relief_amplitude_m = 0.8;
  int relief_octaves = 2;
  // Small-scale rocks confined to patches selected by a low-frequency mask.
  double rock_wavelength_cells = 4.0;
  double rock_amplitude_m = 0.15;
  int rock_octaves = 2;
  double patch_wavelength_cells = 24.0;
  double persistence = 0.5;
};

Heightfield generate_heightfield(std::uint64_t seed, int rows, int cols, double cell_size, double roughness,
                                 const TerrainOptions& opts = {});

/// Grayscale PGM (P2/P5) plus `<stem>.meta.json` holding min_height_m / max_height_m.
/// Raster row r maps to heightfield row r. `cell_size` overrides any sidecar value.
Heightfield load_heightfield(const std::filesystem::path& path, double cell_size);

/// Writes the PGM + sidecar pair read by load_heightfield (16-bit quantized).
void save_heightfield(const Heightfield& hf, const std::filesystem::path& path);

SurfaceSample sample_surface(const Heightfield& hf, double x, double y);

/// Bilinearly interpolated central-difference gradient (dh/dx, dh/dy).
Eigen::Vector2d surface_gradient(const Heightfield& hf, double x, double y);

// --- rover motion ---------------------------------------------------------

struct TrajectoryOptions {
  double chassis_height = 0.3;  // body origin above ground, m
};

Trajectory generate_trajectory(const Heightfield& hf, std::span<const Eigen::Vector2d> waypoints, double speed,
                               double dt, const TrajectoryOptions& opts = {});

std::vector<ImuSample> synthesize_imu(const Trajectory& traj, const Heightfield& hf, double gravity,
                                      double noise_scale, std::uint64_t seed);

// --- exteroception --------------------------------------------------------

struct LidarOptions {
  double azimuth_min_deg = -180.0;
  double azimuth_max_deg = 180.0;
  double elevation_min_deg = -7.0;
  double elevation_max_deg = 52.0;
  double mount_height = 0.5;  // sensor origin above the body origin, m
};

struct RayHit {
  Vec3 point = Vec3::Zero();  // world frame
  double range = 0.0;
  Rgb color;
};

/// Ray march at cell_size/4 with bisection refinement; the returned point lies within
/// kRayTolerance of the surface. Leaving the field's extent counts as a miss.
std::optional<RayHit> cast_ray(const Heightfield& hf, const Vec3& origin, const Vec3& direction, double max_range);

inline constexpr double kRayTolerance = 1e-3;

/// Sensor pose (world <- sensor) for a device mounted `mount_height` above the body origin.
Eigen::Isometry3d sensor_pose(const Pose& pose, double mount_height);

PointCloud simulate_lidar(const Heightfield& hf, const Pose& pose, int rays, double max_range, std::uint64_t seed,
                          const LidarOptions& opts = {});

struct CameraOptions {
  double hfov_deg = 90.0;
  double pitch_down_deg = 25.0;
  double mount_height = 0.5;
  double max_range = 30.0;
  Rgb sky{0.82, 0.66, 0.52};
};

Image render_camera(const Heightfield& hf, const Pose& pose, int h_px, int w_px, const CameraOptions& opts = {});

/// Yaw/pitch/roll (ZYX) of a body orientation.
Vec3 yaw_pitch_roll(const Quat& q);

}  // namespace marscost
