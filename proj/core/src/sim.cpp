#include "marscost/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"
#include "marscost/raster_io.hpp"

namespace marscost {
namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Lattice value in [-1, 1] for integer coordinates; independent of platform RNGs.
double lattice(std::uint64_t seed, std::uint64_t layer, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(layer));
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(std::uint64_t seed, std::uint64_t layer, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double u = fade(x - fx);
  const double v = fade(y - fy);
  const double a = lattice(seed, layer, ix, iy);
  const double b = lattice(seed, layer, ix + 1, iy);
  const double c = lattice(seed, layer, ix, iy + 1);
  const double d = lattice(seed, layer, ix + 1, iy + 1);
  const double top = a + (b - a) * u;
  const double bottom = c + (d - c) * u;
  return top + (bottom - top) * v;
}

double fbm(std::uint64_t seed, std::uint64_t layer, double x, double y, double wavelength, int octaves,
           double persistence) {
  double sum = 0.0;
  double amp = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(seed, layer * 16 + static_cast<std::uint64_t>(o), x / wavelength, y / wavelength);
    wavelength *= 0.5;
    amp *= persistence;
  }
  return sum;
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

Rgb lerp(const Rgb& a, const Rgb& b, double t) { return {lerp(a.r, b.r, t), lerp(a.g, b.g, t), lerp(a.b, b.b, t)}; }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct Bilinear {
  int r0, c0;
  double fr, fc;
};

Bilinear locate(const Heightfield& hf, double x, double y) {
  if (!hf.inside(x, y)) {
    throw RangeError("query (" + std::to_string(x) + ", " + std::to_string(y) + ") outside heightfield extent");
  }
  const double u = (x - hf.origin_x) / hf.cell_size;
  const double v = (y - hf.origin_y) / hf.cell_size;
  const int c0 = std::min(static_cast<int>(std::floor(u)), hf.cols() - 2);
  const int r0 = std::min(static_cast<int>(std::floor(v)), hf.rows() - 2);
  return {r0, c0, v - r0, u - c0};
}

template <typename Getter>
double bilerp(const Bilinear& b, Getter get) {
  const double top = lerp(get(b.r0, b.c0), get(b.r0, b.c0 + 1), b.fc);
  const double bottom = lerp(get(b.r0 + 1, b.c0), get(b.r0 + 1, b.c0 + 1), b.fc);
  return lerp(top, bottom, b.fr);
}

// Central differences at nodes, one-sided on the border.
Eigen::Vector2d node_gradient(const Heightfield& hf, int r, int c) {
  const auto& h = hf.elevations;
  const int cl = std::max(c - 1, 0), cr = std::min(c + 1, hf.cols() - 1);
  const int rl = std::max(r - 1, 0), rr = std::min(r + 1, hf.rows() - 1);
  return {(h(r, cr) - h(r, cl)) / ((cr - cl) * hf.cell_size), (h(rr, c) - h(rl, c)) / ((rr - rl) * hf.cell_size)};
}

double height_at(const Heightfield& hf, double x, double y) {
  const Bilinear b = locate(hf, x, y);
  return bilerp(b, [&](int r, int c) { return hf.elevations(r, c); });
}

Rgb color_at(const Heightfield& hf, const Bilinear& b) {
  return {bilerp(b, [&](int r, int c) { return hf.colors(r, c).r; }),
          bilerp(b, [&](int r, int c) { return hf.colors(r, c).g; }),
          bilerp(b, [&](int r, int c) { return hf.colors(r, c).b; })};
}

double max_elevation(const Heightfield& hf) {
  return *std::max_element(hf.elevations.data().begin(), hf.elevations.data().end());
}

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError(std::string(what) + " must be positive");
}

}  // namespace

void Heightfield::validate() const {
  if (elevations.rows() < 2 || elevations.cols() < 2) throw ArgumentError("Heightfield: need at least 2x2 nodes");
  if (colors.rows() != elevations.rows() || colors.cols() != elevations.cols()) {
    throw ArgumentError("Heightfield: color grid does not match elevations");
  }
  check_positive(cell_size, "Heightfield cell_size");
  for (double h : elevations.data()) {
    if (!std::isfinite(h)) throw ArgumentError("Heightfield: non-finite elevation");
  }
  for (const Rgb& c : colors.data()) {
    for (double v : {c.r, c.g, c.b}) {
      if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("Heightfield: color outside [0,1]");
    }
  }
}

void Trajectory::validate() const {
  if (poses.size() < 2) throw ArgumentError("Trajectory: need at least 2 poses");
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Pose& p = poses[i];
    if (!std::isfinite(p.t) || !p.position.allFinite()) throw ArgumentError("Trajectory: non-finite pose");
    if (std::abs(p.orientation.norm() - 1.0) > 1e-9) throw ArgumentError("Trajectory: quaternion not unit");
    if (i > 0 && !(p.t > poses[i - 1].t)) throw ArgumentError("Trajectory: timestamps not strictly increasing");
  }
}

Heightfield generate_heightfield(std::uint64_t seed, int rows, int cols, double cell_size, double roughness,
                                 const TerrainOptions& opts) {
  if (rows < 2 || cols < 2) throw ArgumentError("generate_heightfield: rows and cols must be >= 2");
  check_positive(cell_size, "generate_heightfield: cell_size");
  if (!(roughness >= 0.0 && roughness <= 1.0)) throw ArgumentError("generate_heightfield: roughness must be in [0,1]");

  Heightfield hf;
  hf.cell_size = cell_size;
  hf.elevations = Grid2<double>(rows, cols, 0.0);
  hf.colors = Grid2<Rgb>(rows, cols);

  if (roughness > 0.0) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double relief =
            fbm(seed, 1, c, r, opts.relief_wavelength_cells, opts.relief_octaves, opts.persistence);
        const double rocks = fbm(seed, 2, c, r, opts.rock_wavelength_cells, opts.rock_octaves, opts.persistence);
        const double patch = value_noise(seed, 3, c / opts.patch_wavelength_cells, r / opts.patch_wavelength_cells);
        const double mask = std::clamp(patch / 0.4, 0.0, 1.0);
        hf.elevations(r, c) = roughness * (opts.relief_amplitude_m * relief + opts.rock_amplitude_m * mask * rocks);
      }
    }
  }

  // Regolith fades to dark rock with slope; higher ground is slightly lighter.
  const Rgb regolith{0.72, 0.45, 0.30};
  const Rgb rock{0.36, 0.26, 0.21};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double slope = node_gradient(hf, r, c).norm();
      Rgb col = lerp(regolith, rock, std::min(slope / 0.8, 1.0));
      const double shade = 1.0 + 0.1 * std::tanh(hf.elevations(r, c));
      hf.colors(r, c) = {clamp01(col.r * shade), clamp01(col.g * shade), clamp01(col.b * shade)};
    }
  }
  return hf;
}

Heightfield load_heightfield(const std::filesystem::path& path, double cell_size) {
  check_positive(cell_size, "load_heightfield: cell_size");
  const io::GrayRaster raster = io::read_pgm(path);
  if (raster.rows < 2 || raster.cols < 2) throw FormatError(path.string() + ": heightmap must be at least 2x2");

  const auto meta_path = io::sidecar_path(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  if (!meta.contains("min_height_m") || !meta["min_height_m"].is_number() || !meta.contains("max_height_m") ||
      !meta["max_height_m"].is_number()) {
    throw FormatError(meta_path.string() + ": min_height_m and max_height_m are required numbers");
  }
  const double lo = meta["min_height_m"].get<double>();
  const double hi = meta["max_height_m"].get<double>();
  if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) throw FormatError(meta_path.string() + ": bad height range");

  Heightfield hf;
  hf.cell_size = cell_size;
  hf.elevations = Grid2<double>(raster.rows, raster.cols);
  hf.colors = Grid2<Rgb>(raster.rows, raster.cols, Rgb{0.5, 0.5, 0.5});
  for (int r = 0; r < raster.rows; ++r) {
    for (int c = 0; c < raster.cols; ++c) {
      const double frac = raster.pixels[static_cast<std::size_t>(r) * raster.cols + c] / double(raster.maxval);
      hf.elevations(r, c) = lo + frac * (hi - lo);
    }
  }
  return hf;
}

void save_heightfield(const Heightfield& hf, const std::filesystem::path& path) {
  hf.validate();
  const auto [lo_it, hi_it] = std::minmax_element(hf.elevations.data().begin(), hf.elevations.data().end());
  const double lo = *lo_it, hi = *hi_it;
  io::GrayRaster raster{hf.rows(), hf.cols(), 65535, {}};
  raster.pixels.reserve(hf.elevations.size());
  for (double h : hf.elevations.data()) {
    const double frac = hi > lo ? (h - lo) / (hi - lo) : 0.0;
    raster.pixels.push_back(static_cast<std::uint16_t>(std::lround(frac * 65535.0)));
  }
  io::write_pgm_ascii(path, raster);
  nlohmann::json meta{{"min_height_m", lo}, {"max_height_m", hi}, {"cell_size_m", hf.cell_size}};
  io::write_file_atomic(io::sidecar_path(path), meta.dump(2) + "\n");
}

SurfaceSample sample_surface(const Heightfield& hf, double x, double y) {
  const Bilinear b = locate(hf, x, y);
  SurfaceSample s;
  s.height = bilerp(b, [&](int r, int c) { return hf.elevations(r, c); });
  const Eigen::Vector2d g = surface_gradient(hf, x, y);
  s.normal = Vec3(-g.x(), -g.y(), 1.0).normalized();
  s.color = color_at(hf, b);
  return s;
}

Eigen::Vector2d surface_gradient(const Heightfield& hf, double x, double y) {
  const Bilinear b = locate(hf, x, y);
  const Eigen::Vector2d g00 = node_gradient(hf, b.r0, b.c0), g01 = node_gradient(hf, b.r0, b.c0 + 1);
  const Eigen::Vector2d g10 = node_gradient(hf, b.r0 + 1, b.c0), g11 = node_gradient(hf, b.r0 + 1, b.c0 + 1);
  const Eigen::Vector2d top = g00 + (g01 - g00) * b.fc;
  const Eigen::Vector2d bottom = g10 + (g11 - g10) * b.fc;
  return top + (bottom - top) * b.fr;
}

Trajectory generate_trajectory(const Heightfield& hf, std::span<const Eigen::Vector2d> waypoints, double speed,
                               double dt, const TrajectoryOptions& opts) {
  if (waypoints.size() < 2) throw ArgumentError("generate_trajectory: need at least 2 waypoints");
  check_positive(speed, "generate_trajectory: speed");
  check_positive(dt, "generate_trajectory: dt");
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    if (!hf.inside(waypoints[i].x(), waypoints[i].y())) {
      throw RangeError("generate_trajectory: waypoint " + std::to_string(i) + " outside heightfield extent");
    }
  }

  struct Segment {
    Eigen::Vector2d a, b;
    double start, length;
  };
  std::vector<Segment> segs;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const double len = (waypoints[i + 1] - waypoints[i]).norm();
    if (len == 0.0) continue;
    segs.push_back({waypoints[i], waypoints[i + 1], total, len});
    total += len;
  }
  const double spacing = speed * dt;
  if (segs.empty() || total < spacing * (1.0 - 1e-9)) {
    throw ArgumentError("generate_trajectory: path shorter than one step");
  }
  const auto count = static_cast<std::size_t>(std::floor(total / spacing + 1e-9)) + 1;

  Trajectory traj;
  traj.poses.reserve(count);
  std::size_t si = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double s = static_cast<double>(k) * spacing;
    while (si + 1 < segs.size() && s > segs[si].start + segs[si].length) ++si;
    const Segment& seg = segs[si];
    const double frac = std::min((s - seg.start) / seg.length, 1.0);
    const Eigen::Vector2d xy = seg.a + (seg.b - seg.a) * frac;
    const Eigen::Vector2d dir = (seg.b - seg.a) / seg.length;

    const double yaw = std::atan2(dir.y(), dir.x());
    const Eigen::Vector2d g = surface_gradient(hf, xy.x(), xy.y());
    const Eigen::Vector2d left(-dir.y(), dir.x());
    const double pitch = -std::atan(g.dot(dir));
    const double roll = std::atan(g.dot(left));

    Pose p;
    p.t = static_cast<double>(k) * dt;
    p.position = Vec3(xy.x(), xy.y(), height_at(hf, xy.x(), xy.y()) + opts.chassis_height);
    p.orientation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                         Eigen::AngleAxisd(roll, Vec3::UnitX()));
    p.orientation.normalize();
    traj.poses.push_back(p);
  }
  return traj;
}

std::vector<ImuSample> synthesize_imu(const Trajectory& traj, const Heightfield& hf, double gravity,
                                      double noise_scale, std::uint64_t seed) {
  traj.validate();
  const auto& P = traj.poses;
  const std::size_t n = P.size();

  std::vector<Vec3> kin(n, Vec3::Zero());
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double h1 = P[k].t - P[k - 1].t;
    const double h2 = P[k + 1].t - P[k].t;
    const Vec3 v1 = (P[k].position - P[k - 1].position) / h1;
    const Vec3 v2 = (P[k + 1].position - P[k].position) / h2;
    kin[k] = 2.0 * (v2 - v1) / (h1 + h2);
  }
  if (n >= 3) {
    kin.front() = kin[1];
    kin.back() = kin[n - 2];
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const Vec3 g_world(0.0, 0.0, gravity);

  std::vector<ImuSample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Quat& q = P[k].orientation;
    ImuSample& s = out[k];
    s.t = P[k].t;
    s.accel = q.conjugate() * (kin[k] + g_world);
    const double x = std::clamp(P[k].position.x(), hf.origin_x, hf.max_x());
    const double y = std::clamp(P[k].position.y(), hf.origin_y, hf.max_y());
    const double sigma = noise_scale * surface_gradient(hf, x, y).norm();
    const Vec3 noise(unit(rng), unit(rng), unit(rng));
    s.accel += sigma * noise;

    // Body rates from the relative rotation to the next pose (previous one for the last sample).
    const std::size_t a = k + 1 < n ? k : k - 1;
    Quat rel = P[a].orientation.conjugate() * P[a + 1].orientation;
    if (rel.w() < 0.0) rel.coeffs() = -rel.coeffs();
    const double dt = P[a + 1].t - P[a].t;
    const Vec3 v = rel.vec();
    const double sn = v.norm();
    s.gyro = sn > 0.0 ? Vec3(v / sn * (2.0 * std::atan2(sn, rel.w())) / dt) : Vec3::Zero();
  }
  return out;
}

namespace {

std::optional<RayHit> march(const Heightfield& hf, double top, const Vec3& origin, const Vec3& direction,
                            double max_range) {
  if (!(max_range > 0.0)) return std::nullopt;
  if (!hf.inside(origin.x(), origin.y())) return std::nullopt;
  const Vec3 d = direction.normalized();
  auto gap = [&](double t) {
    const Vec3 p = origin + t * d;
    return p.z() - height_at(hf, p.x(), p.y());
  };
  if (gap(0.0) <= 0.0) return std::nullopt;

  const double step = hf.cell_size / 4.0;
  double t_prev = 0.0;
  while (t_prev < max_range) {
    const double t = std::min(t_prev + step, max_range);
    const Vec3 p = origin + t * d;
    if (!hf.inside(p.x(), p.y())) return std::nullopt;
    const double f = gap(t);
    if (f <= 0.0) {
      double lo = t_prev, hi = t, mid = t;
      for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double fm = gap(mid);
        if (std::abs(fm) <= 1e-6 || hi - lo < 1e-12) break;
        (fm > 0.0 ? lo : hi) = mid;
      }
      RayHit hit;
      hit.range = mid;
      hit.point = origin + mid * d;
      hit.color = color_at(hf, locate(hf, hit.point.x(), hit.point.y()));
      return hit;
    }
    if (d.z() >= 0.0 && p.z() > top) return std::nullopt;
    t_prev = t;
  }
  return std::nullopt;
}

}  // namespace

std::optional<RayHit> cast_ray(const Heightfield& hf, const Vec3& origin, const Vec3& direction, double max_range) {
  return march(hf, max_elevation(hf), origin, direction, max_range);
}

Eigen::Isometry3d sensor_pose(const Pose& pose, double mount_height) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.linear() = pose.orientation.toRotationMatrix();
  T.translation() = pose.position + pose.orientation * Vec3(0.0, 0.0, mount_height);
  return T;
}

PointCloud simulate_lidar(const Heightfield& hf, const Pose& pose, int rays, double max_range, std::uint64_t seed,
                          const LidarOptions& opts) {
  if (rays <= 0) throw ArgumentError("simulate_lidar: rays must be positive");
  check_positive(max_range, "simulate_lidar: max_range");
  if (!hf.inside(pose.position.x(), pose.position.y())) throw RangeError("simulate_lidar: pose outside extent");

  const Eigen::Isometry3d T = sensor_pose(pose, opts.mount_height);
  const Eigen::Matrix3d R = T.linear();
  const Vec3 origin = T.translation();
  const double top = max_elevation(hf);

  // Golden-angle spiral: uniform in solid angle over the elevation band, azimuth phase from the seed.
  constexpr double kGolden = 0.6180339887498949;
  const double phase = static_cast<double>(splitmix64(seed) >> 11) * 0x1.0p-53;
  const double deg = kPi / 180.0;
  const double s_lo = std::sin(opts.elevation_min_deg * deg), s_hi = std::sin(opts.elevation_max_deg * deg);
  const double az_lo = opts.azimuth_min_deg * deg, az_span = (opts.azimuth_max_deg - opts.azimuth_min_deg) * deg;

  PointCloud cloud;
  for (int k = 0; k < rays; ++k) {
    const double el = std::asin(s_lo + (k + 0.5) / rays * (s_hi - s_lo));
    double frac = k * kGolden + phase;
    frac -= std::floor(frac);
    const double az = az_lo + frac * az_span;
    const Vec3 d_sensor(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    const auto hit = march(hf, top, origin, R * d_sensor, max_range);
    if (!hit) continue;
    cloud.points.push_back({R.transpose() * (hit->point - origin), hit->color});
  }
  return cloud;
}

Image render_camera(const Heightfield& hf, const Pose& pose, int h_px, int w_px, const CameraOptions& opts) {
  if (h_px < 1 || w_px < 1) throw ArgumentError("render_camera: image dimensions must be >= 1");
  if (!hf.inside(pose.position.x(), pose.position.y())) throw RangeError("render_camera: pose outside extent");

  const Eigen::Isometry3d T = sensor_pose(pose, opts.mount_height);
  const Eigen::Matrix3d R = T.linear();
  const double a = opts.pitch_down_deg * kPi / 180.0;
  const Vec3 forward(std::cos(a), 0.0, -std::sin(a));
  const Vec3 down(-std::sin(a), 0.0, -std::cos(a));
  const Vec3 right(0.0, -1.0, 0.0);
  const double focal = 0.5 * w_px / std::tan(0.5 * opts.hfov_deg * kPi / 180.0);
  const double top = max_elevation(hf);

  Image img(h_px, w_px);
  for (int r = 0; r < h_px; ++r) {
    for (int c = 0; c < w_px; ++c) {
      const double u = (c + 0.5 - 0.5 * w_px) / focal;
      const double v = (r + 0.5 - 0.5 * h_px) / focal;
      const auto hit = march(hf, top, T.translation(), R * (forward + u * right + v * down), opts.max_range);
      const Rgb col = hit ? hit->color : opts.sky;
      img.at(r, c, 0) = col.r;
      img.at(r, c, 1) = col.g;
      img.at(r, c, 2) = col.b;
    }
  }
  return img;
}

Vec3 yaw_pitch_roll(const Quat& q) {
  const Eigen::Matrix3d R = q.toRotationMatrix();
  return {std::atan2(R(1, 0), R(0, 0)), std::asin(std::clamp(-R(2, 0), -1.0, 1.0)), std::atan2(R(2, 1), R(2, 2))};
}

}  // namespace marscost
