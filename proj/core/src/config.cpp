#include "marscost/config.hpp"

#include <set>

#include "json.hpp"
#include "marscost/raster_io.hpp"

namespace marscost {
namespace {

using nlohmann::json;

/// Object view that tracks which keys were consumed so leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + display() + "' must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError("config: missing key '" + name(key) + "'");
    return j_.at(key);
  }

  Section child(const char* key) { return Section(raw(key), name(key)); }

  template <typename T>
  void get(const char* key, T& out) {
    if (!has(key)) {
      used_.insert(key);
      return;
    }
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config: '" + name(key) + "' has the wrong type");
    }
  }

  void path(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError("config: unknown key '" + name(key) + "'");
    }
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::vector<Eigen::Vector2d> parse_waypoints(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError("config: '" + where + "' must be an array of [x, y] pairs");
  std::vector<Eigen::Vector2d> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ConfigError("config: '" + where + "' must be an array of [x, y] pairs");
    }
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

/// Returns whether test_runs was given explicitly.
bool parse_sim(Section s, SimConfig& c) {
  if (s.has("terrain")) {
    Section t = s.child("terrain");
    t.get("rows", c.terrain_rows);
    t.get("cols", c.terrain_cols);
    t.get("cell_size", c.cell_size);
    t.get("roughness", c.roughness);
    t.path("heightmap", c.heightmap);
    t.get("relief_wavelength_cells", c.terrain.relief_wavelength_cells);
    t.get("relief_amplitude_m", c.terrain.relief_amplitude_m);
    t.get("relief_octaves", c.terrain.relief_octaves);
    t.get("rock_wavelength_cells", c.terrain.rock_wavelength_cells);
    t.get("rock_amplitude_m", c.terrain.rock_amplitude_m);
    t.get("rock_octaves", c.terrain.rock_octaves);
    t.get("patch_wavelength_cells", c.terrain.patch_wavelength_cells);
    t.get("persistence", c.terrain.persistence);
    t.finish();
  }
  s.get("speed", c.speed);
  s.get("dt", c.dt);
  s.get("gravity", c.gravity);
  s.get("imu_noise", c.imu_noise);
  s.get("chassis_height", c.trajectory.chassis_height);
  s.get("frame_stride", c.frame_stride);
  if (s.has("lidar")) {
    Section l = s.child("lidar");
    l.get("rays", c.lidar_rays);
    l.get("max_range", c.lidar_range);
    l.get("azimuth_min_deg", c.lidar.azimuth_min_deg);
    l.get("azimuth_max_deg", c.lidar.azimuth_max_deg);
    l.get("elevation_min_deg", c.lidar.elevation_min_deg);
    l.get("elevation_max_deg", c.lidar.elevation_max_deg);
    l.get("mount_height", c.lidar.mount_height);
    l.finish();
  }
  if (s.has("camera")) {
    Section k = s.child("camera");
    k.get("rows", c.image_rows);
    k.get("cols", c.image_cols);
    k.get("hfov_deg", c.camera.hfov_deg);
    k.get("pitch_down_deg", c.camera.pitch_down_deg);
    k.get("mount_height", c.camera.mount_height);
    k.get("max_range", c.camera.max_range);
    k.finish();
  }
  const json& runs = s.raw("runs");
  if (!runs.is_array() || runs.empty()) throw ConfigError("config: 'sim.runs' must be a non-empty array");
  for (std::size_t r = 0; r < runs.size(); ++r) {
    Section run(runs[r], "sim.runs[" + std::to_string(r) + "]");
    c.runs.push_back({parse_waypoints(run.raw("waypoints"), run.name("waypoints"))});
    run.finish();
  }
  const bool has_test_runs = s.has("test_runs");
  if (has_test_runs) {
    const json& tr = s.raw("test_runs");
    if (!tr.is_array()) throw ConfigError("config: 'sim.test_runs' must be an array of run indices");
    for (const auto& v : tr) {
      if (!v.is_number_unsigned()) throw ConfigError("config: 'sim.test_runs' must be an array of run indices");
      c.test_runs.push_back(v.get<std::size_t>());
    }
  }
  s.finish();
  return has_test_runs;
}

}  // namespace

std::vector<AblationSpec> EvalConfig::specs(std::uint64_t seed) const {
  std::vector<AblationSpec> out;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    AblationSpec a;
    a.mode = modes[k];
    a.occlusion_fraction = occlusion_fraction;
    a.drop_fraction = drop_fraction;
    a.image_sigma = image_sigma;
    a.point_sigma = point_sigma;
    a.seed = derive_seed(seed, 7000 + k);
    out.push_back(a);
  }
  return out;
}

void RunConfig::validate() const {
  sim.validate();
  labeling.validate();
  model.validate();
  train.validate();
  bev.grid().validate();
  AblationSpec probe;
  probe.occlusion_fraction = eval.occlusion_fraction;
  probe.drop_fraction = eval.drop_fraction;
  probe.image_sigma = eval.image_sigma;
  probe.point_sigma = eval.point_sigma;
  probe.validate();
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");
  top.get("seed", cfg.seed);

  if (top.has("paths")) {
    Section p = top.child("paths");
    p.path("root", cfg.paths.root);
    p.path("dataset", cfg.paths.dataset);
    p.path("labels", cfg.paths.labels);
    p.path("checkpoint", cfg.paths.checkpoint);
    p.path("reports", cfg.paths.reports);
    p.finish();
  }

  const bool has_test_runs = parse_sim(top.child("sim"), cfg.sim);

  if (top.has("labeling")) {
    Section l = top.child("labeling");
    l.get("w1", cfg.labeling.w1);
    l.get("w2", cfg.labeling.w2);
    l.get("w3", cfg.labeling.w3);
    l.get("epsilon", cfg.labeling.epsilon);
    l.get("kernel_radius", cfg.labeling.kernel_radius);
    l.get("coarse_res", cfg.labeling.coarse_res);
    l.get("fine_res", cfg.labeling.fine_res);
    l.finish();
  }

  if (top.has("model")) {
    Section m = top.child("model");
    m.get("pillar_channels", cfg.model.pillar_channels);
    m.get("stage3_channels", cfg.model.stage3_channels);
    m.get("stage4_channels", cfg.model.stage4_channels);
    m.get("film_hidden", cfg.model.film_hidden);
    m.get("head_channels", cfg.model.head_channels);
    m.get("max_points_per_pillar", cfg.model.max_points_per_pillar);
    m.get("bev_cells", cfg.bev.bev_cells);
    m.get("bev_resolution", cfg.bev.bev_resolution);
    m.finish();
  }

  if (top.has("train")) {
    Section t = top.child("train");
    t.get("lr", cfg.train.lr);
    t.get("batch_size", cfg.train.batch_size);
    t.get("huber_delta", cfg.train.huber_delta);
    t.get("smooth_lambda", cfg.train.smooth_lambda);
    t.get("epochs", cfg.train.epochs);
    t.get("max_steps", cfg.train.max_steps);
    t.get("augment", cfg.train.augment);
    if (t.has("augmentation")) {
      Section a = t.child("augmentation");
      a.get("rotate", cfg.train.augmentation.rotate);
      a.get("max_shift_cells", cfg.train.augmentation.max_shift_cells);
      a.get("image_sigma", cfg.train.augmentation.image_sigma);
      a.get("point_sigma", cfg.train.augmentation.point_sigma);
      a.finish();
    }
    t.finish();
  }

  if (top.has("eval")) {
    Section e = top.child("eval");
    if (e.has("modes")) {
      const json& ms = e.raw("modes");
      if (!ms.is_array()) throw ConfigError("config: 'eval.modes' must be an array of mode names");
      cfg.eval.modes.clear();
      for (const auto& v : ms) {
        if (!v.is_string()) throw ConfigError("config: 'eval.modes' must be an array of mode names");
        try {
          cfg.eval.modes.push_back(parse_mode(v.get<std::string>()));
        } catch (const ArgumentError& err) {
          throw ConfigError(std::string("config: eval.modes: ") + err.what());
        }
      }
    }
    e.get("occlusion_fraction", cfg.eval.occlusion_fraction);
    e.get("drop_fraction", cfg.eval.drop_fraction);
    e.get("image_sigma", cfg.eval.image_sigma);
    e.get("point_sigma", cfg.eval.point_sigma);
    std::string fmt = "pgm";
    e.get("export_format", fmt);
    try {
      cfg.eval.export_format = parse_costmap_format(fmt);
    } catch (const ArgumentError& err) {
      throw ConfigError(std::string("config: eval.export_format: ") + err.what());
    }
    e.finish();
  }
  top.finish();

  if (!has_test_runs && cfg.sim.runs.size() >= 2) cfg.sim.test_runs.push_back(cfg.sim.runs.size() - 1);
  cfg.train.seed = cfg.seed;
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ArgumentError& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg = parse_run_config(io::read_file(path));
  if (cfg.paths.root.is_relative()) cfg.paths.root = path.parent_path() / cfg.paths.root;
  if (!cfg.sim.heightmap.empty() && cfg.sim.heightmap.is_relative()) {
    cfg.sim.heightmap = path.parent_path() / cfg.sim.heightmap;
  }
  return cfg;
}

}  // namespace marscost
