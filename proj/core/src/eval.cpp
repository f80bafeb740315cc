#include "marscost/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "marscost/dataset.hpp"
#include "marscost/raster_io.hpp"

namespace marscost {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_pair(const DenseCostmap& pred, const DenseCostmap& target, const char* what) {
  if (!(pred.grid == target.grid) || pred.values.size() != target.values.size()) {
    throw ArgumentError(std::string(what) + ": prediction and target grids differ");
  }
}

struct ErrorSums {
  double abs = 0.0;
  double sq = 0.0;
  std::size_t cells = 0;

  void add(const DenseCostmap& pred, const DenseCostmap& target) {
    for (std::size_t k = 0; k < target.values.size(); ++k) {
      if (!target.valid[k]) continue;
      const double e = pred.values[k] - target.values[k];
      abs += std::abs(e);
      sq += e * e;
      ++cells;
    }
  }
};

constexpr std::array<std::pair<AblationMode, std::string_view>, 6> kModes = {{
    {AblationMode::baseline, "baseline"},
    {AblationMode::no_color_pointcloud, "no_color_pointcloud"},
    {AblationMode::no_image_encoder, "no_image_encoder"},
    {AblationMode::occlude_image, "occlude_image"},
    {AblationMode::sparse_pointcloud, "sparse_pointcloud"},
    {AblationMode::gaussian_noise, "gaussian_noise"},
}};

}  // namespace

double mae(const DenseCostmap& pred, const DenseCostmap& target) {
  check_pair(pred, target, "mae");
  ErrorSums s;
  s.add(pred, target);
  if (s.cells == 0) throw ArgumentError("mae: target has no valid cells");
  return s.abs / static_cast<double>(s.cells);
}

double mse(const DenseCostmap& pred, const DenseCostmap& target) {
  check_pair(pred, target, "mse");
  ErrorSums s;
  s.add(pred, target);
  if (s.cells == 0) throw ArgumentError("mse: target has no valid cells");
  return s.sq / static_cast<double>(s.cells);
}

std::string_view mode_name(AblationMode mode) {
  for (const auto& [m, name] : kModes) {
    if (m == mode) return name;
  }
  throw ArgumentError("mode_name: unknown mode");
}

AblationMode parse_mode(std::string_view name) {
  for (const auto& [m, n] : kModes) {
    if (n == name) return m;
  }
  throw ArgumentError("unknown ablation mode '" + std::string(name) + "'");
}

std::vector<AblationMode> all_modes() {
  std::vector<AblationMode> out;
  for (const auto& [m, name] : kModes) out.push_back(m);
  return out;
}

void AblationSpec::validate() const {
  if (!(occlusion_fraction >= 0.0 && occlusion_fraction < 1.0) || !(drop_fraction >= 0.0 && drop_fraction < 1.0)) {
    throw ArgumentError("AblationSpec: fractions must lie in [0, 1)");
  }
  if (!(image_sigma >= 0.0) || !(point_sigma >= 0.0)) throw ArgumentError("AblationSpec: sigma must be >= 0");
}

Sample apply_ablation(const Sample& sample, const AblationSpec& spec) {
  spec.validate();
  Sample out = sample;
  std::mt19937_64 rng(spec.seed);
  switch (spec.mode) {
    case AblationMode::baseline:
      break;
    case AblationMode::no_color_pointcloud:
      for (auto& p : out.cloud.points) p.rgb = Rgb{};
      break;
    case AblationMode::no_image_encoder: {
      Rgb mean;
      const std::size_t n = out.image.pixels.size() / 3;
      for (std::size_t k = 0; k < n; ++k) {
        mean.r += out.image.pixels[3 * k];
        mean.g += out.image.pixels[3 * k + 1];
        mean.b += out.image.pixels[3 * k + 2];
      }
      if (n > 0) {
        mean.r /= static_cast<double>(n);
        mean.g /= static_cast<double>(n);
        mean.b /= static_cast<double>(n);
      }
      for (auto& p : out.cloud.points) p.rgb = mean;
      out.use_film = false;
      break;
    }
    case AblationMode::occlude_image: {
      const int H = out.image.rows, W = out.image.cols;
      if (spec.occlusion_fraction <= 0.0 || H < 1 || W < 1) break;
      const double area = spec.occlusion_fraction * H * W;
      const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(area * H / W))), 1, H);
      const int w = std::clamp(static_cast<int>(std::lround(area / h)), 1, W);
      const int r0 = static_cast<int>(rng() % static_cast<std::uint64_t>(H - h + 1));
      const int c0 = static_cast<int>(rng() % static_cast<std::uint64_t>(W - w + 1));
      for (int r = r0; r < r0 + h; ++r) {
        for (int c = c0; c < c0 + w; ++c) {
          for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = 0.0;
        }
      }
      break;
    }
    case AblationMode::sparse_pointcloud: {
      const std::size_t n = out.cloud.points.size();
      const auto keep = static_cast<std::size_t>(std::llround((1.0 - spec.drop_fraction) * static_cast<double>(n)));
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(keep);
      std::sort(idx.begin(), idx.end());
      PointCloud kept;
      kept.points.reserve(keep);
      for (std::size_t k : idx) kept.points.push_back(out.cloud.points[k]);
      out.cloud = std::move(kept);
      break;
    }
    case AblationMode::gaussian_noise: {
      std::normal_distribution<double> n01(0.0, 1.0);
      if (spec.image_sigma > 0.0) {
        for (double& v : out.image.pixels) v = std::clamp(v + spec.image_sigma * n01(rng), 0.0, 1.0);
      }
      if (spec.point_sigma > 0.0) {
        for (auto& p : out.cloud.points) p.xyz += spec.point_sigma * Vec3(n01(rng), n01(rng), n01(rng));
      }
      break;
    }
  }
  return out;
}

const MetricsRow& MetricsReport::row(std::string_view mode) const {
  for (const auto& r : rows) {
    if (r.mode == mode) return r;
  }
  throw ArgumentError("MetricsReport: no row for mode '" + std::string(mode) + "'");
}

MetricsRow evaluate(const ModelParams& params, std::span<const Sample> dataset, std::string mode) {
  if (dataset.empty()) throw ArgumentError("evaluate: empty dataset");
  ErrorSums sums;
  for (const auto& s : dataset) {
    const DenseCostmap pred = forward(params, s.cloud, s.image, s.target.grid, {s.use_film});
    sums.add(pred, s.target);
  }
  if (sums.cells == 0) throw ArgumentError("evaluate: dataset has no valid target cells");
  const double n = static_cast<double>(sums.cells);
  return {std::move(mode), sums.abs / n, sums.sq / n, dataset.size()};
}

MetricsReport run_ablation_suite(const ModelParams& params, std::span<const Sample> dataset,
                                 std::span<const AblationSpec> specs) {
  MetricsReport report;
  std::vector<Sample> ablated;
  for (const auto& spec : specs) {
    spec.validate();
    if (spec.mode == AblationMode::baseline) {
      report.rows.push_back(evaluate(params, dataset, "baseline"));
      continue;
    }
    ablated.clear();
    for (std::size_t k = 0; k < dataset.size(); ++k) {
      AblationSpec per = spec;
      per.seed = derive_seed(spec.seed, k);
      ablated.push_back(apply_ablation(dataset[k], per));
    }
    report.rows.push_back(evaluate(params, ablated, std::string(mode_name(spec.mode))));
  }
  return report;
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "mode,mae,mse,n\n";
  for (const auto& r : report.rows) {
    out += r.mode + ',' + io::format_double(r.mae) + ',' + io::format_double(r.mse) + ',' + std::to_string(r.n) + '\n';
  }
  return out;
}

std::string metrics_table(const MetricsReport& report) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-22s %10s %10s %6s\n", "mode", "MAE", "MSE", "n");
  out += line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-22s %10.4f %10.4f %6zu\n", r.mode.c_str(), r.mae, r.mse, r.n);
    out += line;
  }
  return out;
}

CostmapFormat parse_costmap_format(std::string_view name) {
  if (name == "pgm") return CostmapFormat::pgm;
  if (name == "csv") return CostmapFormat::csv;
  throw ArgumentError("unknown costmap format '" + std::string(name) + "' (expected pgm or csv)");
}

namespace {

fs::path mask_path(const fs::path& path) {
  return path.parent_path() / (path.stem().string() + "_mask.pbm");
}

json grid_json(const GridSpec& g) {
  return {{"origin", {g.origin_x, g.origin_y}}, {"resolution", g.resolution}, {"rows", g.rows}, {"cols", g.cols}};
}

GridSpec grid_from_json(const json& meta) {
  GridSpec g;
  try {
    g.origin_x = meta.at("origin").at(0).get<double>();
    g.origin_y = meta.at("origin").at(1).get<double>();
    g.resolution = meta.at("resolution").get<double>();
    g.rows = meta.at("rows").get<int>();
    g.cols = meta.at("cols").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("costmap sidecar: ") + e.what());
  }
  g.validate();
  return g;
}

json read_sidecar(const fs::path& path) {
  try {
    return json::parse(io::read_file(io::sidecar_path(path)));
  } catch (const json::exception& e) {
    throw FormatError("costmap sidecar " + io::sidecar_path(path).string() + ": " + e.what());
  }
}

}  // namespace

void export_costmap(const DenseCostmap& map, const fs::path& path, CostmapFormat format) {
  map.grid.validate();
  if (map.values.size() != map.grid.size() || map.valid.size() != map.grid.size()) {
    throw ArgumentError("export_costmap: map storage does not match its grid");
  }
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < map.values.size(); ++k) {
    if (!map.valid[k]) continue;
    if (!std::isfinite(map.values[k])) throw NumericError("export_costmap: non-finite valid cell");
    lo = any ? std::min(lo, map.values[k]) : map.values[k];
    hi = any ? std::max(hi, map.values[k]) : map.values[k];
    any = true;
  }

  json meta = grid_json(map.grid);
  meta["min"] = lo;
  meta["max"] = hi;
  meta["valid_cells"] = map.valid_count();

  if (format == CostmapFormat::pgm) {
    const fs::path mask = mask_path(path);
    meta["mask"] = mask.filename().string();
    io::GrayRaster r;
    r.rows = map.grid.rows;
    r.cols = map.grid.cols;
    r.maxval = 65535;
    r.pixels.assign(map.grid.size(), 0);
    const double span = hi - lo;
    for (std::size_t k = 0; k < map.values.size(); ++k) {
      if (!map.valid[k] || span <= 0.0) continue;
      r.pixels[k] = static_cast<std::uint16_t>(std::lround((map.values[k] - lo) / span * 65535.0));
    }
    io::write_pbm_ascii(mask, map.grid.rows, map.grid.cols, map.valid);
    io::write_pgm_ascii(path, r);
  } else {
    std::string out = "i,j,value,valid\n";
    for (int i = 0; i < map.grid.rows; ++i) {
      for (int j = 0; j < map.grid.cols; ++j) {
        out += std::to_string(i) + ',' + std::to_string(j) + ',' + io::format_double(map.at(i, j)) + ',' +
               (map.is_valid(i, j) ? "1" : "0") + '\n';
      }
    }
    io::write_file_atomic(path, out);
  }
  io::write_file_atomic(io::sidecar_path(path), meta.dump(2) + "\n");
}

DenseCostmap import_costmap(const fs::path& path, CostmapFormat format) {
  const json meta = read_sidecar(path);
  DenseCostmap map(grid_from_json(meta));
  const GridSpec& g = map.grid;

  if (format == CostmapFormat::pgm) {
    double lo = 0.0, hi = 0.0;
    std::string mask_name;
    try {
      lo = meta.at("min").get<double>();
      hi = meta.at("max").get<double>();
      mask_name = meta.at("mask").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("costmap sidecar: ") + e.what());
    }
    const io::GrayRaster r = io::read_pgm(path);
    int mr = 0, mc = 0;
    const auto bits = io::read_pbm(path.parent_path() / mask_name, mr, mc);
    if (r.rows != g.rows || r.cols != g.cols || mr != g.rows || mc != g.cols) {
      throw FormatError("import_costmap: raster size does not match sidecar");
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
      map.valid[k] = bits[k] ? 1 : 0;
      if (map.valid[k]) map.values[k] = lo + (hi - lo) * (static_cast<double>(r.pixels[k]) / r.maxval);
    }
    return map;
  }

  std::istringstream in(io::read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "i,j,value,valid") throw FormatError("import_costmap: expected header 'i,j,value,valid'");
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != 4) throw FormatError("import_costmap: malformed row '" + line + "'");
    const double di = io::parse_double(f[0]), dj = io::parse_double(f[1]);
    const int i = static_cast<int>(di), j = static_cast<int>(dj);
    if (i != di || j != dj || !g.contains({i, j})) throw FormatError("import_costmap: cell index out of range");
    map.at(i, j) = io::parse_double(f[2]);
    map.valid[g.flat(i, j)] = f[3] == "1" ? 1 : 0;
    ++seen;
  }
  if (seen != g.size()) throw FormatError("import_costmap: expected " + std::to_string(g.size()) + " rows");
  return map;
}

}  // namespace marscost
