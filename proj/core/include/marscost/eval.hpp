#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marscost/net.hpp"

namespace marscost {

/// Mean absolute / squared error over cells where `target` is valid.
double mae(const DenseCostmap& pred, const DenseCostmap& target);
double mse(const DenseCostmap& pred, const DenseCostmap& target);

enum class AblationMode {
  baseline,
  no_color_pointcloud,
  no_image_encoder,
  occlude_image,
  sparse_pointcloud,
  gaussian_noise,
};

std::string_view mode_name(AblationMode mode);
AblationMode parse_mode(std::string_view name);
std::vector<AblationMode> all_modes();

struct AblationSpec {
  AblationMode mode = AblationMode::baseline;
  double occlusion_fraction = 0.3;
  double drop_fraction = 0.3;
  double image_sigma = 0.02;
  double point_sigma = 0.02;  // m
  std::uint64_t seed = 0;

  void validate() const;
};

/// Corrupts the inputs of one sample; the target is never touched.
///   no_color_pointcloud  point RGB zeroed
///   no_image_encoder     mean image colour written into every point, FiLM bypassed
///   occlude_image        one random axis-aligned rectangle of ~fraction*pixels set to black
///   sparse_pointcloud    round((1 - drop) * N) points kept, original order preserved
///   gaussian_noise       N(0, sigma) on pixels (clamped) and point coordinates
Sample apply_ablation(const Sample& sample, const AblationSpec& spec);

struct MetricsRow {
  std::string mode;
  double mae = 0.0;
  double mse = 0.0;
  std::size_t n = 0;  // samples
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  const MetricsRow& row(std::string_view mode) const;
};

/// Errors pooled over every valid target cell of the dataset, accumulated in dataset order.
MetricsRow evaluate(const ModelParams& params, std::span<const Sample> dataset, std::string mode = "baseline");

/// One row per spec, all with the same weights. Sample k is corrupted with seed derived from (spec.seed, k).
MetricsReport run_ablation_suite(const ModelParams& params, std::span<const Sample> dataset,
                                 std::span<const AblationSpec> specs);

std::string metrics_csv(const MetricsReport& report);
std::string metrics_table(const MetricsReport& report);

enum class CostmapFormat { pgm, csv };

CostmapFormat parse_costmap_format(std::string_view name);

/// pgm: P2 raster scaled to 0..65535 between the valid min and max, `<stem>.meta.json` sidecar and a
/// `<stem>_mask.pbm` validity mask. csv: rows (i, j, value, valid) with exact values plus the same sidecar.
void export_costmap(const DenseCostmap& map, const std::filesystem::path& path, CostmapFormat format);
DenseCostmap import_costmap(const std::filesystem::path& path, CostmapFormat format);

}  // namespace marscost
