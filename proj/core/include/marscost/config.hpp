#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "marscost/dataset.hpp"
#include "marscost/eval.hpp"
#include "marscost/labeling.hpp"
#include "marscost/net.hpp"
#include "marscost/train.hpp"

namespace marscost {

/// Schema violation in a run configuration: missing key, unknown key or wrong type.
class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

struct PathsConfig {
  std::filesystem::path root = ".";
  std::filesystem::path dataset = "dataset";
  std::filesystem::path labels = "labels";
  std::filesystem::path checkpoint = "model.ckpt";
  std::filesystem::path reports = "reports";

  std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : root / p; }
};

struct EvalConfig {
  std::vector<AblationMode> modes = all_modes();
  double occlusion_fraction = 0.3;
  double drop_fraction = 0.3;
  double image_sigma = 0.02;
  double point_sigma = 0.02;
  CostmapFormat export_format = CostmapFormat::pgm;

  std::vector<AblationSpec> specs(std::uint64_t seed) const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  SimConfig sim;
  LabelingConfig labeling;
  ModelConfig model;
  SampleConfig bev;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

/// JSON run configuration. Every section but "sim" is optional; within a section every key is
/// optional except sim.runs and each run's waypoints. Unknown keys are rejected. Without
/// sim.test_runs the last run is held out when there are at least two.
RunConfig parse_run_config(const std::string& text);

/// Reads and parses; a relative paths.root is resolved against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace marscost
