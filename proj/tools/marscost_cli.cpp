// marscost: simulate -> label -> train -> eval/ablate -> export, driven by one JSON run config.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "marscost/checkpoint.hpp"
#include "marscost/config.hpp"
#include "marscost/raster_io.hpp"

namespace fs = std::filesystem;
using namespace marscost;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// A required input artifact is absent; reported with exit code 2.
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInput("missing prerequisite: " + p.string());
}

fs::path run_dir(const RunConfig& cfg, std::size_t r) {
  return cfg.paths.resolve(cfg.paths.dataset) / ("run_" + std::to_string(r));
}

fs::path labels_dir(const RunConfig& cfg) { return cfg.paths.resolve(cfg.paths.labels); }
fs::path reports_dir(const RunConfig& cfg) { return cfg.paths.resolve(cfg.paths.reports); }
fs::path checkpoint_path(const RunConfig& cfg) { return cfg.paths.resolve(cfg.paths.checkpoint); }

bool is_test_run(const RunConfig& cfg, std::size_t r) { return cfg.sim.split_of(r) == Split::test; }

const char* split_name(Split s) { return s == Split::test ? "test" : "train"; }

std::vector<SimRun> load_runs(const RunConfig& cfg) {
  std::vector<SimRun> runs;
  for (std::size_t r = 0; r < cfg.sim.runs.size(); ++r) {
    require(run_dir(cfg, r) / "trajectory.csv");
    require(run_dir(cfg, r) / "imu.csv");
    runs.push_back(read_run(run_dir(cfg, r)));
  }
  return runs;
}

fs::path dense_values_path(const RunConfig& cfg, std::size_t r) {
  return labels_dir(cfg) / ("run_" + std::to_string(r) + "_dense_values.csv");
}

std::vector<Sample> samples_for(const RunConfig& cfg, const std::vector<SimRun>& runs, Split split) {
  std::vector<Sample> out;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (cfg.sim.split_of(r) != split) continue;
    const fs::path p = dense_values_path(cfg, r);
    require(p);
    require(io::sidecar_path(p));
    auto part = make_samples(runs[r], import_costmap(p, CostmapFormat::csv), cfg.bev.grid(),
                             cfg.sim.lidar.mount_height);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  if (out.empty()) throw ArgumentError(std::string("no ") + split_name(split) + " samples with labelled cells");
  return out;
}

ModelParams load_model(const RunConfig& cfg) {
  require(checkpoint_path(cfg));
  return load_checkpoint(checkpoint_path(cfg));
}

int cmd_simulate(const RunConfig& cfg) {
  const fs::path root = cfg.paths.resolve(cfg.paths.dataset);
  fs::create_directories(root);
  for (std::size_t r = 0; r < cfg.sim.runs.size(); ++r) {
    const Heightfield hf = make_terrain(cfg.sim, cfg.seed, r);
    const SimRun run = simulate_run(hf, cfg.sim, r, cfg.seed);
    write_run(run_dir(cfg, r), run);
    save_heightfield(hf, run_dir(cfg, r) / "terrain.pgm");
    std::size_t points = 0;
    for (const auto& c : run.clouds) points += c.points.size();
    std::printf("run %zu (%s): %zu poses, %zu frames, %zu points\n", r, split_name(cfg.sim.split_of(r)),
                run.trajectory.poses.size(), run.frames.size(), points);
  }
  std::printf("wrote %s\n", root.string().c_str());
  return 0;
}

int cmd_label(const RunConfig& cfg) {
  const auto runs = load_runs(cfg);
  const fs::path dir = labels_dir(cfg);
  fs::create_directories(dir);

  std::vector<SceneLabels> scenes;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    scenes.push_back(label_scene(std::span<const SimRun>(&runs[r], 1), cfg.labeling));
    io::write_file_atomic(dir / ("sparse_run_" + std::to_string(r) + ".csv"), sparse_csv(scenes.back().sparse.front()));
  }
  std::vector<SceneLabels*> ptrs;
  for (auto& s : scenes) ptrs.push_back(&s);
  const LabelRange range = normalize_scenes(ptrs);

  for (std::size_t r = 0; r < scenes.size(); ++r) {
    export_costmap(scenes[r].dense, dir / ("run_" + std::to_string(r) + "_dense.pgm"), CostmapFormat::pgm);
    export_costmap(scenes[r].dense, dense_values_path(cfg, r), CostmapFormat::csv);
    std::printf("run %zu: %zu sparse labels, dense %dx%d with %zu valid cells\n", r,
                scenes[r].sparse.front().entries.size(), scenes[r].fine.rows, scenes[r].fine.cols,
                scenes[r].dense.valid_count());
  }
  const nlohmann::json norm{{"tc_min", range.tc_min}, {"tc_max", range.tc_max}, {"degenerate", range.degenerate}};
  io::write_file_atomic(dir / "normalization.json", norm.dump(2) + "\n");
  std::printf("TC range [%g, %g]%s\n", range.tc_min, range.tc_max, range.degenerate ? " (degenerate)" : "");
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto runs = load_runs(cfg);
  const auto train = samples_for(cfg, runs, Split::train);
  const FitResult result = fit(train, cfg.train, cfg.model);

  std::string log = "step,huber,smooth,total\n";
  for (const auto& h : result.history) {
    log += std::to_string(h.step) + ',' + io::format_double(h.loss.huber) + ',' + io::format_double(h.loss.smooth) +
           ',' + io::format_double(h.loss.total) + '\n';
  }
  fs::create_directories(reports_dir(cfg));
  const fs::path ckpt = checkpoint_path(cfg);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  io::write_file_atomic(reports_dir(cfg) / "train_log.csv", log);
  save_checkpoint(result.params, ckpt);
  const double last = result.history.empty() ? 0.0 : result.history.back().loss.total;
  std::printf("%zu samples, %zu steps, final loss %.6f, %zu parameters -> %s\n", train.size(),
              result.history.size(), last, result.params.parameter_count(), ckpt.string().c_str());
  return 0;
}

int write_report(const RunConfig& cfg, const MetricsReport& report, const char* name) {
  fs::create_directories(reports_dir(cfg));
  io::write_file_atomic(reports_dir(cfg) / name, metrics_csv(report));
  std::fputs(metrics_table(report).c_str(), stdout);
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const ModelParams params = load_model(cfg);
  const auto runs = load_runs(cfg);
  const auto test = samples_for(cfg, runs, Split::test);
  MetricsReport report;
  report.rows.push_back(evaluate(params, test));
  return write_report(cfg, report, "eval.csv");
}

int cmd_ablate(const RunConfig& cfg) {
  const ModelParams params = load_model(cfg);
  const auto runs = load_runs(cfg);
  const auto test = samples_for(cfg, runs, Split::test);
  const auto specs = cfg.eval.specs(cfg.seed);
  return write_report(cfg, run_ablation_suite(params, test, specs), "ablation.csv");
}

int cmd_export(const RunConfig& cfg) {
  const ModelParams params = load_model(cfg);
  const auto runs = load_runs(cfg);
  const fs::path dir = reports_dir(cfg) / "costmaps";
  fs::create_directories(dir);
  const char* ext = cfg.eval.export_format == CostmapFormat::pgm ? ".pgm" : ".csv";
  std::size_t written = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (!is_test_run(cfg, r)) continue;
    require(dense_values_path(cfg, r));
    const DenseCostmap labels = import_costmap(dense_values_path(cfg, r), CostmapFormat::csv);
    for (std::size_t f = 0; f < runs[r].frames.size(); ++f) {
      const int k = runs[r].frames[f];
      const Sample s = make_sample(runs[r].clouds[f], runs[r].images[f], runs[r].trajectory.poses[static_cast<std::size_t>(k)],
                                   labels, cfg.bev.grid(), cfg.sim.lidar.mount_height);
      const std::string stem = "run" + std::to_string(r) + "_frame" + std::to_string(k);
      export_costmap(forward(params, s.cloud, s.image, s.target.grid), dir / ("pred_" + stem + ext),
                     cfg.eval.export_format);
      export_costmap(s.target, dir / ("target_" + stem + ext), cfg.eval.export_format);
      ++written;
    }
  }
  std::printf("exported %zu prediction/target pairs to %s\n", written, dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised traversability costmaps from simulated rover runs"};
  app.set_version_flag("--version", std::string("marscost ") + MARSCOST_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&);
  };
  const std::vector<Command> commands = {
      {"simulate", "Generate terrain and rover runs (trajectory, IMU, LiDAR, camera)", cmd_simulate},
      {"label", "Derive traversability-cost labels from the recorded runs", cmd_label},
      {"train", "Train the costmap regressor and write a checkpoint", cmd_train},
      {"eval", "Report MAE/MSE of the checkpoint on the test runs", cmd_eval},
      {"ablate", "Run the input-ablation robustness suite", cmd_ablate},
      {"export", "Write predicted and target costmaps for the test runs", cmd_export},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Override the global seed");
    sub->add_option("--out", out_dir, "Override paths.root");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const auto it = std::find_if(commands.begin(), commands.end(),
                               [&](const Command& c) { return chosen->get_name() == c.name; });
  try {
    require(config_path);
    RunConfig cfg = load_run_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (!out_dir.empty()) cfg.paths.root = out_dir;
    return it->fn(cfg);
  } catch (const MissingInput& e) {
    std::cerr << "marscost " << it->name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "marscost " << it->name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "marscost " << it->name << ": " << e.what() << "\n";
    return kExitFailure;
  }
}
