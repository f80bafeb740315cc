#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "marscost/dataset.hpp"
#include "marscost/raster_io.hpp"

using namespace marscost;

namespace {

SimConfig small_config() {
  SimConfig cfg;
  cfg.terrain_rows = cfg.terrain_cols = 81;
  cfg.frame_stride = 8;
  cfg.lidar_rays = 600;
  cfg.lidar_range = 4.0;
  cfg.image_rows = 16;
  cfg.image_cols = 24;
  cfg.camera.max_range = 8.0;
  cfg.runs.push_back({{{1.0, 1.5}, {9.0, 2.5}, {8.5, 8.5}}});
  cfg.runs.push_back({{{1.5, 8.5}, {8.5, 1.5}}});
  cfg.test_runs = {1};
  return cfg;
}

SampleConfig small_bev() { return {16, 0.25}; }

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("derived seeds differ by tag and are stable") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  }

  TEST_CASE("split assignment and validation") {
    SimConfig cfg = small_config();
    CHECK(cfg.split_of(0) == Split::train);
    CHECK(cfg.split_of(1) == Split::test);
    CHECK_NOTHROW(cfg.validate());
    cfg.test_runs = {5};
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = small_config();
    cfg.runs[0].waypoints.resize(1);
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  }

  TEST_CASE("synthetic configuration holds out the requested runs") {
    const SimConfig cfg = synthetic_sim_config(4, 2);
    CHECK(cfg.runs.size() == 6);
    CHECK(cfg.test_runs == std::vector<std::size_t>{4, 5});
    CHECK_THROWS_AS(synthetic_sim_config(0, 1), ArgumentError);
    CHECK_THROWS_AS(synthetic_sim_config(6, 1), ArgumentError);
  }

  TEST_CASE("run directory round trip") {
    const SimConfig cfg = small_config();
    const Heightfield hf = make_terrain(cfg, 3, 0);
    const SimRun run = simulate_run(hf, cfg, 0, 3);
    REQUIRE_FALSE(run.frames.empty());
    CHECK(run.imu.size() == run.trajectory.poses.size());
    CHECK(run.clouds.size() == run.frames.size());
    CHECK(run.images.size() == run.frames.size());
    for (int f : run.frames) CHECK(f % cfg.frame_stride == 0);

    const auto dir = std::filesystem::temp_directory_path() / "marscost_run_io";
    std::filesystem::remove_all(dir);
    write_run(dir, run);
    const SimRun back = read_run(dir);
    REQUIRE(back.trajectory.poses.size() == run.trajectory.poses.size());
    for (std::size_t k = 0; k < run.trajectory.poses.size(); ++k) {
      CHECK(back.trajectory.poses[k].t == run.trajectory.poses[k].t);
      CHECK(back.trajectory.poses[k].position == run.trajectory.poses[k].position);
      CHECK(back.trajectory.poses[k].orientation.coeffs() == run.trajectory.poses[k].orientation.coeffs());
      CHECK(back.imu[k].accel == run.imu[k].accel);
      CHECK(back.imu[k].gyro == run.imu[k].gyro);
    }
    CHECK(back.frames == run.frames);
    for (std::size_t f = 0; f < run.frames.size(); ++f) {
      CHECK(back.images[f] == run.images[f]);
      REQUIRE(back.clouds[f].points.size() == run.clouds[f].points.size());
      for (std::size_t k = 0; k < run.clouds[f].points.size(); ++k) {
        CHECK(back.clouds[f].points[k].xyz == run.clouds[f].points[k].xyz);
        CHECK(back.clouds[f].points[k].rgb == run.clouds[f].points[k].rgb);
      }
    }
    CHECK(io::read_file(dir / "trajectory.csv").rfind("t,x,y,z,qw,qx,qy,qz\n", 0) == 0);
    CHECK(io::read_file(dir / "imu.csv").rfind("t,ax,ay,az,wx,wy,wz\n", 0) == 0);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("sparse label CSV round trip") {
    SparseCostmap s;
    s.entries.push_back({0.1, 0.30000000000000004, 3.7100000000000004});
    s.entries.push_back({-2.5, 1e-7, 0.0});
    const SparseCostmap back = parse_sparse_csv(sparse_csv(s));
    REQUIRE(back.entries.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(back.entries[k].x == s.entries[k].x);
      CHECK(back.entries[k].y == s.entries[k].y);
      CHECK(back.entries[k].cost == s.entries[k].cost);
    }
    CHECK_THROWS_AS(parse_sparse_csv("x,y,tc\n1,2,3\n"), FormatError);
    CHECK_THROWS_AS(parse_sparse_csv("x_m,y_m,tc\n1,2\n"), FormatError);
  }

  TEST_CASE("samples are expressed in the rover's level frame") {
    GridSpec world;
    world.resolution = 0.05;
    world.rows = world.cols = 200;
    DenseCostmap labels(world, 0.0, true);
    for (int i = 0; i < world.rows; ++i) {
      for (int j = 0; j < world.cols; ++j) labels.at(i, j) = 1000.0 * i + j;
    }
    const GridSpec bev = centered_grid(8, 0.25);

    Pose pose;
    pose.position = Vec3(5.0, 5.0, 1.0);
    pose.orientation = Quat(Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()));
    PointCloud cloud;
    cloud.points.push_back({Vec3(1.0, 0.0, -0.5), {0.2, 0.3, 0.4}});

    const Sample s = make_sample(cloud, Image(2, 2), pose, labels, bev, 0.5);
    // Sensor frame: 0.5 m above the body origin, so the point is 1 m ahead and level with the body.
    CHECK(s.cloud.points[0].xyz.x() == doctest::Approx(1.0));
    CHECK(std::abs(s.cloud.points[0].xyz.y()) < 1e-12);
    CHECK(s.cloud.points[0].xyz.z() == doctest::Approx(0.0));
    CHECK(s.cloud.points[0].rgb == cloud.points[0].rgb);

    // Local +x is world +y under a 90 degree yaw.
    for (int i = 0; i < bev.rows; ++i) {
      for (int j = 0; j < bev.cols; ++j) {
        const double wx = 5.0 - bev.center_y(i), wy = 5.0 + bev.center_x(j);
        const auto c = world.locate(wx, wy);
        REQUIRE(c.has_value());
        CHECK(s.target.is_valid(i, j));
        CHECK(s.target.at(i, j) == labels.at(c->row, c->col));
      }
    }
  }

  TEST_CASE("build is deterministic and labels are jointly normalized") {
    const SimConfig cfg = small_config();
    const Dataset a = build_dataset(cfg, LabelingConfig{}, small_bev(), 21);
    const Dataset b = build_dataset(cfg, LabelingConfig{}, small_bev(), 21);
    REQUIRE_FALSE(a.train.empty());
    REQUIRE_FALSE(a.test.empty());
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t k = 0; k < a.train.size(); ++k) {
      CHECK(a.train[k].target == b.train[k].target);
      CHECK(a.train[k].image == b.train[k].image);
      REQUIRE(a.train[k].cloud.points.size() == b.train[k].cloud.points.size());
      for (std::size_t p = 0; p < a.train[k].cloud.points.size(); ++p) {
        CHECK(a.train[k].cloud.points[p].xyz == b.train[k].cloud.points[p].xyz);
      }
    }
    CHECK(trajectory_csv(a.runs[0].trajectory) == trajectory_csv(b.runs[0].trajectory));
    CHECK(imu_csv(a.runs[1].imu) == imu_csv(b.runs[1].imu));

    double lo = 1e9, hi = -1e9;
    for (const auto& l : a.labels) {
      for (std::size_t k = 0; k < l.dense.values.size(); ++k) {
        if (!l.dense.valid[k]) continue;
        lo = std::min(lo, l.dense.values[k]);
        hi = std::max(hi, l.dense.values[k]);
      }
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
    CHECK(a.range.tc_max > a.range.tc_min);
    for (const auto& s : a.test) {
      CHECK(s.target.grid == small_bev().grid());
      CHECK(s.target.valid_count() > 0);
    }

    const Dataset c = build_dataset(cfg, LabelingConfig{}, small_bev(), 22);
    CHECK(imu_csv(c.runs[0].imu) != imu_csv(a.runs[0].imu));
  }

  TEST_CASE("a dataset needs both splits") {
    SimConfig cfg = small_config();
    cfg.test_runs.clear();
    CHECK_THROWS_AS(build_dataset(cfg, LabelingConfig{}, small_bev(), 1), ArgumentError);
  }
}
