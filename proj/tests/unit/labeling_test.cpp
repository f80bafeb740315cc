#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "marscost/labeling.hpp"
#include "oracles.hpp"

using namespace marscost;

namespace {

Pose pose_at(double t, double x, double y) {
  Pose p;
  p.t = t;
  p.position = Vec3(x, y, 0.0);
  return p;
}

ImuSample imu_at(double t, const Vec3& a, const Vec3& w = Vec3::Zero()) {
  ImuSample s;
  s.t = t;
  s.accel = a;
  s.gyro = w;
  return s;
}

CellSamples random_cell(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> step(0.0, 0.08);
  CellSamples cs;
  Vec3 p(0.0, 0.0, 0.0);
  for (int k = 0; k < n; ++k) {
    cs.samples.push_back({p, Vec3(g(rng), g(rng), 3.71 + g(rng)), Vec3(g(rng), g(rng), g(rng)) * 0.3});
    p += Vec3(step(rng), step(rng), 0.01 * g(rng));
  }
  return cs;
}

}  // namespace

TEST_SUITE("labeling") {
  TEST_CASE("straight path at 0.1 m spacing puts two samples in every 0.2 m cell") {
    std::vector<Pose> poses;
    std::vector<ImuSample> imu;
    for (int k = 0; k < 40; ++k) {
      poses.push_back(pose_at(0.1 * k, 0.05 + 0.1 * k, 0.1));
      imu.push_back(imu_at(0.1 * k, Vec3(0, 0, 1)));
    }
    GridSpec g;
    g.resolution = 0.2;
    g.rows = 2;
    g.cols = 20;
    const auto cells = bin_trajectory(poses, imu, g);
    REQUIRE(cells.size() == 20);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      CHECK(cells[c].cell.col == static_cast<int>(c));
      CHECK(cells[c].samples.size() == 2);
    }
  }

  TEST_CASE("binning uses floor with rows along y") {
    GridSpec g;
    g.resolution = 0.2;
    g.rows = 5;
    g.cols = 5;
    const std::vector<Pose> poses{pose_at(0.0, 0.3, 0.5)};
    const std::vector<ImuSample> imu{imu_at(0.0, Vec3(0, 0, 1))};
    const auto cells = bin_trajectory(poses, imu, g);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].cell == CellIndex{2, 1});
    CHECK(cells[0].samples.size() == 1);

    const std::vector<Pose> outside{pose_at(0.0, 1.3, 0.5)};
    CHECK_THROWS_AS(bin_trajectory(outside, imu, g), RangeError);
  }

  TEST_CASE("IMU association tolerates at most half a pose period of skew") {
    GridSpec g;
    g.resolution = 1.0;
    g.rows = g.cols = 4;
    const std::vector<Pose> poses{pose_at(0.0, 0.5, 0.5), pose_at(0.2, 0.6, 0.5)};
    const std::vector<ImuSample> near{imu_at(0.05, Vec3(1, 0, 0)), imu_at(0.19, Vec3(2, 0, 0))};
    const auto cells = bin_trajectory(poses, near, g);
    CHECK(cells[0].samples[0].accel.x() == 1.0);
    CHECK(cells[0].samples[1].accel.x() == 2.0);
    const std::vector<ImuSample> far{imu_at(0.5, Vec3(1, 0, 0))};
    CHECK_THROWS_AS(bin_trajectory(poses, far, g), ArgumentError);
  }

  TEST_CASE("constant acceleration and no rotation give TC = w1 |a|") {
    CellSamples cs;
    for (int k = 0; k < 5; ++k) cs.samples.push_back({Vec3(0.1 * k, 0, 0), Vec3(0, 0, 9.81), Vec3::Zero()});
    LabelingConfig cfg;
    CHECK(cell_cost(cs, cfg) == doctest::Approx(9.81).epsilon(1e-15));
    cfg.w1 = 2.5;
    CHECK(cell_cost(cs, cfg) == doctest::Approx(2.5 * 9.81).epsilon(1e-15));
  }

  TEST_CASE("constant angular rate contributes w2 * |w|") {
    CellSamples cs;
    const double spacing[] = {0.0, 0.03, 0.1, 0.11, 0.3};
    for (double x : spacing) cs.samples.push_back({Vec3(x, 0, 0), Vec3::Zero(), Vec3(0, 0.12, 0.16)});
    LabelingConfig cfg;
    cfg.w2 = 3.0;
    CHECK(cell_cost(cs, cfg) == doctest::Approx(0.2 * 3.0).epsilon(1e-14));
  }

  TEST_CASE("three handcrafted samples against the per-term oracle") {
    CellSamples cs;
    cs.samples.push_back({Vec3(0.00, 0.00, 0.0), Vec3(0.1, -0.2, 3.6), Vec3(0.01, 0.0, 0.05)});
    cs.samples.push_back({Vec3(0.07, 0.02, 0.01), Vec3(0.5, 0.1, 4.2), Vec3(0.2, -0.1, 0.0)});
    cs.samples.push_back({Vec3(0.12, 0.05, 0.0), Vec3(-0.3, 0.4, 3.1), Vec3(0.0, 0.3, -0.1)});
    LabelingConfig cfg;
    cfg.w1 = 0.7;
    cfg.w2 = 1.3;
    cfg.w3 = 0.05;
    CHECK(std::abs(cell_cost(cs, cfg) - oracle::tc(cs.samples, cfg)) <= 1e-12);
  }

  TEST_CASE("random cells against the per-term oracle") {
    std::mt19937_64 rng(21);
    LabelingConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
      const CellSamples cs = random_cell(rng, 1 + trial % 9);
      CHECK(std::abs(cell_cost(cs, cfg) - oracle::tc(cs.samples, cfg)) <= 1e-9);
      CHECK(cell_cost(cs, cfg) >= 0.0);
    }
  }

  TEST_CASE("single sample cell has no jerk or angular term") {
    CellSamples cs;
    cs.samples.push_back({Vec3::Zero(), Vec3(3, 4, 0), Vec3(1, 1, 1)});
    CHECK(cell_cost(cs, LabelingConfig{}) == 5.0);
  }

  TEST_CASE("stationary samples fall back to the mean angular rate") {
    CellSamples cs;
    cs.samples.push_back({Vec3::Zero(), Vec3(0, 0, 1), Vec3(0, 0, 0.2)});
    cs.samples.push_back({Vec3::Zero(), Vec3(0, 0, 1), Vec3(0, 0, 0.4)});
    cs.samples.push_back({Vec3::Zero(), Vec3(0, 0, 1), Vec3(0, 0, 9.0)});
    LabelingConfig cfg;
    cfg.w1 = cfg.w3 = 1.0;
    CHECK(cell_cost(cs, cfg) == doctest::Approx(1.0 + 0.3).epsilon(1e-14));
  }

  TEST_CASE("TC does not depend on timestamps") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Pose> poses;
    std::vector<ImuSample> imu;
    for (int k = 0; k < 60; ++k) {
      poses.push_back(pose_at(0.2 * k, 0.3 + 0.04 * k, 0.5 + 0.02 * k));
      imu.push_back(imu_at(0.2 * k, Vec3(n(rng), n(rng), 3.71 + n(rng)), Vec3(n(rng), 0, n(rng))));
    }
    GridSpec g;
    g.resolution = 0.2;
    g.rows = g.cols = 20;
    const SparseCostmap base = sparse_labels(poses, imu, LabelingConfig{}, g);

    for (double scale : {0.5, 3.0}) {
      auto p2 = poses;
      auto i2 = imu;
      for (auto& p : p2) p.t = 7.0 + scale * p.t;
      for (auto& s : i2) s.t = 7.0 + scale * s.t;
      const SparseCostmap rescaled = sparse_labels(p2, i2, LabelingConfig{}, g);
      REQUIRE(rescaled.entries.size() == base.entries.size());
      for (std::size_t k = 0; k < base.entries.size(); ++k) CHECK(rescaled.entries[k].cost == base.entries[k].cost);
    }
  }

  TEST_CASE("kernel values") {
    CHECK(sparse_kernel(0.0, 1.0) == 1.0);
    CHECK(sparse_kernel(1.0, 1.0) == 0.0);
    CHECK(std::abs(sparse_kernel(0.5, 1.0) - 1.0 / 6.0) <= 1e-12);
    CHECK(std::abs(sparse_kernel(0.25, 1.0) - 0.659155) <= 1e-6);
    CHECK(sparse_kernel(2.0, 1.0) == 0.0);
    CHECK(sparse_kernel(1.0 - 1e-9, 1.0) >= 0.0);
    CHECK(sparse_kernel(1.0 - 1e-9, 1.0) < 1e-20);
    CHECK_THROWS_AS(sparse_kernel(-0.1, 1.0), ArgumentError);
    CHECK_THROWS_AS(sparse_kernel(0.1, 0.0), ArgumentError);
  }

  TEST_CASE("kernel matches the closed form and stays non-negative") {
    for (double r : {0.5, 1.0, 2.5}) {
      for (int k = 0; k <= 10000; ++k) {
        const double d = r * k / 10000.0;
        const double v = sparse_kernel(d, r);
        CHECK(v >= 0.0);
        CHECK(std::abs(v - std::max(oracle::kernel(d, r), 0.0)) <= 1e-12);
      }
    }
  }

  TEST_CASE("interpolation of a single entry") {
    GridSpec g;
    g.resolution = 0.1;
    g.rows = g.cols = 40;
    SparseCostmap s;
    s.entries.push_back({g.center_x(5), g.center_y(7), 2.5});
    LabelingConfig cfg;
    cfg.kernel_radius = 0.5;
    const DenseCostmap d = interpolate_costmap(s, g, cfg);
    CHECK(d.is_valid(7, 5));
    CHECK(d.at(7, 5) == 2.5);
    CHECK_FALSE(d.is_valid(30, 30));
    CHECK(d.at(30, 30) == 0.0);
  }

  TEST_CASE("interpolation against the brute-force double loop") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    std::uniform_real_distribution<double> cost(0.0, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
      SparseCostmap s;
      for (int n = 0; n < 5; ++n) s.entries.push_back({u(rng), u(rng), cost(rng)});
      GridSpec g;
      g.origin_x = -0.5;
      g.origin_y = -0.25;
      g.resolution = 0.25;
      g.rows = g.cols = 20;
      LabelingConfig cfg;
      cfg.kernel_radius = 0.4 + 0.1 * trial;
      const DenseCostmap d = interpolate_costmap(s, g, cfg);
      for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < g.cols; ++j) {
          const auto o = oracle::interpolate_at(s, g.center_x(j), g.center_y(i), cfg.kernel_radius);
          CHECK(d.is_valid(i, j) == o.valid);
          CHECK(std::abs(d.at(i, j) - o.value) <= 1e-9);
          if (o.valid) {
            double lo = 1e300, hi = -1e300;
            for (const auto& e : s.entries) {
              if (std::hypot(e.x - g.center_x(j), e.y - g.center_y(i)) < cfg.kernel_radius) {
                lo = std::min(lo, e.cost);
                hi = std::max(hi, e.cost);
              }
            }
            CHECK(d.at(i, j) >= lo - 1e-12);
            CHECK(d.at(i, j) <= hi + 1e-12);
          }
        }
      }
    }
  }

  TEST_CASE("interpolation input errors") {
    GridSpec g;
    CHECK_THROWS_AS(interpolate_costmap(SparseCostmap{}, g, LabelingConfig{}), ArgumentError);
    SparseCostmap s;
    s.entries.push_back({0, 0, -1.0});
    CHECK_THROWS_AS(interpolate_costmap(s, g, LabelingConfig{}), ArgumentError);
  }

  TEST_CASE("joint min-max normalization") {
    GridSpec g;
    g.rows = 1;
    g.cols = 11;
    DenseCostmap a(g, 0.0, true), b(g, 0.0, true);
    for (int j = 0; j < 11; ++j) {
      a.at(0, j) = j;
      b.at(0, j) = 5.0 + 1.5 * j;
    }
    b.valid[3] = 0;
    b.values[3] = 42.0;
    const NormalizedLabels n = normalize_labels({a, b});
    CHECK(n.min == 0.0);
    CHECK(n.max == 20.0);
    CHECK_FALSE(n.degenerate);
    CHECK(n.maps[0].at(0, 0) == 0.0);
    CHECK(n.maps[0].at(0, 10) == 0.5);
    CHECK(n.maps[1].at(0, 10) == 1.0);
    CHECK(n.maps[1].values[3] == 42.0);
    for (int j = 0; j + 1 < 11; ++j) CHECK(n.maps[0].at(0, j) < n.maps[0].at(0, j + 1));
  }

  TEST_CASE("constant labels are degenerate") {
    GridSpec g;
    g.rows = g.cols = 3;
    const NormalizedLabels n = normalize_labels({DenseCostmap(g, 4.0, true), DenseCostmap(g, 4.0, true)});
    CHECK(n.degenerate);
    for (const auto& m : n.maps) {
      for (double v : m.values) CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(normalize_labels({DenseCostmap(g)}), ArgumentError);
  }

  TEST_CASE("label grids and fine dimensions") {
    const std::vector<Pose> poses{pose_at(0.0, 1.03, 2.0), pose_at(1.0, 4.51, 2.77)};
    LabelingConfig cfg;
    cfg.coarse_res = 0.2;
    cfg.fine_res = 0.03;
    const auto [coarse, fine] = label_grids(poses, cfg);
    CHECK(coarse.origin_x <= 1.03 - cfg.kernel_radius);
    CHECK(coarse.origin_x + coarse.cols * coarse.resolution > 4.51 + cfg.kernel_radius);
    CHECK(coarse.origin_y + coarse.rows * coarse.resolution > 2.77 + cfg.kernel_radius);
    CHECK(fine.origin_x == coarse.origin_x);
    CHECK(fine.cols == static_cast<int>(std::ceil(coarse.cols * 0.2 / 0.03)));
    CHECK(fine.rows == static_cast<int>(std::ceil(coarse.rows * 0.2 / 0.03)));
  }

  TEST_CASE("flat noise-free run labels are uniform") {
    const Heightfield hf = generate_heightfield(1, 64, 64, 0.2, 0.0);
    const std::vector<Eigen::Vector2d> wp{{2.0, 2.0}, {10.0, 3.0}};
    const Trajectory traj = generate_trajectory(hf, wp, 0.5, 0.2);
    const auto imu = synthesize_imu(traj, hf, 3.71, 0.0, 1);
    const LabelSet ls = build_labels(traj, imu, LabelingConfig{});
    REQUIRE_FALSE(ls.sparse.entries.empty());
    for (const auto& e : ls.sparse.entries) CHECK(e.cost == doctest::Approx(3.71).epsilon(1e-9));
    for (std::size_t k = 0; k < ls.dense.values.size(); ++k) {
      if (ls.dense.valid[k]) CHECK(ls.dense.values[k] == doctest::Approx(3.71).epsilon(1e-9));
    }
    for (const auto& e : ls.sparse.entries) {
      const CellIndex c = ls.coarse_grid.cell_of(e.x, e.y);
      CHECK(e.x == ls.coarse_grid.center_x(c.col));
      CHECK(e.y == ls.coarse_grid.center_y(c.row));
    }
  }

  TEST_CASE("a rough patch raises TC") {
    Heightfield hf = generate_heightfield(4, 96, 96, 0.125, 1.0);
    for (int r = 0; r < hf.rows(); ++r) {
      for (int c = 0; c < hf.cols(); ++c) {
        if (c < 48) hf.elevations(r, c) = 0.0;
      }
    }
    const std::vector<Eigen::Vector2d> wp{{0.5, 6.0}, {11.5, 6.0}};
    const Trajectory traj = generate_trajectory(hf, wp, 0.5, 0.2);
    const auto imu = synthesize_imu(traj, hf, 3.71, 2.0, 5);
    const LabelSet ls = build_labels(traj, imu, LabelingConfig{});
    double flat = 0.0, rough = 0.0;
    int nf = 0, nr = 0;
    for (const auto& e : ls.sparse.entries) {
      if (e.x < 5.0) flat += e.cost, ++nf;
      if (e.x > 7.0) rough += e.cost, ++nr;
    }
    REQUIRE(nf > 0);
    REQUIRE(nr > 0);
    CHECK(rough / nr > flat / nf);
  }
}
