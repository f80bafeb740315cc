#include "marscost/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace marscost {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool is_centered_square(const GridSpec& g) {
  return g.rows == g.cols && g.origin_x == -0.5 * g.cols * g.resolution &&
         g.origin_y == -0.5 * g.rows * g.resolution;
}

}  // namespace

AdamState::AdamState(const ModelParams& params) {
  for (const auto& [name, t] : params.named_tensors()) {
    m.push_back(t->zeros_like());
    v.push_back(t->zeros_like());
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  auto P = params.named_tensors();
  const auto G = grads.named_tensors();
  if (P.size() != G.size() || state.m.size() != P.size() || state.v.size() != P.size()) {
    throw ArgumentError("adam_step: parameter, gradient and state layouts differ");
  }
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (P[i].second->shape != G[i].second->shape || state.m[i].shape != P[i].second->shape ||
        state.v[i].shape != P[i].second->shape) {
      throw ArgumentError("adam_step: shape mismatch for '" + P[i].first + "'");
    }
    for (double g : G[i].second->data) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in '" + G[i].first + "'");
    }
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto& w = P[i].second->data;
    const auto& g = G[i].second->data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AugmentDraw d;
  d.quarter_turns = cfg.rotate ? static_cast<int>(rng() % 4) : 0;
  if (cfg.max_shift_cells > 0) {
    const auto span = static_cast<std::uint64_t>(2 * cfg.max_shift_cells + 1);
    d.shift_rows = static_cast<int>(rng() % span) - cfg.max_shift_cells;
    d.shift_cols = static_cast<int>(rng() % span) - cfg.max_shift_cells;
  }
  d.image_sigma = cfg.image_sigma;
  d.point_sigma = cfg.point_sigma;
  d.noise_seed = rng();
  return d;
}

Sample apply_augmentation(const Sample& sample, const AugmentDraw& draw) {
  Sample out = sample;
  const GridSpec& g = sample.target.grid;
  const int turns = ((draw.quarter_turns % 4) + 4) % 4;

  if (turns != 0) {
    if (!is_centered_square(g)) throw ArgumentError("augment: rotation needs a square grid centred on the origin");
    const int N = g.rows;
    for (int t = 0; t < turns; ++t) {
      // (x, y) -> (-y, x); cell (i, j) -> (j, N-1-i).
      for (auto& p : out.cloud.points) p.xyz = Vec3(-p.xyz.y(), p.xyz.x(), p.xyz.z());
      DenseCostmap rotated(g);
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
          rotated.at(j, N - 1 - i) = out.target.at(i, j);
          rotated.valid[g.flat(j, N - 1 - i)] = out.target.valid[g.flat(i, j)];
        }
      }
      out.target = std::move(rotated);
    }
  }

  if (draw.shift_rows != 0 || draw.shift_cols != 0) {
    const double dx = draw.shift_cols * g.resolution, dy = draw.shift_rows * g.resolution;
    for (auto& p : out.cloud.points) p.xyz += Vec3(dx, dy, 0.0);
    DenseCostmap shifted(g);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const int si = i + draw.shift_rows, sj = j + draw.shift_cols;
        if (si < 0 || si >= g.rows || sj < 0 || sj >= g.cols) continue;
        shifted.at(si, sj) = out.target.at(i, j);
        shifted.valid[g.flat(si, sj)] = out.target.valid[g.flat(i, j)];
      }
    }
    out.target = std::move(shifted);
  }

  if (draw.image_sigma > 0.0 || draw.point_sigma > 0.0) {
    std::mt19937_64 rng(draw.noise_seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    if (draw.image_sigma > 0.0) {
      for (double& v : out.image.pixels) v = std::clamp(v + draw.image_sigma * n01(rng), 0.0, 1.0);
    }
    if (draw.point_sigma > 0.0) {
      for (auto& p : out.cloud.points) p.xyz += draw.point_sigma * Vec3(n01(rng), n01(rng), n01(rng));
    }
  }
  return out;
}

Sample augment(const Sample& sample, const AugmentConfig& cfg, std::uint64_t seed) {
  return apply_augmentation(sample, draw_augmentation(cfg, seed));
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(huber_delta > 0.0) || !(smooth_lambda > 0.0)) {
    throw ArgumentError("TrainConfig: lr, huber_delta and smooth_lambda must be positive");
  }
  if (batch_size < 1) throw ArgumentError("TrainConfig: batch_size must be >= 1");
  if (epochs < 0 || max_steps < 0) throw ArgumentError("TrainConfig: epochs and max_steps must be >= 0");
}

FitResult fit_from(ModelParams params, std::span<const Sample> dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ArgumentError("fit: empty dataset");
  params.validate();

  FitResult result;
  AdamState state(params);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  int step = 0;
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = dataset[order[k]];
        if (!cfg.augment) {
          batch.push_back(s);
          continue;
        }
        // A shift can push every labelled cell off the grid; keep the original then.
        Sample a = augment(s, cfg.augmentation, mix(mix(cfg.seed, static_cast<std::uint64_t>(step)), k));
        batch.push_back(a.target.valid_count() > 0 ? std::move(a) : s);
      }
      LossAndGrads lg = loss_and_grads(params, batch, cfg.loss());
      adam_step(params, lg.grads, state, cfg.lr);
      result.history.push_back({step, lg.loss});
      ++step;
    }
    if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
  }
  result.params = std::move(params);
  return result;
}

FitResult fit(std::span<const Sample> dataset, const TrainConfig& cfg, const ModelConfig& model) {
  return fit_from(init_params(model, cfg.seed), dataset, cfg);
}

}  // namespace marscost
