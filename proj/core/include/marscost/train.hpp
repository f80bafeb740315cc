#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "marscost/net.hpp"

namespace marscost {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(const ModelParams& params);
};

/// One bias-corrected Adam update in place. Validates every gradient tensor before touching
/// any parameter; a non-finite entry raises NumericError naming the tensor.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

struct AugmentConfig {
  bool rotate = true;          // random multiple of 90 degrees about the vertical axis
  int max_shift_cells = 2;     // uniform integer shift in [-max, max] per axis
  double image_sigma = 0.01;   // pixel noise, clamped to [0,1]
  double point_sigma = 0.01;   // metres, added to x, y, z
};

struct AugmentDraw {
  int quarter_turns = 0;
  int shift_rows = 0;
  int shift_cols = 0;
  double image_sigma = 0.0;
  double point_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::uint64_t seed);

/// Applies the draw jointly to cloud and target: rotation remaps target cells exactly (square,
/// origin-centred grids only), shifts move cells and points by whole cells with vacated cells
/// becoming invalid. Noise touches image pixels and point coordinates, never the target.
Sample apply_augmentation(const Sample& sample, const AugmentDraw& draw);

Sample augment(const Sample& sample, const AugmentConfig& cfg, std::uint64_t seed);

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 8;
  double huber_delta = 0.1;
  double smooth_lambda = 0.1;
  int epochs = 1;
  int max_steps = 0;  // 0 = no cap
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig augmentation;

  void validate() const;
  LossConfig loss() const { return {huber_delta, smooth_lambda}; }
};

struct StepRecord {
  int step = 0;
  LossBreakdown loss;
};

struct FitResult {
  ModelParams params;
  std::vector<StepRecord> history;
};

/// Seeded epoch shuffling into batches, per-sample augmentation, loss_and_grads and adam_step.
FitResult fit(std::span<const Sample> dataset, const TrainConfig& cfg, const ModelConfig& model);

/// Continues training from given parameters with a fresh optimizer state.
FitResult fit_from(ModelParams params, std::span<const Sample> dataset, const TrainConfig& cfg);

}  // namespace marscost
