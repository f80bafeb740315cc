#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "marscost/bev.hpp"
#include "marscost/grid.hpp"
#include "marscost/sim.hpp"
#include "marscost/tensor.hpp"

namespace marscost {

/// 3x3 (or 1x1) convolution; weight stored [kh][kw][in][out].
struct ConvLayer {
  Tensor weight;
  Tensor bias;

  ConvLayer() = default;
  ConvLayer(std::size_t k, std::size_t in, std::size_t out) : weight({k, k, in, out}), bias({out}) {}

  std::size_t kernel() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(2); }
  std::size_t out_channels() const { return weight.dim(3); }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct ModelConfig {
  int pillar_channels = 16;
  int stage3_channels = 32;
  int stage4_channels = 32;
  int film_hidden = 32;
  int head_channels = 64;
  int max_points_per_pillar = kDefaultMaxPointsPerPillar;

  void validate() const;
};

/// Costmap regressor:
///   pillars -> standardize -> affine+ReLU+max -> conv3x3/2 + ReLU (s3) -> conv3x3/2 + ReLU (s4)
///   -> FiLM(s3), FiLM(s4) from the image embedding -> upsample s4 to s3, concat
///   -> conv3x3 + ReLU -> conv1x1 -> sigmoid -> bilinear upsample to the BEV grid.
struct ModelParams {
  Affine pillar;
  ConvLayer stage3;
  ConvLayer stage4;
  FilmParams film3;
  FilmParams film4;
  ConvLayer head;
  ConvLayer out;
  int max_points_per_pillar = kDefaultMaxPointsPerPillar;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& cfg);  // all-zero tensors

  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

  std::size_t parameter_count() const;
  ModelConfig config() const;
  ModelParams zeros_like() const;

  /// Throws ArgumentError if tensor shapes are inconsistent, NumericError on non-finite values.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a counter-based generator; zero biases.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct Sample {
  PointCloud cloud;
  Image image;
  DenseCostmap target;
  bool use_film = true;  // false bypasses the image branch (identity modulation)
};

struct ForwardOptions {
  bool use_film = true;
};

DenseCostmap forward(const ModelParams& params, const PointCloud& cloud, const Image& image, const GridSpec& grid,
                     ForwardOptions opts = {});

/// Mean Huber penalty over cells where `target` is valid.
double huber_loss(const DenseCostmap& pred, const DenseCostmap& target, double delta);

/// lambda * (mean |vertical forward difference| + mean |horizontal forward difference|) over all cells.
double smoothness_loss(const DenseCostmap& pred, double lambda);

struct LossConfig {
  double huber_delta = 0.1;
  double smooth_lambda = 0.1;
};

struct LossBreakdown {
  double huber = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

struct LossAndGrads {
  LossBreakdown loss;  // batch means
  ModelParams grads;
};

/// Batch-mean loss and its exact gradient with respect to every parameter tensor.
LossAndGrads loss_and_grads(const ModelParams& params, std::span<const Sample> batch, const LossConfig& cfg);

/// Loss only; same value as loss_and_grads without the backward pass.
LossBreakdown batch_loss(const ModelParams& params, std::span<const Sample> batch, const LossConfig& cfg);

}  // namespace marscost
