#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "marscost/grid.hpp"
#include "marscost/sim.hpp"
#include "marscost/tensor.hpp"

namespace marscost {

inline constexpr std::size_t kPointFeatures = 9;    // x y z r g b dx dy dz
inline constexpr std::size_t kEmbeddingDim = 384;
inline constexpr int kDefaultMaxPointsPerPillar = 32;

using PointFeature = std::array<double, kPointFeatures>;

struct Pillar {
  CellIndex cell;
  std::vector<PointFeature> points;  // offsets are relative to the centroid of these points
};

struct PillarTensor {
  std::vector<Pillar> pillars;  // in order of first occupancy
  int max_points_per_pillar = kDefaultMaxPointsPerPillar;
  std::size_t kept = 0;
  std::size_t out_of_extent = 0;
  std::size_t dropped_over_cap = 0;
};

/// H x W x C feature map aligned with `grid`, channel-innermost.
struct FeatureMap {
  GridSpec grid;
  int channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(const GridSpec& g, int c, double fill = 0.0)
      : grid(g), channels(c), data(g.size() * static_cast<std::size_t>(c), fill) {}

  int rows() const { return grid.rows; }
  int cols() const { return grid.cols; }
  double& at(int r, int col, int ch) { return data[(grid.flat(r, col)) * channels + ch]; }
  double at(int r, int col, int ch) const { return data[(grid.flat(r, col)) * channels + ch]; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

using BevFeatureMap = FeatureMap;

struct EmbeddingVector {
  std::array<double, kEmbeddingDim> values{};

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Two-layer MLP emitting per-channel (gamma, beta): hidden = ReLU(e W1 + b1), o = hidden W2 + b2,
/// gamma = 1 + o[0:C], beta = o[C:2C]. All-zero parameters therefore give the identity modulation.
struct FilmParams {
  Affine hidden;
  Affine out;

  FilmParams() = default;
  FilmParams(std::size_t embed_dim, std::size_t hidden_dim, std::size_t channels)
      : hidden(embed_dim, hidden_dim), out(hidden_dim, 2 * channels) {}

  std::size_t channels() const { return out.out_dim() / 2; }

  friend bool operator==(const FilmParams&, const FilmParams&) = default;
};

struct FilmCoefficients {
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// Groups points into vertical pillars over `grid`. Points outside the grid are discarded;
/// beyond `max_points` per pillar later points are dropped in input order.
PillarTensor pillarize(const PointCloud& cloud, const GridSpec& grid, int max_points = kDefaultMaxPointsPerPillar);

/// Fixed rescaling of pillar features to comparable magnitudes before the encoder:
/// x, y by half the grid extent, dx, dy by half a cell, z by 0.5 m, dz by 0.05 m,
/// colours mapped to (c - 0.5) / 0.25.
void standardize_features(PillarTensor& pt, const GridSpec& grid);

/// Per-point affine 9 -> C and ReLU, then channel-wise max over each pillar, scattered onto the grid.
/// When `winners` is non-null it receives, for every pillar and channel, the index of the point
/// that attained the max with a positive pre-activation, or -1 when the channel output is zero.
BevFeatureMap pillar_encode(const PillarTensor& pt, const Affine& weights, const GridSpec& grid,
                            std::vector<int>* winners = nullptr);

/// Deterministic stand-in image encoder: per-channel 64-bin histograms, a 64-bin luminance
/// gradient-magnitude histogram, an 8x8 luminance thumbnail, zero-padded to 384 and L2-normalized.
EmbeddingVector embed_image(const Image& img);

FilmCoefficients film_coefficients(const EmbeddingVector& emb, const FilmParams& params);

BevFeatureMap film_modulate(const BevFeatureMap& feat, const EmbeddingVector& emb, const FilmParams& params);
BevFeatureMap film_modulate(const BevFeatureMap& feat, const FilmCoefficients& coeffs);

}  // namespace marscost
