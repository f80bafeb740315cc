#include "marscost/bev.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace marscost {

PillarTensor pillarize(const PointCloud& cloud, const GridSpec& grid, int max_points) {
  grid.validate();
  if (max_points < 1) throw ArgumentError("pillarize: max_points must be >= 1");

  PillarTensor pt;
  pt.max_points_per_pillar = max_points;
  std::unordered_map<std::size_t, std::size_t> slot;
  for (const auto& p : cloud.points) {
    const auto cell = grid.locate(p.xyz.x(), p.xyz.y());
    if (!cell || !std::isfinite(p.xyz.z())) {
      ++pt.out_of_extent;
      continue;
    }
    auto [it, inserted] = slot.try_emplace(grid.flat(cell->row, cell->col), pt.pillars.size());
    if (inserted) pt.pillars.push_back({*cell, {}});
    Pillar& pillar = pt.pillars[it->second];
    if (static_cast<int>(pillar.points.size()) >= max_points) {
      ++pt.dropped_over_cap;
      continue;
    }
    pillar.points.push_back({p.xyz.x(), p.xyz.y(), p.xyz.z(), p.rgb.r, p.rgb.g, p.rgb.b, 0.0, 0.0, 0.0});
    ++pt.kept;
  }

  for (auto& pillar : pt.pillars) {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (const auto& f : pillar.points) {
      cx += f[0];
      cy += f[1];
      cz += f[2];
    }
    const double n = static_cast<double>(pillar.points.size());
    cx /= n;
    cy /= n;
    cz /= n;
    for (auto& f : pillar.points) {
      f[6] = f[0] - cx;
      f[7] = f[1] - cy;
      f[8] = f[2] - cz;
    }
  }
  return pt;
}

void standardize_features(PillarTensor& pt, const GridSpec& grid) {
  const double sx = 0.5 * grid.cols * grid.resolution, sy = 0.5 * grid.rows * grid.resolution;
  const double cx = grid.origin_x + sx, cy = grid.origin_y + sy;
  const double half_cell = 0.5 * grid.resolution;
  for (auto& pillar : pt.pillars) {
    for (auto& f : pillar.points) {
      f[0] = (f[0] - cx) / sx;
      f[1] = (f[1] - cy) / sy;
      f[2] /= 0.5;
      for (int k = 3; k < 6; ++k) f[k] = (f[k] - 0.5) / 0.25;
      f[6] /= half_cell;
      f[7] /= half_cell;
      f[8] /= 0.05;
    }
  }
}

BevFeatureMap pillar_encode(const PillarTensor& pt, const Affine& weights, const GridSpec& grid,
                            std::vector<int>* winners) {
  grid.validate();
  if (weights.weight.shape.size() != 2 || weights.in_dim() != kPointFeatures ||
      weights.bias.shape.size() != 1 || weights.weight.dim(1) != weights.out_dim()) {
    throw ArgumentError("pillar_encode: weights must be an affine map 9 -> C");
  }
  const std::size_t C = weights.out_dim();
  BevFeatureMap out(grid, static_cast<int>(C));
  if (winners) winners->assign(pt.pillars.size() * C, -1);

  std::vector<double> z(C);
  for (std::size_t p = 0; p < pt.pillars.size(); ++p) {
    const Pillar& pillar = pt.pillars[p];
    if (!grid.contains(pillar.cell)) throw ArgumentError("pillar_encode: pillar cell outside grid");
    double* cell = &out.data[grid.flat(pillar.cell.row, pillar.cell.col) * C];
    for (std::size_t q = 0; q < pillar.points.size(); ++q) {
      const PointFeature& f = pillar.points[q];
      std::copy(weights.bias.data.begin(), weights.bias.data.end(), z.begin());
      for (std::size_t k = 0; k < kPointFeatures; ++k) {
        const double fk = f[k];
        const double* w = &weights.weight.data[k * C];
        for (std::size_t c = 0; c < C; ++c) z[c] += fk * w[c];
      }
      // Cells start at zero, so strict '>' keeps the first point that attains a positive max.
      for (std::size_t c = 0; c < C; ++c) {
        if (z[c] > cell[c]) {
          cell[c] = z[c];
          if (winners) (*winners)[p * C + c] = static_cast<int>(q);
        }
      }
    }
  }
  return out;
}

EmbeddingVector embed_image(const Image& img) {
  if (img.rows < 1 || img.cols < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.rows) * static_cast<std::size_t>(img.cols) * 3) {
    throw ArgumentError("embed_image: malformed image");
  }
  constexpr int kBins = 64;
  EmbeddingVector emb;
  auto& v = emb.values;
  const int H = img.rows, W = img.cols;
  const double inv_n = 1.0 / (static_cast<double>(H) * W);

  auto bin_of = [](double x, double hi) {
    const double b = std::floor(std::clamp(x, 0.0, hi) / hi * kBins);
    return std::min(static_cast<int>(b), kBins - 1);
  };

  std::vector<double> lum(static_cast<std::size_t>(H) * W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      for (int ch = 0; ch < 3; ++ch) v[ch * kBins + bin_of(img.at(r, c, ch), 1.0)] += inv_n;
      lum[static_cast<std::size_t>(r) * W + c] =
          0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
    }
  }

  const double max_mag = std::sqrt(0.5);
  auto L = [&](int r, int c) { return lum[static_cast<std::size_t>(std::clamp(r, 0, H - 1)) * W + std::clamp(c, 0, W - 1)]; };
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double gx = 0.5 * (L(r, c + 1) - L(r, c - 1));
      const double gy = 0.5 * (L(r + 1, c) - L(r - 1, c));
      v[3 * kBins + bin_of(std::hypot(gx, gy), max_mag)] += inv_n;
    }
  }

  // 8x8 block-averaged thumbnail; blocks narrower than a pixel take the nearest pixel.
  for (int by = 0; by < 8; ++by) {
    const int r0 = std::min(by * H / 8, H - 1);
    const int r1 = std::max(r0 + 1, (by + 1) * H / 8);
    for (int bx = 0; bx < 8; ++bx) {
      const int c0 = std::min(bx * W / 8, W - 1);
      const int c1 = std::max(c0 + 1, (bx + 1) * W / 8);
      double sum = 0.0;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) sum += lum[static_cast<std::size_t>(r) * W + c];
      }
      v[4 * kBins + by * 8 + bx] = sum / ((r1 - r0) * (c1 - c0));
    }
  }

  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
  }
  return emb;
}

FilmCoefficients film_coefficients(const EmbeddingVector& emb, const FilmParams& params) {
  const std::size_t D = params.hidden.in_dim();
  const std::size_t Hd = params.hidden.out_dim();
  const std::size_t O = params.out.out_dim();
  if (D != kEmbeddingDim || params.out.in_dim() != Hd || O % 2 != 0 || O == 0) {
    throw ArgumentError("film_coefficients: inconsistent FiLM parameter shapes");
  }
  std::vector<double> hidden(params.hidden.bias.data);
  for (std::size_t k = 0; k < D; ++k) {
    const double e = emb.values[k];
    if (e == 0.0) continue;
    const double* w = &params.hidden.weight.data[k * Hd];
    for (std::size_t h = 0; h < Hd; ++h) hidden[h] += e * w[h];
  }
  for (double& h : hidden) h = std::max(h, 0.0);

  std::vector<double> o(params.out.bias.data);
  for (std::size_t h = 0; h < Hd; ++h) {
    const double* w = &params.out.weight.data[h * O];
    for (std::size_t j = 0; j < O; ++j) o[j] += hidden[h] * w[j];
  }
  const std::size_t C = O / 2;
  FilmCoefficients fc;
  fc.gamma.resize(C);
  fc.beta.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    fc.gamma[c] = 1.0 + o[c];
    fc.beta[c] = o[C + c];
  }
  return fc;
}

BevFeatureMap film_modulate(const BevFeatureMap& feat, const FilmCoefficients& coeffs) {
  const auto C = static_cast<std::size_t>(feat.channels);
  if (coeffs.gamma.size() != C || coeffs.beta.size() != C) {
    throw ArgumentError("film_modulate: modulation width does not match feature channels");
  }
  BevFeatureMap out = feat;
  for (std::size_t k = 0; k < out.data.size(); k += C) {
    for (std::size_t c = 0; c < C; ++c) out.data[k + c] = coeffs.gamma[c] * feat.data[k + c] + coeffs.beta[c];
  }
  return out;
}

BevFeatureMap film_modulate(const BevFeatureMap& feat, const EmbeddingVector& emb, const FilmParams& params) {
  if (params.channels() != static_cast<std::size_t>(feat.channels)) {
    throw ArgumentError("film_modulate: FiLM head emits " + std::to_string(2 * params.channels()) +
                        " values for a " + std::to_string(feat.channels) + "-channel map");
  }
  return film_modulate(feat, film_coefficients(emb, params));
}

}  // namespace marscost
