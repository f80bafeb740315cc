#include "marscost/net.hpp"

#include <algorithm>
#include <cmath>

namespace marscost {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GridSpec downsampled(const GridSpec& g, int stride, int rows, int cols) {
  GridSpec out = g;
  out.resolution = g.resolution * stride;
  out.rows = rows;
  out.cols = cols;
  return out;
}

int conv_out(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

FeatureMap conv2d(const FeatureMap& in, const ConvLayer& L, int stride, int pad) {
  const int K = static_cast<int>(L.kernel());
  const auto Ci = L.in_channels(), Co = L.out_channels();
  if (static_cast<std::size_t>(in.channels) != Ci) throw ArgumentError("conv2d: input channel mismatch");
  const int Ho = conv_out(in.rows(), K, stride, pad), Wo = conv_out(in.cols(), K, stride, pad);
  FeatureMap out(downsampled(in.grid, stride, Ho, Wo), static_cast<int>(Co));
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      double* o = &out.data[out.grid.flat(oy, ox) * Co];
      std::copy(L.bias.data.begin(), L.bias.data.end(), o);
      for (int ky = 0; ky < K; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= in.rows()) continue;
        for (int kx = 0; kx < K; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= in.cols()) continue;
          const double* x = &in.data[in.grid.flat(iy, ix) * Ci];
          const double* w = &L.weight.data[static_cast<std::size_t>(ky * K + kx) * Ci * Co];
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const double v = x[ci];
            if (v == 0.0) continue;
            const double* wr = w + ci * Co;
            for (std::size_t co = 0; co < Co; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates parameter gradients into `g`; returns the input gradient when `want_input`.
FeatureMap conv2d_backward(const FeatureMap& in, const ConvLayer& L, int stride, int pad, const FeatureMap& d_out,
                           ConvLayer& g, bool want_input) {
  const int K = static_cast<int>(L.kernel());
  const auto Ci = L.in_channels(), Co = L.out_channels();
  FeatureMap d_in;
  if (want_input) d_in = FeatureMap(in.grid, in.channels);
  for (int oy = 0; oy < d_out.rows(); ++oy) {
    for (int ox = 0; ox < d_out.cols(); ++ox) {
      const double* go = &d_out.data[d_out.grid.flat(oy, ox) * Co];
      for (std::size_t co = 0; co < Co; ++co) g.bias.data[co] += go[co];
      for (int ky = 0; ky < K; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= in.rows()) continue;
        for (int kx = 0; kx < K; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= in.cols()) continue;
          const std::size_t base = static_cast<std::size_t>(ky * K + kx) * Ci * Co;
          const double* x = &in.data[in.grid.flat(iy, ix) * Ci];
          double* gx = want_input ? &d_in.data[in.grid.flat(iy, ix) * Ci] : nullptr;
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const double* wr = &L.weight.data[base + ci * Co];
            double* gw = &g.weight.data[base + ci * Co];
            const double v = x[ci];
            double acc = 0.0;
            for (std::size_t co = 0; co < Co; ++co) {
              gw[co] += v * go[co];
              acc += wr[co] * go[co];
            }
            if (gx) gx[ci] += acc;
          }
        }
      }
    }
  }
  return d_in;
}

struct AxisWeights {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

// Half-pixel-centre (align_corners = false) bilinear sampling along one axis.
AxisWeights axis_weights(int in, int out) {
  AxisWeights a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.w1.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    a.i0[o] = i0;
    a.i1[o] = std::min(i0 + 1, in - 1);
    a.w1[o] = src - i0;
  }
  return a;
}

FeatureMap upsample(const FeatureMap& in, const GridSpec& out_grid) {
  const auto C = static_cast<std::size_t>(in.channels);
  FeatureMap out(out_grid, in.channels);
  const AxisWeights ay = axis_weights(in.rows(), out_grid.rows), ax = axis_weights(in.cols(), out_grid.cols);
  for (int y = 0; y < out_grid.rows; ++y) {
    const double wy1 = ay.w1[y], wy0 = 1.0 - wy1;
    for (int x = 0; x < out_grid.cols; ++x) {
      const double wx1 = ax.w1[x], wx0 = 1.0 - wx1;
      const double* a = &in.data[in.grid.flat(ay.i0[y], ax.i0[x]) * C];
      const double* b = &in.data[in.grid.flat(ay.i0[y], ax.i1[x]) * C];
      const double* c = &in.data[in.grid.flat(ay.i1[y], ax.i0[x]) * C];
      const double* d = &in.data[in.grid.flat(ay.i1[y], ax.i1[x]) * C];
      double* o = &out.data[out_grid.flat(y, x) * C];
      for (std::size_t ch = 0; ch < C; ++ch) {
        o[ch] = wy0 * (wx0 * a[ch] + wx1 * b[ch]) + wy1 * (wx0 * c[ch] + wx1 * d[ch]);
      }
    }
  }
  return out;
}

FeatureMap upsample_backward(const FeatureMap& d_out, const GridSpec& in_grid) {
  const auto C = static_cast<std::size_t>(d_out.channels);
  FeatureMap d_in(in_grid, d_out.channels);
  const AxisWeights ay = axis_weights(in_grid.rows, d_out.rows()), ax = axis_weights(in_grid.cols, d_out.cols());
  for (int y = 0; y < d_out.rows(); ++y) {
    const double wy1 = ay.w1[y], wy0 = 1.0 - wy1;
    for (int x = 0; x < d_out.cols(); ++x) {
      const double wx1 = ax.w1[x], wx0 = 1.0 - wx1;
      const double* g = &d_out.data[d_out.grid.flat(y, x) * C];
      double* a = &d_in.data[in_grid.flat(ay.i0[y], ax.i0[x]) * C];
      double* b = &d_in.data[in_grid.flat(ay.i0[y], ax.i1[x]) * C];
      double* c = &d_in.data[in_grid.flat(ay.i1[y], ax.i0[x]) * C];
      double* d = &d_in.data[in_grid.flat(ay.i1[y], ax.i1[x]) * C];
      for (std::size_t ch = 0; ch < C; ++ch) {
        a[ch] += wy0 * wx0 * g[ch];
        b[ch] += wy0 * wx1 * g[ch];
        c[ch] += wy1 * wx0 * g[ch];
        d[ch] += wy1 * wx1 * g[ch];
      }
    }
  }
  return d_in;
}

void relu_inplace(FeatureMap& m) {
  for (double& v : m.data) v = v > 0.0 ? v : 0.0;
}

// Zeroes gradient entries whose forward activation was clipped.
void relu_backward_inplace(FeatureMap& grad, const FeatureMap& activated) {
  for (std::size_t k = 0; k < grad.data.size(); ++k) {
    if (!(activated.data[k] > 0.0)) grad.data[k] = 0.0;
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct FilmTrace {
  std::vector<double> hidden;  // post-ReLU
  FilmCoefficients coeffs;
};

FilmTrace film_trace(const EmbeddingVector& emb, const FilmParams& p) {
  FilmTrace t;
  const std::size_t Hd = p.hidden.out_dim();
  t.hidden = p.hidden.bias.data;
  for (std::size_t k = 0; k < kEmbeddingDim; ++k) {
    const double e = emb.values[k];
    if (e == 0.0) continue;
    const double* w = &p.hidden.weight.data[k * Hd];
    for (std::size_t h = 0; h < Hd; ++h) t.hidden[h] += e * w[h];
  }
  for (double& h : t.hidden) h = std::max(h, 0.0);
  t.coeffs = film_coefficients(emb, p);
  return t;
}

FilmCoefficients identity_film(std::size_t channels) {
  return {std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0)};
}

// Gradient of a FiLM head given dL/dgamma and dL/dbeta.
void film_backward(const EmbeddingVector& emb, const FilmParams& p, const FilmTrace& t,
                   const std::vector<double>& d_gamma, const std::vector<double>& d_beta, FilmParams& g) {
  const std::size_t C = d_gamma.size();
  const std::size_t Hd = p.hidden.out_dim();
  const std::size_t O = 2 * C;
  std::vector<double> d_o(O);
  for (std::size_t c = 0; c < C; ++c) {
    d_o[c] = d_gamma[c];
    d_o[C + c] = d_beta[c];
  }
  std::vector<double> d_hidden(Hd, 0.0);
  for (std::size_t h = 0; h < Hd; ++h) {
    const double* w = &p.out.weight.data[h * O];
    double* gw = &g.out.weight.data[h * O];
    double acc = 0.0;
    for (std::size_t j = 0; j < O; ++j) {
      gw[j] += t.hidden[h] * d_o[j];
      acc += w[j] * d_o[j];
    }
    d_hidden[h] = t.hidden[h] > 0.0 ? acc : 0.0;
  }
  for (std::size_t j = 0; j < O; ++j) g.out.bias.data[j] += d_o[j];
  for (std::size_t h = 0; h < Hd; ++h) g.hidden.bias.data[h] += d_hidden[h];
  for (std::size_t k = 0; k < kEmbeddingDim; ++k) {
    const double e = emb.values[k];
    if (e == 0.0) continue;
    double* gw = &g.hidden.weight.data[k * Hd];
    for (std::size_t h = 0; h < Hd; ++h) gw[h] += e * d_hidden[h];
  }
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out(a.grid, a.channels + b.channels);
  const auto Ca = static_cast<std::size_t>(a.channels), Cb = static_cast<std::size_t>(b.channels);
  for (std::size_t k = 0; k < a.grid.size(); ++k) {
    std::copy_n(&a.data[k * Ca], Ca, &out.data[k * (Ca + Cb)]);
    std::copy_n(&b.data[k * Cb], Cb, &out.data[k * (Ca + Cb) + Ca]);
  }
  return out;
}

struct Trace {
  PillarTensor pillars;
  std::vector<int> winners;
  FeatureMap pseudo;       // pillar encoder output
  FeatureMap s3, s4;       // post-ReLU backbone scales
  EmbeddingVector emb;
  bool film = true;
  FilmTrace f3, f4;
  FeatureMap m3, m4;       // modulated scales
  FeatureMap fused;        // [m3, upsample(m4)]
  FeatureMap head;         // post-ReLU
  FeatureMap prob;         // sigmoid at s3 resolution
  DenseCostmap output;
};

Trace run_forward(const ModelParams& p, const PointCloud& cloud, const Image& image, const GridSpec& grid,
                  bool use_film) {
  grid.validate();
  Trace t;
  t.film = use_film;
  t.pillars = pillarize(cloud, grid, p.max_points_per_pillar);
  standardize_features(t.pillars, grid);
  t.pseudo = pillar_encode(t.pillars, p.pillar, grid, &t.winners);

  t.s3 = conv2d(t.pseudo, p.stage3, 2, 1);
  relu_inplace(t.s3);
  t.s4 = conv2d(t.s3, p.stage4, 2, 1);
  relu_inplace(t.s4);

  if (use_film) {
    t.emb = embed_image(image);
    t.f3 = film_trace(t.emb, p.film3);
    t.f4 = film_trace(t.emb, p.film4);
  } else {
    t.f3.coeffs = identity_film(p.stage3.out_channels());
    t.f4.coeffs = identity_film(p.stage4.out_channels());
  }
  t.m3 = film_modulate(t.s3, t.f3.coeffs);
  t.m4 = film_modulate(t.s4, t.f4.coeffs);

  t.fused = concat_channels(t.m3, upsample(t.m4, t.m3.grid));
  t.head = conv2d(t.fused, p.head, 1, 1);
  relu_inplace(t.head);
  FeatureMap logit = conv2d(t.head, p.out, 1, 0);
  for (double& v : logit.data) v = sigmoid(v);
  t.prob = std::move(logit);

  const FeatureMap up = upsample(t.prob, grid);
  t.output = DenseCostmap(grid, 0.0, true);
  t.output.values = up.data;
  return t;
}

void run_backward(const ModelParams& p, const Trace& t, const std::vector<double>& d_output, ModelParams& g) {
  FeatureMap d_up(t.output.grid, 1);
  d_up.data = d_output;
  FeatureMap d_logit = upsample_backward(d_up, t.prob.grid);
  for (std::size_t k = 0; k < d_logit.data.size(); ++k) {
    const double s = t.prob.data[k];
    d_logit.data[k] *= s * (1.0 - s);
  }

  FeatureMap d_head = conv2d_backward(t.head, p.out, 1, 0, d_logit, g.out, true);
  relu_backward_inplace(d_head, t.head);
  const FeatureMap d_fused = conv2d_backward(t.fused, p.head, 1, 1, d_head, g.head, true);

  const auto C3 = static_cast<std::size_t>(t.m3.channels), C4 = static_cast<std::size_t>(t.m4.channels);
  FeatureMap d_m3(t.m3.grid, t.m3.channels), d_m4_up(t.m3.grid, t.m4.channels);
  for (std::size_t k = 0; k < t.m3.grid.size(); ++k) {
    std::copy_n(&d_fused.data[k * (C3 + C4)], C3, &d_m3.data[k * C3]);
    std::copy_n(&d_fused.data[k * (C3 + C4) + C3], C4, &d_m4_up.data[k * C4]);
  }
  const FeatureMap d_m4 = upsample_backward(d_m4_up, t.m4.grid);

  // FiLM: m = gamma * s + beta.
  auto film_back = [&](const FeatureMap& d_m, const FeatureMap& s, const FilmTrace& ft, const FilmParams& fp,
                       FilmParams& fg) {
    const auto C = static_cast<std::size_t>(s.channels);
    FeatureMap d_s(s.grid, s.channels);
    std::vector<double> d_gamma(C, 0.0), d_beta(C, 0.0);
    for (std::size_t k = 0; k < s.data.size(); k += C) {
      for (std::size_t c = 0; c < C; ++c) {
        d_gamma[c] += d_m.data[k + c] * s.data[k + c];
        d_beta[c] += d_m.data[k + c];
        d_s.data[k + c] = d_m.data[k + c] * ft.coeffs.gamma[c];
      }
    }
    if (t.film) film_backward(t.emb, fp, ft, d_gamma, d_beta, fg);
    return d_s;
  };
  FeatureMap d_s3 = film_back(d_m3, t.s3, t.f3, p.film3, g.film3);
  FeatureMap d_s4 = film_back(d_m4, t.s4, t.f4, p.film4, g.film4);

  relu_backward_inplace(d_s4, t.s4);
  const FeatureMap d_s3_from4 = conv2d_backward(t.s3, p.stage4, 2, 1, d_s4, g.stage4, true);
  for (std::size_t k = 0; k < d_s3.data.size(); ++k) d_s3.data[k] += d_s3_from4.data[k];
  relu_backward_inplace(d_s3, t.s3);
  const FeatureMap d_pseudo = conv2d_backward(t.pseudo, p.stage3, 2, 1, d_s3, g.stage3, true);

  // Max-pool routes each channel's gradient to its winning point.
  const std::size_t C = p.pillar.out_dim();
  for (std::size_t pi = 0; pi < t.pillars.pillars.size(); ++pi) {
    const Pillar& pillar = t.pillars.pillars[pi];
    const double* gcell = &d_pseudo.data[t.pseudo.grid.flat(pillar.cell.row, pillar.cell.col) * C];
    for (std::size_t c = 0; c < C; ++c) {
      const int q = t.winners[pi * C + c];
      if (q < 0 || gcell[c] == 0.0) continue;
      const PointFeature& f = pillar.points[static_cast<std::size_t>(q)];
      for (std::size_t k = 0; k < kPointFeatures; ++k) g.pillar.weight.data[k * C + c] += f[k] * gcell[c];
      g.pillar.bias.data[c] += gcell[c];
    }
  }
}

void check_same_grid(const DenseCostmap& a, const DenseCostmap& b, const char* what) {
  if (a.grid.rows != b.grid.rows || a.grid.cols != b.grid.cols || a.values.size() != b.values.size() ||
      b.valid.size() != b.values.size()) {
    throw ArgumentError(std::string(what) + ": prediction and target grids differ");
  }
}

// d(huber)/d(pred) per cell, already divided by the valid count.
std::vector<double> huber_grad(const DenseCostmap& pred, const DenseCostmap& target, double delta) {
  std::vector<double> g(pred.values.size(), 0.0);
  double n = 0.0;
  for (auto v : target.valid) n += v != 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!target.valid[k]) continue;
    const double e = pred.values[k] - target.values[k];
    g[k] = (std::abs(e) < delta ? e : delta * (e > 0.0 ? 1.0 : -1.0)) / n;
  }
  return g;
}

void add_smoothness_grad(const DenseCostmap& pred, double lambda, std::vector<double>& g) {
  const int H = pred.grid.rows, W = pred.grid.cols;
  auto sgn = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  if (H >= 2) {
    const double scale = lambda / ((H - 1.0) * W);
    for (int i = 0; i + 1 < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const double s = scale * sgn(pred.at(i + 1, j) - pred.at(i, j));
        g[pred.grid.flat(i + 1, j)] += s;
        g[pred.grid.flat(i, j)] -= s;
      }
    }
  }
  if (W >= 2) {
    const double scale = lambda / (H * (W - 1.0));
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j + 1 < W; ++j) {
        const double s = scale * sgn(pred.at(i, j + 1) - pred.at(i, j));
        g[pred.grid.flat(i, j + 1)] += s;
        g[pred.grid.flat(i, j)] -= s;
      }
    }
  }
}

template <typename Visitor, typename Self>
void visit(Self& self, Visitor&& v) {
  v("pillar.weight", self.pillar.weight);
  v("pillar.bias", self.pillar.bias);
  v("stage3.weight", self.stage3.weight);
  v("stage3.bias", self.stage3.bias);
  v("stage4.weight", self.stage4.weight);
  v("stage4.bias", self.stage4.bias);
  v("film3.hidden.weight", self.film3.hidden.weight);
  v("film3.hidden.bias", self.film3.hidden.bias);
  v("film3.out.weight", self.film3.out.weight);
  v("film3.out.bias", self.film3.out.bias);
  v("film4.hidden.weight", self.film4.hidden.weight);
  v("film4.hidden.bias", self.film4.hidden.bias);
  v("film4.out.weight", self.film4.out.weight);
  v("film4.out.bias", self.film4.out.bias);
  v("head.weight", self.head.weight);
  v("head.bias", self.head.bias);
  v("out.weight", self.out.weight);
  v("out.bias", self.out.bias);
}

// Sum in ascending order so the result does not depend on batch order.
double ordered_sum(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace

void ModelConfig::validate() const {
  for (int v : {pillar_channels, stage3_channels, stage4_channels, film_hidden, head_channels, max_points_per_pillar}) {
    if (v < 1) throw ArgumentError("ModelConfig: all sizes must be >= 1");
  }
}

ModelParams::ModelParams(const ModelConfig& cfg)
    : pillar(kPointFeatures, static_cast<std::size_t>(cfg.pillar_channels)),
      stage3(3, static_cast<std::size_t>(cfg.pillar_channels), static_cast<std::size_t>(cfg.stage3_channels)),
      stage4(3, static_cast<std::size_t>(cfg.stage3_channels), static_cast<std::size_t>(cfg.stage4_channels)),
      film3(kEmbeddingDim, static_cast<std::size_t>(cfg.film_hidden), static_cast<std::size_t>(cfg.stage3_channels)),
      film4(kEmbeddingDim, static_cast<std::size_t>(cfg.film_hidden), static_cast<std::size_t>(cfg.stage4_channels)),
      head(3, static_cast<std::size_t>(cfg.stage3_channels + cfg.stage4_channels),
           static_cast<std::size_t>(cfg.head_channels)),
      out(1, static_cast<std::size_t>(cfg.head_channels), 1),
      max_points_per_pillar(cfg.max_points_per_pillar) {
  cfg.validate();
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  visit(*this, [&](const char* name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  visit(*this, [&](const char* name, const Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += t->size();
  return n;
}

ModelConfig ModelParams::config() const {
  ModelConfig c;
  c.pillar_channels = static_cast<int>(pillar.out_dim());
  c.stage3_channels = static_cast<int>(stage3.out_channels());
  c.stage4_channels = static_cast<int>(stage4.out_channels());
  c.film_hidden = static_cast<int>(film3.hidden.out_dim());
  c.head_channels = static_cast<int>(head.out_channels());
  c.max_points_per_pillar = max_points_per_pillar;
  return c;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& [name, t] : z.named_tensors()) t->fill(0.0);
  return z;
}

void ModelParams::validate() const {
  const ModelConfig c = config();
  c.validate();
  const ModelParams expected(c);
  const auto mine = named_tensors();
  const auto want = expected.named_tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].second->shape != want[i].second->shape) {
      throw ArgumentError("ModelParams: tensor '" + mine[i].first + "' has inconsistent shape");
    }
    for (double v : mine[i].second->data) {
      if (!std::isfinite(v)) throw NumericError("ModelParams: tensor '" + mine[i].first + "' is not finite");
    }
  }
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  std::uint64_t state = seed;
  for (auto& [name, t] : p.named_tensors()) {
    if (t->shape.size() < 2) continue;  // biases stay zero
    std::size_t fan_in = 1;
    for (std::size_t d = 0; d + 1 < t->shape.size(); ++d) fan_in *= t->shape[d];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t->data) {
      const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      v = (2.0 * u - 1.0) * bound;
    }
  }
  return p;
}

DenseCostmap forward(const ModelParams& params, const PointCloud& cloud, const Image& image, const GridSpec& grid,
                     ForwardOptions opts) {
  return run_forward(params, cloud, image, grid, opts.use_film).output;
}

double huber_loss(const DenseCostmap& pred, const DenseCostmap& target, double delta) {
  check_same_grid(pred, target, "huber_loss");
  if (!(delta > 0.0)) throw ArgumentError("huber_loss: delta must be positive");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < pred.values.size(); ++k) {
    if (!target.valid[k]) continue;
    const double e = std::abs(pred.values[k] - target.values[k]);
    sum += e < delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
    ++n;
  }
  if (n == 0) throw ArgumentError("huber_loss: target has no valid cells");
  return sum / static_cast<double>(n);
}

double smoothness_loss(const DenseCostmap& pred, double lambda) {
  const int H = pred.grid.rows, W = pred.grid.cols;
  double vertical = 0.0, horizontal = 0.0;
  if (H >= 2) {
    for (int i = 0; i + 1 < H; ++i) {
      for (int j = 0; j < W; ++j) vertical += std::abs(pred.at(i + 1, j) - pred.at(i, j));
    }
    vertical /= (H - 1.0) * W;
  }
  if (W >= 2) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j + 1 < W; ++j) horizontal += std::abs(pred.at(i, j + 1) - pred.at(i, j));
    }
    horizontal /= H * (W - 1.0);
  }
  return lambda * (vertical + horizontal);
}

LossAndGrads loss_and_grads(const ModelParams& params, std::span<const Sample> batch, const LossConfig& cfg) {
  if (batch.empty()) throw ArgumentError("loss_and_grads: empty batch");
  LossAndGrads out;
  out.grads = params.zeros_like();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> huber, smooth, total;
  for (const Sample& s : batch) {
    const Trace t = run_forward(params, s.cloud, s.image, s.target.grid, s.use_film);
    const double h = huber_loss(t.output, s.target, cfg.huber_delta);
    const double sm = smoothness_loss(t.output, cfg.smooth_lambda);
    huber.push_back(h);
    smooth.push_back(sm);
    total.push_back(h + sm);
    std::vector<double> d_out = huber_grad(t.output, s.target, cfg.huber_delta);
    add_smoothness_grad(t.output, cfg.smooth_lambda, d_out);
    for (double& v : d_out) v *= inv_b;
    run_backward(params, t, d_out, out.grads);
  }
  out.loss = {ordered_sum(huber) * inv_b, ordered_sum(smooth) * inv_b, ordered_sum(total) * inv_b};
  return out;
}

LossBreakdown batch_loss(const ModelParams& params, std::span<const Sample> batch, const LossConfig& cfg) {
  if (batch.empty()) throw ArgumentError("batch_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> huber, smooth, total;
  for (const Sample& s : batch) {
    const DenseCostmap pred =
        forward(params, s.cloud, s.image, s.target.grid, ForwardOptions{s.use_film});
    const double h = huber_loss(pred, s.target, cfg.huber_delta);
    const double sm = smoothness_loss(pred, cfg.smooth_lambda);
    huber.push_back(h);
    smooth.push_back(sm);
    total.push_back(h + sm);
  }
  return {ordered_sum(huber) * inv_b, ordered_sum(smooth) * inv_b, ordered_sum(total) * inv_b};
}

}  // namespace marscost
