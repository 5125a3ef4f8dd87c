#include "han/attention.hpp"

#include <algorithm>
#include <cmath>

#include "han/error.hpp"
#include "han/ops.hpp"

namespace han {

void AttentionConfig::validate() const {
  if (d_model < 1) throw ConfigError("d_model must be at least 1");
  if (n_heads < 1) throw ConfigError("heads must be at least 1");
  if (d_head < 1) throw ConfigError("d_head must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout must lie in [0, 1), got " + std::to_string(dropout_rate));
}

std::size_t attention_parameter_count(const AttentionConfig& config) {
  const std::size_t inner = config.inner_width();
  return 3 * inner * config.d_model + config.d_model * inner + config.d_model;
}

namespace {

template <typename Real>
Tensor<Real> uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::vector<Real> values(rows * cols);
  for (Real& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor<Real>({rows, cols}, std::move(values), true);
}

}  // namespace

template <typename Real>
AttentionParams<Real> AttentionParams<Real>::initialize(const AttentionConfig& config, Rng& rng) {
  config.validate();
  const std::size_t inner = config.inner_width();
  AttentionParams p;
  p.wk = uniform_matrix<Real>(inner, config.d_model, rng);
  p.wq = uniform_matrix<Real>(inner, config.d_model, rng);
  p.wv = uniform_matrix<Real>(inner, config.d_model, rng);
  p.wa = uniform_matrix<Real>(config.d_model, inner, rng);
  p.ba = Tensor<Real>::zeros({config.d_model}, true);
  return p;
}

template <typename Real>
std::size_t AttentionParams<Real>::parameter_count() const {
  return wk.size() + wq.size() + wv.size() + wa.size() + ba.size();
}

template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>>> AttentionParams<Real>::named(
    const std::string& prefix) const {
  return {{prefix + ".wk", wk},
          {prefix + ".wq", wq},
          {prefix + ".wv", wv},
          {prefix + ".wa", wa},
          {prefix + ".ba", ba}};
}

std::vector<double> positional_embedding(std::size_t position, std::size_t d_model) {
  std::vector<double> pe(d_model);
  const double pos = static_cast<double>(position);
  for (std::size_t c = 0; c < d_model; ++c) {
    const std::size_t pair = c / 2;
    const double angle =
        pos / std::pow(10000.0, static_cast<double>(2 * pair) / static_cast<double>(d_model));
    pe[c] = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return pe;
}

PositionEmbeddingTable::PositionEmbeddingTable(std::size_t max_positions, std::size_t d_model)
    : max_positions_(max_positions), d_model_(d_model) {
  values_.reserve(max_positions * d_model);
  for (std::size_t p = 0; p < max_positions; ++p) {
    const auto row = positional_embedding(p, d_model);
    values_.insert(values_.end(), row.begin(), row.end());
  }
}

std::span<const double> PositionEmbeddingTable::row(std::size_t position) const {
  if (position >= max_positions_)
    throw UsageError("position " + std::to_string(position) + " beyond table of " +
                     std::to_string(max_positions_));
  return std::span<const double>(values_).subspan(position * d_model_, d_model_);
}

template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                  const Tensor<Real>& v, std::span<const std::size_t> segments,
                                  std::size_t n_heads, AttentionCapture* capture) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape())
    throw ShapeError("multi_head_attention: q/k/v shapes differ: " + to_string(q.shape()) + ", " +
                     to_string(k.shape()) + ", " + to_string(v.shape()));
  const std::size_t rows = q.dim(0), width = q.dim(1);
  if (n_heads == 0 || width % n_heads != 0)
    throw ShapeError("multi_head_attention: width " + std::to_string(width) +
                     " not divisible into " + std::to_string(n_heads) + " heads");
  if (segments.empty()) throw EmptyInputError("attention over zero tokens");
  std::size_t covered = 0;
  for (std::size_t n : segments) {
    if (n == 0) throw EmptyInputError("attention over zero tokens");
    covered += n;
  }
  if (covered != rows)
    throw ShapeError("multi_head_attention: segments cover " + std::to_string(covered) +
                     " of " + std::to_string(rows) + " rows");

  const std::size_t dh = width / n_heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const Real* pq = q.data().data();
  const Real* pk = k.data().data();
  const Real* pv = v.data().data();

  // weights[segment] holds heads x n x n
  std::vector<std::vector<Real>> weights(segments.size());
  std::vector<Real> out(rows * width, Real(0));
  std::vector<Real> logits;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const std::size_t n = segments[s];
    auto& w = weights[s];
    w.assign(n_heads * n * n, Real(0));
    logits.resize(n);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t col = h * dh;
      for (std::size_t i = 0; i < n; ++i) {
        const Real* qi = pq + (offset + i) * width + col;
        Real peak = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const Real* kj = pk + (offset + j) * width + col;
          Real dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          logits[j] = dot * scale;
          peak = j == 0 ? logits[j] : std::max(peak, logits[j]);
        }
        Real total = 0;
        Real* lam = w.data() + (h * n + i) * n;
        for (std::size_t j = 0; j < n; ++j) {
          lam[j] = std::exp(logits[j] - peak);
          total += lam[j];
        }
        Real* oi = out.data() + (offset + i) * width + col;
        for (std::size_t j = 0; j < n; ++j) {
          lam[j] /= total;
          const Real* vj = pv + (offset + j) * width + col;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += lam[j] * vj[c];
        }
      }
    }
    offset += n;
  }

  if (capture) {
    capture->n_heads = n_heads;
    capture->segments.clear();
    capture->segments.reserve(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const std::size_t n = segments[s];
      std::vector<DenseMatrix> heads(n_heads, DenseMatrix(n, n));
      for (std::size_t h = 0; h < n_heads; ++h)
        for (std::size_t e = 0; e < n * n; ++e)
          heads[h].values[e] = static_cast<double>(weights[s][h * n * n + e]);
      capture->segments.push_back(std::move(heads));
    }
  }

  Tensor<Real> result({rows, width}, std::move(out));
  if (detail::should_record<Real>({&q, &k, &v})) {
    std::vector<std::size_t> sizes(segments.begin(), segments.end());
    detail::record<Real>("multi_head_attention", result,
                         [q, k, v, result, sizes = std::move(sizes), weights = std::move(weights),
                          n_heads, dh, width, scale]() mutable {
      const Real* g = result.grad().data();
      const Real* pq = q.data().data();
      const Real* pk = k.data().data();
      const Real* pv = v.data().data();
      // accumulate locally; inputs that do not need grads are simply ignored
      std::vector<Real> gq(q.size(), Real(0)), gk(k.size(), Real(0)), gv(v.size(), Real(0));
      std::vector<Real> dlam, dscore;
      std::size_t offset = 0;
      for (std::size_t s = 0; s < sizes.size(); ++s) {
        const std::size_t n = sizes[s];
        dlam.resize(n);
        dscore.resize(n);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const std::size_t col = h * dh;
          for (std::size_t i = 0; i < n; ++i) {
            const Real* lam = weights[s].data() + (h * n + i) * n;
            const Real* gi = g + (offset + i) * width + col;
            Real weighted = 0;
            for (std::size_t j = 0; j < n; ++j) {
              const Real* vj = pv + (offset + j) * width + col;
              Real* gvj = gv.data() + (offset + j) * width + col;
              Real dot = 0;
              for (std::size_t c = 0; c < dh; ++c) {
                dot += gi[c] * vj[c];
                gvj[c] += lam[j] * gi[c];
              }
              dlam[j] = dot;
              weighted += lam[j] * dot;
            }
            const Real* qi = pq + (offset + i) * width + col;
            Real* gqi = gq.data() + (offset + i) * width + col;
            for (std::size_t j = 0; j < n; ++j) {
              const Real ds = lam[j] * (dlam[j] - weighted) * scale;
              const Real* kj = pk + (offset + j) * width + col;
              Real* gkj = gk.data() + (offset + j) * width + col;
              for (std::size_t c = 0; c < dh; ++c) {
                gqi[c] += ds * kj[c];
                gkj[c] += ds * qi[c];
              }
            }
          }
        }
        offset += n;
      }
      auto flush = [](const Tensor<Real>& t, const std::vector<Real>& local) {
        if (!t.requires_grad()) return;
        auto acc = t.grad_accumulator();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += local[i];
      };
      flush(q, gq);
      flush(k, gk);
      flush(v, gv);
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> attend(const Tensor<Real>& tokens, std::span<const std::size_t> segments,
                    const AttentionParams<Real>& params, const AttentionConfig& config,
                    bool training, Rng& rng, AttentionCapture* capture) {
  if (tokens.rank() != 2 || tokens.dim(1) != config.d_model)
    throw ShapeError("attend: tokens " + to_string(tokens.shape()) + " do not have width d_model=" +
                     std::to_string(config.d_model));
  const Tensor<Real> k = linear(tokens, params.wk);
  const Tensor<Real> q = linear(tokens, params.wq);
  const Tensor<Real> v = linear(tokens, params.wv);
  const Tensor<Real> heads = multi_head_attention(q, k, v, segments, config.n_heads, capture);
  const Tensor<Real> projected = relu(linear(heads, params.wa, params.ba));
  const Tensor<Real> branch = dropout(layer_norm(projected, 1), config.dropout_rate, training, rng);
  return segment_mean(add(tokens, branch), segments);
}

template <typename Real>
Tensor<Real> attend(const Tensor<Real>& tokens, const AttentionParams<Real>& params,
                    const AttentionConfig& config, bool training, Rng& rng) {
  if (tokens.rank() != 2) throw ShapeError("attend: tokens must be N x d_model");
  const std::size_t n = tokens.dim(0);
  const std::size_t segments[] = {n};
  return reshape(attend(tokens, segments, params, config, training, rng), {config.d_model});
}

DenseMatrix head_average(std::span<const DenseMatrix> heads) {
  if (heads.empty()) throw UsageError("head_average: no heads");
  DenseMatrix avg(heads[0].rows, heads[0].cols);
  for (const auto& h : heads)
    for (std::size_t e = 0; e < avg.values.size(); ++e) avg.values[e] += h.values[e];
  for (double& x : avg.values) x /= static_cast<double>(heads.size());
  return avg;
}

std::vector<double> column_sums(const DenseMatrix& m) {
  std::vector<double> sums(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) sums[c] += m(r, c);
  return sums;
}

template <typename Real>
AttentionWeights attention_weights(const Tensor<Real>& tokens, const AttentionParams<Real>& params,
                                   const AttentionConfig& config) {
  if (tokens.rank() != 2) throw ShapeError("attention_weights: tokens must be N x d_model");
  Rng unused(0);
  AttentionCapture capture;
  const std::size_t segments[] = {tokens.dim(0)};
  attend(tokens, segments, params, config, false, unused, &capture);
  AttentionWeights out;
  out.per_head = std::move(capture.segments.front());
  out.head_mean = head_average(out.per_head);
  return out;
}

#define HAN_INSTANTIATE(Real)                                                                    \
  template struct AttentionParams<Real>;                                                         \
  template Tensor<Real> multi_head_attention(const Tensor<Real>&, const Tensor<Real>&,           \
                                             const Tensor<Real>&, std::span<const std::size_t>,  \
                                             std::size_t, AttentionCapture*);                    \
  template Tensor<Real> attend(const Tensor<Real>&, std::span<const std::size_t>,                \
                               const AttentionParams<Real>&, const AttentionConfig&, bool, Rng&, \
                               AttentionCapture*);                                               \
  template Tensor<Real> attend(const Tensor<Real>&, const AttentionParams<Real>&,                \
                               const AttentionConfig&, bool, Rng&);                              \
  template AttentionWeights attention_weights(const Tensor<Real>&, const AttentionParams<Real>&, \
                                              const AttentionConfig&);

HAN_INSTANTIATE(float)
HAN_INSTANTIATE(double)

#undef HAN_INSTANTIATE

}  // namespace han
