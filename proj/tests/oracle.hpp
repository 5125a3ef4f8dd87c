#pragma once

// Straight-line scalar reference implementations on nested vectors. They
// share nothing with the tensor code beyond reading parameter values.

#include <cmath>
#include <vector>

#include "han/model.hpp"

namespace han::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const Tensor<double>& t) {
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline Vec to_vec(const Tensor<double>& t) { return Vec(t.data().begin(), t.data().end()); }

struct Block {
  Mat wk, wq, wv, wa;
  Vec ba;
  std::size_t heads = 1;
  std::size_t d_head = 1;
};

inline Block block_from(const AttentionParams<double>& p, const AttentionConfig& c) {
  return {to_mat(p.wk), to_mat(p.wq), to_mat(p.wv), to_mat(p.wa), to_vec(p.ba), c.n_heads, c.d_head};
}

inline Vec mat_vec(const Mat& w, const Vec& x) {
  Vec y(w.size(), 0.0);
  for (std::size_t r = 0; r < w.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += w[r][c] * x[c];
  return y;
}

struct BlockResult {
  Vec pooled;
  std::vector<Mat> weights;  // [head][i][j]
};

inline BlockResult attend(const Mat& x, const Block& b) {
  const std::size_t n = x.size();
  const std::size_t d = x[0].size();
  Mat k(n), q(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    k[i] = mat_vec(b.wk, x[i]);
    q[i] = mat_vec(b.wq, x[i]);
    v[i] = mat_vec(b.wv, x[i]);
  }
  BlockResult out;
  Mat concat(n, Vec(b.heads * b.d_head, 0.0));
  for (std::size_t h = 0; h < b.heads; ++h) {
    const std::size_t o = h * b.d_head;
    Mat lambda(n, Vec(n));
    for (std::size_t i = 0; i < n; ++i) {
      Vec score(n);
      double peak = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < b.d_head; ++c) s += q[i][o + c] * k[j][o + c];
        score[j] = s / std::sqrt(static_cast<double>(b.d_head));
        if (score[j] > peak) peak = score[j];
      }
      double total = 0;
      for (std::size_t j = 0; j < n; ++j) total += std::exp(score[j] - peak);
      for (std::size_t j = 0; j < n; ++j) lambda[i][j] = std::exp(score[j] - peak) / total;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < b.d_head; ++c) concat[i][o + c] += lambda[i][j] * v[j][o + c];
    }
    out.weights.push_back(lambda);
  }
  out.pooled.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Vec a = mat_vec(b.wa, concat[i]);
    for (std::size_t c = 0; c < d; ++c) a[c] = std::max(0.0, a[c] + b.ba[c]);
    double mu = 0;
    for (double e : a) mu += e;
    mu /= static_cast<double>(d);
    double var = 0;
    for (double e : a) var += (e - mu) * (e - mu);
    var /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c)
      out.pooled[c] += (x[i][c] + (a[c] - mu) / std::sqrt(var + 1e-5)) / static_cast<double>(n);
  }
  return out;
}

inline Vec sinusoid(std::size_t pos, std::size_t d) {
  Vec pe(d);
  for (std::size_t k = 0; 2 * k < d; ++k) {
    const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * k / static_cast<double>(d));
    pe[2 * k] = std::sin(angle);
    if (2 * k + 1 < d) pe[2 * k + 1] = std::cos(angle);
  }
  return pe;
}

inline Vec plus(Vec a, const Vec& b, bool enabled = true) {
  if (enabled)
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

// Full hierarchy for one sequence already sampled to the model's frame count.
inline Vec logits(const HanModel<double>& model, const SkeletonSequence& seq) {
  const HanConfig& cfg = model.config();
  const std::size_t d = cfg.attention.d_model;
  const std::size_t T = cfg.frames;
  const Mat wj = to_mat(model.joint_weight());
  const Vec bj = to_vec(model.joint_bias());

  std::vector<Mat> part_feature(T, Mat(6));  // [t][part]
  Mat hand(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < 6; ++p) {
      const auto& joints = cfg.partition.part(p);
      Mat tokens;
      for (std::size_t s = 0; s < joints.size(); ++s) {
        Vec xyz{seq.at(t, joints[s], 0), seq.at(t, joints[s], 1), seq.at(t, joints[s], 2)};
        tokens.push_back(plus(plus(mat_vec(wj, xyz), bj), sinusoid(s + 1, d), cfg.pe.joint));
      }
      part_feature[t][p] = attend(tokens, block_from(model.j_att(p), cfg.attention)).pooled;
    }
    Mat tokens;
    for (std::size_t p = 0; p < 6; ++p)
      tokens.push_back(plus(part_feature[t][p], sinusoid(p + 1, d), cfg.pe.finger));
    hand[t] = attend(tokens, block_from(model.f_att(), cfg.attention)).pooled;
  }
  Mat streams;
  for (std::size_t s = 0; s < 7; ++s) {
    Mat tokens;
    for (std::size_t t = 0; t < T; ++t)
      tokens.push_back(plus(s < 6 ? part_feature[t][s] : hand[t], sinusoid(t + 1, d), cfg.pe.temporal));
    streams.push_back(attend(tokens, block_from(model.t_att(s), cfg.attention)).pooled);
  }
  Mat tokens;
  for (std::size_t s = 0; s < 7; ++s) tokens.push_back(plus(streams[s], sinusoid(s + 1, d), cfg.pe.fusion));
  const Vec fused = attend(tokens, block_from(model.fusion_att(), cfg.attention)).pooled;
  return plus(mat_vec(to_mat(model.classifier_weight()), fused), to_vec(model.classifier_bias()));
}

}  // namespace han::oracle
