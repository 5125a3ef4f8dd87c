#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "han/rng.hpp"
#include "han/tensor.hpp"

namespace han {

struct AttentionConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 8;
  std::size_t d_head = 32;
  double dropout_rate = 0.1;

  std::size_t inner_width() const { return n_heads * d_head; }
  void validate() const;
};

// 3 * (heads * d_head * d_model) + d_model * (heads * d_head) + d_model
std::size_t attention_parameter_count(const AttentionConfig& config);

// Learnable matrices of one attention block. Wk, Wq, Wv map d_model to the
// concatenated head width; Wa and ba project the concatenated heads back.
template <typename Real>
struct AttentionParams {
  Tensor<Real> wk;  // (heads*d_head) x d_model
  Tensor<Real> wq;
  Tensor<Real> wv;
  Tensor<Real> wa;  // d_model x (heads*d_head)
  Tensor<Real> ba;  // d_model

  // Weights uniform in +-1/sqrt(fan_in), bias zero.
  static AttentionParams initialize(const AttentionConfig& config, Rng& rng);

  std::size_t parameter_count() const;
  std::vector<std::pair<std::string, Tensor<Real>>> named(const std::string& prefix) const;
};

// Sinusoidal embedding: channel 2k is sin(pos / 10000^(2k/d_model)),
// channel 2k+1 the matching cosine.
std::vector<double> positional_embedding(std::size_t position, std::size_t d_model);

class PositionEmbeddingTable {
 public:
  PositionEmbeddingTable(std::size_t max_positions, std::size_t d_model);

  std::size_t max_positions() const { return max_positions_; }
  std::size_t d_model() const { return d_model_; }
  std::span<const double> row(std::size_t position) const;

 private:
  std::size_t max_positions_;
  std::size_t d_model_;
  std::vector<double> values_;
};

// Square matrix used for attention exports.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Attention weights recorded during a forward pass, one entry per segment.
struct AttentionCapture {
  std::size_t n_heads = 0;
  std::vector<std::vector<DenseMatrix>> segments;  // [segment][head]
};

// Scaled dot-product attention within each row segment and head of the
// projected q/k/v matrices (rows x heads*d_head). Rows of the result are the
// per-head weighted value sums, concatenated by head.
template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                  const Tensor<Real>& v, std::span<const std::size_t> segments,
                                  std::size_t n_heads, AttentionCapture* capture = nullptr);

// The attention block over several independent token groups at once.
// tokens is (sum of segments) x d_model and already carries position
// embeddings. Returns one pooled d_model row per segment.
template <typename Real>
Tensor<Real> attend(const Tensor<Real>& tokens, std::span<const std::size_t> segments,
                    const AttentionParams<Real>& params, const AttentionConfig& config,
                    bool training, Rng& rng, AttentionCapture* capture = nullptr);

// Single group of N tokens (N x d_model) to one d_model vector.
template <typename Real>
Tensor<Real> attend(const Tensor<Real>& tokens, const AttentionParams<Real>& params,
                    const AttentionConfig& config, bool training, Rng& rng);

struct AttentionWeights {
  std::vector<DenseMatrix> per_head;
  DenseMatrix head_mean;
};

DenseMatrix head_average(std::span<const DenseMatrix> heads);
std::vector<double> column_sums(const DenseMatrix& m);

// Eval-mode attention weights for a single token group.
template <typename Real>
AttentionWeights attention_weights(const Tensor<Real>& tokens, const AttentionParams<Real>& params,
                                   const AttentionConfig& config);

}  // namespace han
