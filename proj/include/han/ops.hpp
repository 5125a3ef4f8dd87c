#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "han/rng.hpp"
#include "han/tensor.hpp"

namespace han {

inline constexpr double kLayerNormEps = 1e-5;

// a[m x k] * b[k x n]
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

// Row-wise affine map x[m x in] * w[out x in]^T + bias[out]. bias may be
// undefined.
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias = {});

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor);

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x);

// Max-subtracted softmax along axis.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis);

// (x - mean) / sqrt(var + eps) along axis, population variance, no affine.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, std::size_t axis, double eps = kLayerNormEps);

// Reduces axis; the result drops that dimension.
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x, std::size_t axis);

// Sum of all elements as a scalar.
template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);

// Inverted dropout. Identity (same tensor) when !training or rate == 0.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, bool training, Rng& rng);

// Mean over consecutive row segments of x[m x d]; segment sizes sum to m.
template <typename Real>
Tensor<Real> segment_mean(const Tensor<Real>& x, std::span<const std::size_t> segments);

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows);

template <typename Real>
Tensor<Real> concat_rows(std::span<const Tensor<Real>> parts);

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);

}  // namespace han
