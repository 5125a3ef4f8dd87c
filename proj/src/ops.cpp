#include "han/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "han/error.hpp"

namespace han {

namespace {

template <typename Real>
void require_rank(const Tensor<Real>& t, std::size_t rank, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
}

// outer x length x inner view of a tensor around one axis
struct AxisView {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

template <typename Real>
AxisView axis_view(const Tensor<Real>& x, std::size_t axis, const char* op) {
  if (axis >= x.rank())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     to_string(x.shape()));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= x.dim(i);
  v.length = x.dim(axis);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) v.inner *= x.dim(i);
  return v;
}

template <typename Real>
inline void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions disagree: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  std::vector<Real> out(m * n, Real(0));
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) axpy(n, pa[i * k + p], pb + p * n, out.data() + i * n);
  Tensor<Real> result({m, n}, std::move(out));
  if (detail::should_record<Real>({&a, &b})) {
    detail::record<Real>("matmul", result, [a, b, result, m, k, n]() mutable {
      const Real* g = result.grad().data();
      if (a.requires_grad()) {
        Real* ga = a.grad_accumulator().data();
        const Real* pb = b.data().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            Real acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        Real* gb = b.grad_accumulator().data();
        const Real* pa = a.data().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) axpy(n, pa[i * k + p], g + i * n, gb + p * n);
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t m = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in)
    throw ShapeError("linear: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(w.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim))
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(w.shape()));

  // transpose w so the inner loop streams contiguous rows
  std::vector<Real> wt(in * out_dim);
  const Real* pw = w.data().data();
  for (std::size_t o = 0; o < out_dim; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out_dim + o] = pw[o * in + i];

  std::vector<Real> out(m * out_dim);
  const Real* px = x.data().data();
  for (std::size_t r = 0; r < m; ++r) {
    Real* row = out.data() + r * out_dim;
    if (bias.defined())
      std::copy(bias.data().begin(), bias.data().end(), row);
    else
      std::fill(row, row + out_dim, Real(0));
    for (std::size_t i = 0; i < in; ++i) axpy(out_dim, px[r * in + i], wt.data() + i * out_dim, row);
  }
  Tensor<Real> result({m, out_dim}, std::move(out));
  if (detail::should_record<Real>({&x, &w, &bias})) {
    detail::record<Real>("linear", result, [x, w, bias, result, m, in, out_dim]() mutable {
      const Real* g = result.grad().data();
      if (x.requires_grad()) {
        Real* gx = x.grad_accumulator().data();
        const Real* pw = w.data().data();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t o = 0; o < out_dim; ++o)
            axpy(in, g[r * out_dim + o], pw + o * in, gx + r * in);
      }
      if (w.requires_grad()) {
        Real* gw = w.grad_accumulator().data();
        const Real* px = x.data().data();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t o = 0; o < out_dim; ++o)
            axpy(in, g[r * out_dim + o], px + r * in, gw + o * in);
      }
      if (bias.defined() && bias.requires_grad()) {
        Real* gb = bias.grad_accumulator().data();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor<Real> result(a.shape(), std::move(out));
  if (detail::should_record<Real>({&a, &b})) {
    detail::record<Real>("add", result, [a, b, result]() mutable {
      const auto g = result.grad();
      for (const Tensor<Real>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto acc = t->grad_accumulator();
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  Tensor<Real> result(x.shape(), std::move(out));
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("scale", result, [x, result, factor]() mutable {
      const auto g = result.grad();
      auto acc = x.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * factor;
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > Real(0) ? x[i] : Real(0);
  Tensor<Real> result(x.shape(), std::move(out));
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("relu", result, [x, result]() mutable {
      const auto g = result.grad();
      auto acc = x.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > Real(0)) acc[i] += g[i];
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  const AxisView v = axis_view(x, axis, "softmax");
  std::vector<Real> out(x.size());
  const Real* px = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      Real peak = px[base];
      for (std::size_t l = 1; l < v.length; ++l) peak = std::max(peak, px[base + l * v.inner]);
      Real total = 0;
      for (std::size_t l = 0; l < v.length; ++l) {
        const Real e = std::exp(px[base + l * v.inner] - peak);
        out[base + l * v.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < v.length; ++l) out[base + l * v.inner] /= total;
    }
  Tensor<Real> result(x.shape(), std::move(out));
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("softmax", result, [x, result, v]() mutable {
      const Real* g = result.grad().data();
      const Real* y = result.data().data();
      Real* acc = x.grad_accumulator().data();
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t in = 0; in < v.inner; ++in) {
          const std::size_t base = o * v.length * v.inner + in;
          Real dot = 0;
          for (std::size_t l = 0; l < v.length; ++l) {
            const std::size_t i = base + l * v.inner;
            dot += g[i] * y[i];
          }
          for (std::size_t l = 0; l < v.length; ++l) {
            const std::size_t i = base + l * v.inner;
            acc[i] += y[i] * (g[i] - dot);
          }
        }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, std::size_t axis, double eps) {
  const AxisView v = axis_view(x, axis, "layer_norm");
  std::vector<Real> out(x.size());
  std::vector<Real> inv_std(v.outer * v.inner);
  const Real* px = x.data().data();
  const Real n = static_cast<Real>(v.length);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      Real mu = 0;
      for (std::size_t l = 0; l < v.length; ++l) mu += px[base + l * v.inner];
      mu /= n;
      Real var = 0;
      for (std::size_t l = 0; l < v.length; ++l) {
        const Real d = px[base + l * v.inner] - mu;
        var += d * d;
      }
      var /= n;
      const Real s = Real(1) / std::sqrt(var + static_cast<Real>(eps));
      inv_std[o * v.inner + in] = s;
      for (std::size_t l = 0; l < v.length; ++l)
        out[base + l * v.inner] = (px[base + l * v.inner] - mu) * s;
    }
  Tensor<Real> result(x.shape(), std::move(out));
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("layer_norm", result,
                         [x, result, v, n, inv_std = std::move(inv_std)]() mutable {
      const Real* g = result.grad().data();
      const Real* y = result.data().data();
      Real* acc = x.grad_accumulator().data();
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t in = 0; in < v.inner; ++in) {
          const std::size_t base = o * v.length * v.inner + in;
          Real g_mean = 0, gy_mean = 0;
          for (std::size_t l = 0; l < v.length; ++l) {
            const std::size_t i = base + l * v.inner;
            g_mean += g[i];
            gy_mean += g[i] * y[i];
          }
          g_mean /= n;
          gy_mean /= n;
          const Real s = inv_std[o * v.inner + in];
          for (std::size_t l = 0; l < v.length; ++l) {
            const std::size_t i = base + l * v.inner;
            acc[i] += s * (g[i] - g_mean - y[i] * gy_mean);
          }
        }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x, std::size_t axis) {
  const AxisView v = axis_view(x, axis, "mean");
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<Real> out(v.outer * v.inner, Real(0));
  const Real* px = x.data().data();
  const Real n = static_cast<Real>(v.length);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.length; ++l)
      for (std::size_t in = 0; in < v.inner; ++in)
        out[o * v.inner + in] += px[(o * v.length + l) * v.inner + in];
  for (Real& value : out) value /= n;
  Tensor<Real> result(std::move(shape), std::move(out));
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("mean", result, [x, result, v, n]() mutable {
      const Real* g = result.grad().data();
      Real* acc = x.grad_accumulator().data();
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t l = 0; l < v.length; ++l)
          for (std::size_t in = 0; in < v.inner; ++in)
            acc[(o * v.length + l) * v.inner + in] += g[o * v.inner + in] / n;
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (Real value : x.data()) total += value;
  Tensor<Real> result = Tensor<Real>::scalar(total);
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("sum", result, [x, result]() mutable {
      const Real g = result.grad()[0];
      for (Real& a : x.grad_accumulator()) a += g;
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
  std::vector<Real> mask(x.size());
  for (Real& m : mask) m = rng.uniform() < rate ? Real(0) : keep_scale;
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  Tensor<Real> result(x.shape(), std::move(out));
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("dropout", result, [x, result, mask = std::move(mask)]() mutable {
      const auto g = result.grad();
      auto acc = x.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * mask[i];
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> segment_mean(const Tensor<Real>& x, std::span<const std::size_t> segments) {
  require_rank(x, 2, "segment_mean");
  const std::size_t d = x.dim(1);
  std::size_t total = 0;
  for (std::size_t s : segments) {
    if (s == 0) throw EmptyInputError("segment_mean: empty segment");
    total += s;
  }
  if (segments.empty()) throw EmptyInputError("segment_mean: no segments");
  if (total != x.dim(0))
    throw ShapeError("segment_mean: segments cover " + std::to_string(total) + " rows of " +
                     to_string(x.shape()));
  std::vector<Real> out(segments.size() * d, Real(0));
  const Real* px = x.data().data();
  std::size_t row = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    Real* dst = out.data() + s * d;
    for (std::size_t r = 0; r < segments[s]; ++r, ++row) axpy(d, Real(1), px + row * d, dst);
    const Real inv = Real(1) / static_cast<Real>(segments[s]);
    for (std::size_t c = 0; c < d; ++c) dst[c] *= inv;
  }
  Tensor<Real> result({segments.size(), d}, std::move(out));
  if (detail::should_record<Real>({&x})) {
    std::vector<std::size_t> sizes(segments.begin(), segments.end());
    detail::record<Real>("segment_mean", result, [x, result, d, sizes = std::move(sizes)]() mutable {
      const Real* g = result.grad().data();
      Real* acc = x.grad_accumulator().data();
      std::size_t row = 0;
      for (std::size_t s = 0; s < sizes.size(); ++s) {
        const Real inv = Real(1) / static_cast<Real>(sizes[s]);
        for (std::size_t r = 0; r < sizes[s]; ++r, ++row) axpy(d, inv, g + s * d, acc + row * d);
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t d = x.dim(1);
  if (rows.empty()) throw EmptyInputError("gather_rows: no rows requested");
  std::vector<Real> out(rows.size() * d);
  const Real* px = x.data().data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.dim(0))
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                       to_string(x.shape()));
    std::copy(px + rows[r] * d, px + (rows[r] + 1) * d, out.data() + r * d);
  }
  Tensor<Real> result({rows.size(), d}, std::move(out));
  if (detail::should_record<Real>({&x})) {
    std::vector<std::size_t> index(rows.begin(), rows.end());
    detail::record<Real>("gather_rows", result, [x, result, d, index = std::move(index)]() mutable {
      const Real* g = result.grad().data();
      Real* acc = x.grad_accumulator().data();
      for (std::size_t r = 0; r < index.size(); ++r) axpy(d, Real(1), g + r * d, acc + index[r] * d);
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> concat_rows(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw EmptyInputError("concat_rows: nothing to concatenate");
  for (const auto& p : parts) require_rank(p, 2, "concat_rows");
  const std::size_t d = parts[0].dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.dim(1) != d)
      throw ShapeError("concat_rows: widths differ: " + to_string(parts[0].shape()) + " vs " +
                       to_string(p.shape()));
    rows += p.dim(0);
  }
  std::vector<Real> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor<Real> result({rows, d}, std::move(out));
  if (detail::should_record<Real>(parts)) {
    std::vector<Tensor<Real>> inputs(parts.begin(), parts.end());
    detail::record<Real>("concat_rows", result, [inputs, result]() mutable {
      const Real* g = result.grad().data();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) {
          auto acc = p.grad_accumulator();
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (element_count(shape) != x.size())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  Tensor<Real> result(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()));
  if (detail::should_record<Real>({&x})) {
    detail::record<Real>("reshape", result, [x, result]() mutable {
      const auto g = result.grad();
      auto acc = x.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    });
  }
  return result;
}

#define HAN_INSTANTIATE(Real)                                                               \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                   \
  template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&); \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                      \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                   \
  template Tensor<Real> relu(const Tensor<Real>&);                                          \
  template Tensor<Real> softmax(const Tensor<Real>&, std::size_t);                          \
  template Tensor<Real> layer_norm(const Tensor<Real>&, std::size_t, double);               \
  template Tensor<Real> mean(const Tensor<Real>&, std::size_t);                             \
  template Tensor<Real> sum(const Tensor<Real>&);                                           \
  template Tensor<Real> dropout(const Tensor<Real>&, double, bool, Rng&);                   \
  template Tensor<Real> segment_mean(const Tensor<Real>&, std::span<const std::size_t>);    \
  template Tensor<Real> gather_rows(const Tensor<Real>&, std::span<const std::size_t>);     \
  template Tensor<Real> concat_rows(std::span<const Tensor<Real>>);                         \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);

HAN_INSTANTIATE(float)
HAN_INSTANTIATE(double)

#undef HAN_INSTANTIATE

}  // namespace han
