#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "han/attention.hpp"
#include "han/error.hpp"
#include "han/ops.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace han;
using han::testing::check_gradients;
using han::testing::random_tensor;

namespace {

AttentionConfig small_config(std::size_t d_model, std::size_t heads, std::size_t d_head) {
  AttentionConfig c;
  c.d_model = d_model;
  c.n_heads = heads;
  c.d_head = d_head;
  c.dropout_rate = 0.0;
  return c;
}

AttentionParams<double> hand_set_params() {
  AttentionParams<double> p;
  p.wk = Tensor<double>::matrix({{0.5, -0.3}, {0.2, 0.8}}, true);
  p.wq = Tensor<double>::matrix({{-0.7, 0.4}, {0.6, 0.1}}, true);
  p.wv = Tensor<double>::matrix({{0.9, -0.2}, {0.3, 0.5}}, true);
  p.wa = Tensor<double>::matrix({{1.1, -0.4}, {-0.6, 0.7}}, true);
  p.ba = Tensor<double>::vector({0.05, -0.1}, true);
  return p;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

TEST_CASE("attention config validation") {
  AttentionConfig c;
  CHECK_NOTHROW(c.validate());
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AttentionConfig{};
  c.n_heads = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("one block at defaults has 131,200 parameters") {
  AttentionConfig c;
  CHECK(attention_parameter_count(c) == 131200);
  Rng rng(1);
  const auto p = AttentionParams<float>::initialize(c, rng);
  CHECK(p.parameter_count() == 131200);
  CHECK(p.wk.shape() == Shape{256, 128});
  CHECK(p.wa.shape() == Shape{128, 256});
  for (float b : p.ba.data()) CHECK(b == 0.0f);
  const float bound = 1.0f / std::sqrt(128.0f);
  for (float w : p.wq.data()) CHECK(std::abs(w) <= bound);
}

TEST_CASE("positional embedding examples") {
  for (std::size_t d : {2u, 5u, 8u, 128u}) {
    const auto pe = positional_embedding(0, d);
    for (std::size_t c = 0; c < d; ++c) CHECK(pe[c] == (c % 2 == 0 ? 0.0 : 1.0));
  }
  CHECK(positional_embedding(1, 4)[0] == doctest::Approx(0.84147).epsilon(1e-5));
  CHECK(positional_embedding(3, 4)[3] == doctest::Approx(std::cos(3.0 / 100.0)).epsilon(1e-14));
  const PositionEmbeddingTable table(8, 128);
  for (std::size_t p = 0; p < 8; ++p)
    for (double v : table.row(p)) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("d_model=2 attend matches the scalar oracle") {
  const auto c = small_config(2, 1, 2);
  const auto p = hand_set_params();
  const auto x = Tensor<double>::matrix({{0.3, -1.2}, {0.8, 0.4}});
  Rng rng(0);
  const auto y = attend(x, p, c, false, rng);
  const auto expected = oracle::attend(oracle::to_mat(x), oracle::block_from(p, c));
  for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(y[i] - expected.pooled[i]) < 1e-10);
  const auto w = attention_weights(x, p, c);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(w.per_head[0](i, j) - expected.weights[0][i][j]) < 1e-10);
}

TEST_CASE("multi-head attend matches the scalar oracle on random inputs") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = small_config(6, 3, 2);
    auto p = AttentionParams<double>::initialize(c, rng);
    p.ba = random_tensor({6}, rng);
    const std::size_t n = 1 + rng.below(5);
    const auto x = random_tensor({n, 6}, rng, false);
    Rng unused(0);
    const auto y = attend(x, p, c, false, unused);
    const auto expected = oracle::attend(oracle::to_mat(x), oracle::block_from(p, c));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(y[i] - expected.pooled[i]) < 1e-10);
  }
}

TEST_CASE("N=1 gives weight 1 and output x plus the branch of its own value") {
  const auto c = small_config(2, 1, 2);
  const auto p = hand_set_params();
  const auto x = Tensor<double>::matrix({{0.7, -0.2}});
  const auto w = attention_weights(x, p, c);
  CHECK(w.per_head[0](0, 0) == 1.0);
  CHECK(w.head_mean(0, 0) == 1.0);
  Rng rng(0);
  const auto y = attend(x, p, c, false, rng);
  const auto v = linear(x, p.wv);
  const auto branch = layer_norm(relu(linear(v, p.wa, p.ba)), 1);
  for (std::size_t i = 0; i < 2; ++i) CHECK(y[i] == doctest::Approx(x[i] + branch[i]).epsilon(1e-14));
}

TEST_CASE("identical inputs give uniform attention") {
  const AttentionConfig c = small_config(8, 2, 4);
  Rng rng(4);
  const auto p = AttentionParams<double>::initialize(c, rng);
  const auto row = random_tensor({1, 8}, rng, false);
  const std::size_t rows[] = {0, 0, 0, 0};
  const auto x = gather_rows(row, rows);
  const auto w = attention_weights(x, p, c);
  for (const auto& h : w.per_head)
    for (double v : h.values) CHECK(std::abs(v - 0.25) < 1e-6);
  for (double v : w.head_mean.values) CHECK(std::abs(v - 0.25) < 1e-6);
}

TEST_CASE("head mean equals the mean of per-head matrices") {
  const AttentionConfig c = small_config(8, 4, 3);
  Rng rng(5);
  const auto p = AttentionParams<double>::initialize(c, rng);
  const auto x = random_tensor({5, 8}, rng, false, -3, 3);
  const auto w = attention_weights(x, p, c);
  REQUIRE(w.per_head.size() == 4);
  for (std::size_t e = 0; e < 25; ++e) {
    double total = 0;
    for (const auto& h : w.per_head) total += h.values[e];
    CHECK(std::abs(w.head_mean.values[e] - total / 4) < 1e-7);
  }
}

TEST_CASE("attention rows are stochastic for random inputs") {
  const AttentionConfig c = small_config(8, 2, 4);
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = AttentionParams<double>::initialize(c, rng);
    const std::size_t n = 1 + rng.below(8);
    const auto w = attention_weights(random_tensor({n, 8}, rng, false, -5, 5), p, c);
    for (const auto& h : w.per_head)
      for (std::size_t r = 0; r < n; ++r) {
        double total = 0;
        for (std::size_t j = 0; j < n; ++j) total += h(r, j);
        CHECK(std::abs(total - 1.0) < 1e-6);
      }
    const auto sums = column_sums(w.head_mean);
    CHECK(std::accumulate(sums.begin(), sums.end(), 0.0) == doctest::Approx(static_cast<double>(n)));
  }
}

TEST_CASE("pooled output is permutation invariant without position embeddings") {
  const AttentionConfig c = small_config(8, 2, 4);
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = AttentionParams<double>::initialize(c, rng);
    const std::size_t n = 2 + rng.below(6);
    const auto x = random_tensor({n, 8}, rng, false);
    const auto order = shuffled(n, rng);
    Rng unused(0);
    const auto a = attend(x, p, c, false, unused);
    const auto b = attend(gather_rows(x, order), p, c, false, unused);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);
  }
}

TEST_CASE("adding position embeddings makes the output order sensitive") {
  const AttentionConfig c = small_config(8, 2, 4);
  Rng rng(8);
  const PositionEmbeddingTable table(6, 8);
  int changed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = AttentionParams<double>::initialize(c, rng);
    const auto x = random_tensor({5, 8}, rng, false);
    const std::size_t reversed[] = {4, 3, 2, 1, 0};
    const auto y = gather_rows(x, reversed);
    auto with_pe = [&](const Tensor<double>& t) {
      std::vector<double> v(t.data().begin(), t.data().end());
      for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t ch = 0; ch < 8; ++ch) v[r * 8 + ch] += table.row(r + 1)[ch];
      return Tensor<double>({5, 8}, v);
    };
    Rng unused(0);
    const auto a = attend(with_pe(x), p, c, false, unused);
    const auto b = attend(with_pe(y), p, c, false, unused);
    double diff = 0;
    for (std::size_t i = 0; i < 8; ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    changed += diff > 1e-6;
  }
  CHECK(changed == 20);
}

TEST_CASE("eval-mode attend is bit-identical across calls") {
  const AttentionConfig c;
  Rng rng(9);
  const auto p = AttentionParams<float>::initialize(c, rng);
  std::vector<float> v(5 * 128);
  for (float& e : v) e = static_cast<float>(rng.uniform(-1, 1));
  const Tensor<float> x({5, 128}, v);
  Rng r1(1), r2(2);
  const auto a = attend(x, p, c, false, r1);
  const auto b = attend(x, p, c, false, r2);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("segmented attend equals separate single-group calls") {
  const AttentionConfig c = small_config(8, 2, 4);
  Rng rng(10);
  const auto p = AttentionParams<double>::initialize(c, rng);
  const auto x = random_tensor({7, 8}, rng, false);
  const std::size_t segs[] = {3, 1, 3};
  Rng unused(0);
  const auto pooled = attend(x, segs, p, c, false, unused);
  std::size_t start = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::size_t> rows(segs[s]);
    std::iota(rows.begin(), rows.end(), start);
    const auto single = attend(gather_rows(x, rows), p, c, false, unused);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(pooled.at(s, i) - single[i]) < 1e-12);
    start += segs[s];
  }
}

TEST_CASE("attend errors") {
  const AttentionConfig c = small_config(4, 1, 2);
  Rng rng(11);
  const auto p = AttentionParams<double>::initialize(c, rng);
  CHECK_THROWS_AS(attend(Tensor<double>::zeros({2, 3}), p, c, false, rng), ShapeError);
  const std::size_t empty_segment[] = {2, 0};
  CHECK_THROWS_AS(attend(Tensor<double>::zeros({2, 4}), empty_segment, p, c, false, rng),
                  EmptyInputError);
  const std::vector<DenseMatrix> none;
  CHECK_THROWS_AS(head_average(none), UsageError);
}

TEST_CASE("attend gradients match finite differences, dropout included") {
  AttentionConfig c = small_config(6, 2, 3);
  c.dropout_rate = 0.2;
  Rng rng(12);
  auto p = AttentionParams<double>::initialize(c, rng);
  p.ba = random_tensor({6}, rng);
  auto x = random_tensor({5, 6}, rng);
  const auto probe = random_tensor({2, 6}, rng, false);
  const std::size_t segs[] = {2, 3};
  const auto loss = [&] {
    Rng local(5);
    const auto y = attend(x, segs, p, c, true, local);
    return sum(linear(reshape(y, {1, 12}), reshape(probe, {1, 12})));
  };
  auto params = p.named("att");
  params.emplace_back("x", x);
  const auto r = check_gradients(loss, params);
  CAPTURE(r.worst);
  CHECK(r.max_relative_error < 1e-4);
}
