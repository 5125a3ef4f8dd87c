#include <doctest.h>

#include <sstream>

#include "han/error.hpp"
#include "han/profile.hpp"
#include "support.hpp"

using namespace han;

namespace {

std::uint64_t registry_total(const HanConfig& cfg) {
  const auto model = HanModel<float>::create(cfg, 0);
  std::uint64_t n = 0;
  for (const auto& p : model.parameters()) n += p.tensor.size();
  CHECK(n == model.parameter_count());
  return n;
}

// Independent closed form from the layer shapes.
std::uint64_t closed_form_params(const HanConfig& c) {
  const std::uint64_t d = c.attention.d_model, inner = c.attention.n_heads * c.attention.d_head;
  const std::uint64_t block = 3 * inner * d + d * inner + d;
  const std::uint64_t blocks = (c.share_j_att ? 1 : 6) + 1 + (c.share_t_att ? 1 : 7) + 1;
  return 3 * d + d + blocks * block + c.class_count * d + c.class_count;
}

}  // namespace

TEST_CASE("parameter count at defaults") {
  const HanConfig cfg;
  CHECK(closed_form_params(cfg) == 527118);
  CHECK(count_params(cfg) == 527118);
  CHECK(registry_total(cfg) == 527118);
  CHECK(count_params(cfg) / 1e6 == doctest::Approx(0.53).epsilon(0.01));
}

TEST_CASE("unsharing adds whole blocks") {
  HanConfig cfg;
  cfg.share_j_att = false;
  CHECK(count_params(cfg) == 527118 + 5 * 131200);
  CHECK(registry_total(cfg) == count_params(cfg));
  cfg.share_t_att = false;
  CHECK(count_params(cfg) == 527118 + 11 * 131200);
  CHECK(registry_total(cfg) == count_params(cfg));
}

TEST_CASE("count_params matches the registry over random small configs") {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    HanConfig cfg;
    cfg.attention.d_model = 1 + rng.below(12);
    cfg.attention.n_heads = 1 + rng.below(3);
    cfg.attention.d_head = 1 + rng.below(6);
    cfg.class_count = 2 + rng.below(10);
    cfg.frames = 1 + rng.below(6);
    cfg.share_j_att = rng.below(2);
    cfg.share_t_att = rng.below(2);
    if (rng.below(2)) {
      cfg.joint_count = 21;
      cfg.partition = HandPartition::builtin_for(21);
    }
    CAPTURE(trial);
    CHECK(count_params(cfg) == registry_total(cfg));
    CHECK(count_params(cfg) == closed_form_params(cfg));
  }
}

TEST_CASE("attention invocation cost example") {
  const AttentionConfig att;
  CHECK(attention_macs(att, 4) == 3 * 4 * 128 * 256 + 2 * 16 * 256 + 4 * 256 * 128);
  CHECK(attention_macs(att, 4) == 532480);
}

TEST_CASE("FLOPs at defaults sit in the reported band") {
  const HanConfig cfg;
  const auto flops = count_flops(cfg);
  CHECK(flops == 38628360);
  CHECK(flops >= 34000000);
  CHECK(flops <= 46000000);
  const auto report = profile(cfg);
  const auto elementwise = report.rows.back();
  CHECK(elementwise.module == "elementwise");
  CHECK(static_cast<double>(elementwise.flops) / flops < 0.02);
}

TEST_CASE("doubling frames: recomputation of the temporal terms") {
  HanConfig a;
  HanConfig b;
  b.frames = 16;
  const auto ra = profile(a), rb = profile(b);
  const AttentionConfig att;
  const std::uint64_t d = 128, inner = 256;
  auto row = [](const CostReport& r, const std::string& name) {
    for (const auto& x : r.rows)
      if (x.module == name) return x.flops;
    FAIL("missing row " << name);
    return std::uint64_t{0};
  };
  // T-Att: token terms double, score terms quadruple
  const std::uint64_t tokens8 = 7 * (3 * 8 * d * inner + 8 * inner * d);
  const std::uint64_t scores8 = 7 * (2 * 64 * inner);
  CHECK(row(ra, "t_att") == tokens8 + scores8);
  CHECK(row(rb, "t_att") == 2 * tokens8 + 4 * scores8);
  CHECK(row(rb, "t_att") == 7 * attention_macs(att, 16));
  // per-frame spatial work is linear in frames
  CHECK(row(rb, "j_att") == 2 * row(ra, "j_att"));
  CHECK(row(rb, "f_att") == 2 * row(ra, "f_att"));
  CHECK(row(rb, "joint_embedding") == 2 * row(ra, "joint_embedding"));
  CHECK(row(rb, "fusion_att") == row(ra, "fusion_att"));
  CHECK(row(rb, "classifier") == row(ra, "classifier"));
}

TEST_CASE("FLOPs are monotone in every size knob") {
  const HanConfig base;
  const auto f0 = count_flops(base);
  auto grown = base;
  grown.attention.d_model = 160;
  CHECK(count_flops(grown) >= f0);
  grown = base;
  grown.attention.n_heads = 9;
  CHECK(count_flops(grown) >= f0);
  grown = base;
  grown.attention.d_head = 33;
  CHECK(count_flops(grown) >= f0);
  grown = base;
  grown.frames = 9;
  CHECK(count_flops(grown) >= f0);

  HanConfig j21;
  j21.joint_count = 21;
  j21.partition = HandPartition::builtin_for(21);
  CHECK(count_flops(base) >= count_flops(j21));

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    HanConfig c;
    c.attention.d_model = 1 + rng.below(64);
    c.attention.n_heads = 1 + rng.below(8);
    c.attention.d_head = 1 + rng.below(32);
    c.frames = 1 + rng.below(16);
    const auto f = count_flops(c);
    for (int knob = 0; knob < 4; ++knob) {
      auto g = c;
      if (knob == 0) ++g.attention.d_model;
      if (knob == 1) ++g.attention.n_heads;
      if (knob == 2) ++g.attention.d_head;
      if (knob == 3) ++g.frames;
      CHECK(count_flops(g) >= f);
    }
  }
}

TEST_CASE("report rows sum to totals") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    HanConfig c;
    c.attention.d_model = 1 + rng.below(32);
    c.frames = 1 + rng.below(10);
    c.share_j_att = rng.below(2);
    c.share_t_att = rng.below(2);
    c.pe = {static_cast<bool>(rng.below(2)), static_cast<bool>(rng.below(2)),
            static_cast<bool>(rng.below(2)), static_cast<bool>(rng.below(2))};
    const auto r = profile(c);
    std::uint64_t p = 0, f = 0;
    for (const auto& row : r.rows) {
      p += row.params;
      f += row.flops;
    }
    CHECK(p == r.param_count);
    CHECK(f == r.flop_count);
  }
}

TEST_CASE("report formats") {
  const auto r = profile(HanConfig{});
  std::ostringstream csv;
  write_report_csv(csv, r);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "module,params,flops");
  std::getline(lines, line);
  CHECK(line == "joint_embedding,512,67584");
  std::string last;
  while (std::getline(lines, line)) last = line;
  CHECK(last == "total,527118,38628360");

  std::ostringstream text;
  write_report_text(text, r);
  CHECK(text.str().find("params=527118 (0.53M)") != std::string::npos);
  CHECK(text.str().find("flops=38628360 (0.039G)") != std::string::npos);
}

TEST_CASE("invalid configs are rejected") {
  HanConfig c;
  c.attention.n_heads = 0;
  CHECK_THROWS_AS(profile(c), ConfigError);
}
