#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "han/error.hpp"
#include "han/skeleton.hpp"
#include "support.hpp"

using namespace han;
using han::testing::random_sequence;
using han::testing::scratch_dir;

namespace {

std::string zeros_line(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += i ? " 0" : "0";
  return s + "\n";
}

// Frame t holds value t at every coordinate.
SkeletonSequence ramp(std::size_t frames, std::size_t joints) {
  std::vector<double> c;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < joints * 3; ++i) c.push_back(static_cast<double>(t));
  return SkeletonSequence(frames, joints, c, 3);
}

}  // namespace

TEST_CASE("parse a two-frame file of zeros") {
  std::istringstream in(zeros_line(66) + zeros_line(66));
  const auto seq = parse_sequence(in, 22);
  CHECK(seq.frame_count == 2);
  CHECK(seq.joint_count == 22);
  for (double v : seq.coords) CHECK(v == 0.0);
}

TEST_CASE("parse errors name the offending line") {
  std::istringstream short_line(zeros_line(65));
  try {
    parse_sequence(short_line, 22, "seq.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find("seq.txt:1") != std::string::npos);
  }
  std::istringstream bad_token(zeros_line(66) + "0 x" + zeros_line(64).substr(1));
  try {
    parse_sequence(bad_token, 22);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_sequence(empty, 22), DataError);
  std::istringstream not_finite("nan" + zeros_line(66).substr(1));
  CHECK_THROWS_AS(parse_sequence(not_finite, 22), ParseError);
  CHECK_THROWS_AS(parse_sequence(std::filesystem::path("/nonexistent/seq.txt"), 22), DataError);
}

TEST_CASE("write then parse round-trips within 9 significant digits") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seq = random_sequence(1 + rng.below(10), 22, rng);
    std::stringstream buf;
    write_sequence(buf, seq);
    const auto back = parse_sequence(buf, 22);
    REQUIRE(back.coords.size() == seq.coords.size());
    for (std::size_t i = 0; i < seq.coords.size(); ++i)
      CHECK(std::abs(back.coords[i] - seq.coords[i]) <= 1e-8 * std::max(1.0, std::abs(seq.coords[i])));
  }
}

TEST_CASE("uniform_sample examples") {
  Rng rng(2);
  const auto eight = random_sequence(8, 22, rng);
  CHECK(uniform_sample(eight).coords == eight.coords);

  const auto sampled = uniform_sample(ramp(15, 22));
  REQUIRE(sampled.frame_count == 8);
  for (std::size_t k = 0; k < 8; ++k) CHECK(sampled.at(k, 0, 0) == static_cast<double>(2 * k));

  const auto single = random_sequence(1, 22, rng);
  const auto repeated = uniform_sample(single);
  REQUIRE(repeated.frame_count == 8);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 66; ++i) CHECK(repeated.frame(t)[i] == single.coords[i]);
}

TEST_CASE("uniform_sample rounds k(T-1)/7 half up and interpolates short input") {
  for (std::size_t T : {9u, 10u, 11u, 20u, 37u, 100u}) {
    const auto s = uniform_sample(ramp(T, 2));
    for (std::size_t k = 0; k < 8; ++k) {
      const double exact = static_cast<double>(k * (T - 1)) / 7.0;
      CHECK(s.at(k, 0, 0) == std::floor(exact + 0.5));
    }
  }
  const auto s = uniform_sample(ramp(4, 2));
  for (std::size_t k = 0; k < 8; ++k) CHECK(s.at(k, 1, 2) == doctest::Approx(3.0 * k / 7.0));
}

TEST_CASE("uniform_sample is idempotent and keeps label and joints") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto seq = random_sequence(1 + rng.below(40), 21, rng, 5);
    const auto once = uniform_sample(seq);
    const auto twice = uniform_sample(once);
    CHECK(once.coords == twice.coords);
    CHECK(once.label == 5);
    CHECK(once.joint_count == 21);
  }
}

TEST_CASE("augment examples") {
  Rng rng(4);
  const auto seq = random_sequence(12, 22, rng, 2);
  Rng a(1);
  CHECK(augment(seq, AugmentationConfig::none(), a).coords == seq.coords);

  auto doubling = AugmentationConfig::none();
  doubling.scale_min = doubling.scale_max = 2.0;
  const auto doubled = augment(seq, doubling, a);
  for (std::size_t i = 0; i < seq.coords.size(); ++i) CHECK(doubled.coords[i] == 2.0 * seq.coords[i]);

  Rng r1 = Rng::named(9, "augment", {0, 0});
  Rng r2 = Rng::named(9, "augment", {0, 0});
  CHECK(augment(seq, AugmentationConfig{}, r1).coords == augment(seq, AugmentationConfig{}, r2).coords);
}

TEST_CASE("augment preserves frames, joints and label and stays within bounds") {
  Rng rng(5);
  AugmentationConfig cfg;
  cfg.noise_std = 0.0;
  cfg.time_jitter = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto seq = random_sequence(1 + rng.below(30), 22, rng, 7);
    const auto out = augment(seq, cfg, rng);
    CHECK(out.frame_count == seq.frame_count);
    CHECK(out.joint_count == 22);
    CHECK(out.label == 7);
    // the transform is x * s + o with s in [0.9, 1.1] and |o| <= 0.05
    for (std::size_t i = 0; i < seq.coords.size(); ++i)
      CHECK(std::abs(out.coords[i] - seq.coords[i]) <= 0.1 * std::abs(seq.coords[i]) + 0.05 + 1e-12);
  }
}

TEST_CASE("time jitter resamples within the original span") {
  auto cfg = AugmentationConfig::none();
  cfg.time_jitter = 0.5;
  Rng rng(6);
  const auto seq = ramp(10, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto out = augment(seq, cfg, rng);
    CHECK(out.at(0, 0, 0) >= 0.0);
    CHECK(out.at(0, 0, 0) <= 0.5);
    CHECK(out.at(9, 0, 0) >= 8.5);
    CHECK(out.at(9, 0, 0) <= 9.0);
    for (std::size_t t = 1; t < 10; ++t) CHECK(out.at(t, 0, 0) > out.at(t - 1, 0, 0));
  }
}

TEST_CASE("augmentation config validation") {
  AugmentationConfig c;
  c.scale_min = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AugmentationConfig{};
  c.noise_std = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("built-in partitions are disjoint and cover every joint") {
  for (const auto& p : {HandPartition::shrec22(), HandPartition::fpha21()}) {
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& part : p.parts()) {
      total += part.size();
      seen.insert(part.begin(), part.end());
    }
    CHECK(total == p.joint_count());
    CHECK(seen.size() == p.joint_count());
    CHECK(p.has_standard_fingers());
  }
  CHECK(HandPartition::shrec22().part(5).size() == 2);
  CHECK(HandPartition::fpha21().part(5).size() == 1);
  CHECK(HandPartition::builtin_for(21).name() == "fpha21");
  CHECK_THROWS_AS(HandPartition::builtin_for(20), ConfigError);
}

TEST_CASE("partition_joints examples") {
  std::vector<double> frame(66, 0.0);
  for (std::size_t j = 0; j < 22; ++j) frame[j * 3] = static_cast<double>(j);
  const auto p = HandPartition::shrec22();
  const auto groups = partition_joints(frame, p);
  REQUIRE(groups[0].size() == 4);
  for (std::size_t s = 0; s < 4; ++s) CHECK(groups[0][s] == Vec3{static_cast<double>(p.part(0)[s]), 0, 0});
  std::set<double> xs;
  std::size_t n = 0;
  for (const auto& g : groups)
    for (const auto& v : g) {
      xs.insert(v.x);
      ++n;
    }
  CHECK(n == 22);
  CHECK(xs.size() == 22);

  std::vector<double> frame21(63, 0.0);
  CHECK(partition_joints(frame21, HandPartition::fpha21())[5].size() == 1);
}

TEST_CASE("partition files: parsing, validation and round-trip") {
  const auto p = HandPartition::parse("1,2\n3,4\n5,6\n7,8\n9,10\n0\n", 11);
  CHECK(p.part(1) == std::vector<std::size_t>{3, 4});
  CHECK_FALSE(p.has_standard_fingers());
  CHECK(HandPartition::decode(p.encode(), 11) == p);
  CHECK_THROWS_AS(HandPartition::parse("0,1\n1\n2\n3\n4\n5\n", 6), ConfigError);  // duplicate
  CHECK_THROWS_AS(HandPartition::parse("0\n1\n2\n3\n4\n", 6), ConfigError);       // five parts
  CHECK_THROWS_AS(HandPartition::parse("0\n1\n2\n3\n4\n5\n", 7), ConfigError);    // joint 6 missing
  CHECK_THROWS_AS(HandPartition::parse("0\n1\n2\n3\n4\n9\n", 6), ConfigError);    // out of range
  CHECK_THROWS_AS(HandPartition::parse("0\n1\nx\n3\n4\n5\n", 6), ParseError);

  const auto dir = scratch_dir("partition");
  std::ofstream(dir / "hand.txt") << "1,2\n3,4\n5,6\n7,8\n9,10\n0\n";
  CHECK(HandPartition::resolve((dir / "hand.txt").string(), 11) == p);
  CHECK_THROWS_AS(HandPartition::resolve("fpha21", 22), ConfigError);
}

TEST_CASE("manifest load, splits and errors") {
  const auto dir = scratch_dir("manifest");
  Rng rng(7);
  for (int i = 0; i < 3; ++i) write_sequence(dir / ("s" + std::to_string(i) + ".txt"), random_sequence(5, 22, rng));
  std::ofstream(dir / "m.tsv") << "classes=3\njoints=22\npartition=shrec22\n# comment\n"
                                  "s0.txt\t0\ttrain\ns1.txt\t2\ttest\ns2.txt\t1\n";
  const auto m = DatasetManifest::load(dir / "m.tsv");
  CHECK(m.class_count == 3);
  CHECK(m.count("train") == 2);
  CHECK(m.count("test") == 1);
  const auto test = m.load_split("test");
  REQUIRE(test.size() == 1);
  CHECK(test[0].label == 2);
  CHECK(m.resolve_partition() == HandPartition::shrec22());

  m.save(dir / "copy.tsv");
  const auto again = DatasetManifest::load(dir / "copy.tsv");
  CHECK(again.entries.size() == 3);
  CHECK(again.entries[2].split == "train");

  std::ofstream(dir / "bad_label.tsv") << "classes=2\njoints=22\ns0.txt\t2\n";
  CHECK_THROWS_AS(DatasetManifest::load(dir / "bad_label.tsv"), DataError);
  std::ofstream(dir / "bad_split.tsv") << "classes=2\njoints=22\ns0.txt\t1\tval\n";
  CHECK_THROWS_AS(DatasetManifest::load(dir / "bad_split.tsv"), ParseError);
  std::ofstream(dir / "no_header.tsv") << "s0.txt\t1\n";
  CHECK_THROWS_AS(DatasetManifest::load(dir / "no_header.tsv"), DataError);
  std::ofstream(dir / "missing.tsv") << "classes=2\njoints=22\nnope.txt\t1\n";
  CHECK_THROWS_AS(DatasetManifest::load(dir / "missing.tsv").load_split("train"), DataError);
  CHECK_THROWS_AS(DatasetManifest::load(dir / "absent.tsv"), DataError);
}

TEST_CASE("center_on_joint subtracts the chosen joint") {
  Rng rng(8);
  const auto seq = random_sequence(3, 22, rng);
  const auto c = center_on_joint(seq, 0);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t a = 0; a < 3; ++a) CHECK(c.at(t, 0, a) == 0.0);
    CHECK(c.at(t, 5, 1) == doctest::Approx(seq.at(t, 5, 1) - seq.at(t, 0, 1)));
  }
}
