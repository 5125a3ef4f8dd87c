#include "han/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "han/error.hpp"

namespace han {

namespace {

struct Motion {
  double amplitude = 1.0;
  double phase = 0.0;           // time shift as a fraction of the gesture
  double offset[3] = {0, 0, 0};
};

double bump(double u, double freq) { return std::sin(std::numbers::pi * freq * u); }

// Rest pose plus class motion at normalised time u in [0, 1].
std::vector<double> pose(std::size_t label, const HandPartition& partition, double u,
                         const Motion& m) {
  const double pi = std::numbers::pi;
  const std::size_t J = partition.joint_count();
  std::vector<double> joints(J * 3, 0.0);
  const std::size_t variant = label / 2;
  const bool coarse = label % 2 == 0;
  const double t = std::clamp(u + m.phase, 0.0, 1.0);

  double curl[5] = {0, 0, 0, 0, 0};
  if (!coarse) {
    const std::size_t a = (2 * variant) % 5;
    const std::size_t b = (2 * variant + 1) % 5;
    const double freq = 1.0 + 0.5 * static_cast<double>(variant % 3);
    const double sign = variant % 2 ? -1.0 : 1.0;
    const double s = sign * m.amplitude * 1.1 * std::pow(bump(t, freq), 2);
    curl[a] = s;
    curl[b] = s;
  }

  // palm group near the origin
  const auto& palm = partition.part(kPartCount - 1);
  for (std::size_t i = 0; i < palm.size(); ++i) joints[palm[i] * 3 + 1] = 0.3 * static_cast<double>(palm.size() - 1 - i);

  for (std::size_t f = 0; f < 5; ++f) {
    const double spread = -0.6 + 0.3 * static_cast<double>(f);
    double x = 0.35 * std::sin(spread), y = 0.3 + 0.35 * std::cos(spread), z = 0.5 * curl[f];
    const auto& finger = partition.part(f);
    for (std::size_t j = 0; j < finger.size(); ++j) {
      joints[finger[j] * 3 + 0] = x;
      joints[finger[j] * 3 + 1] = y;
      joints[finger[j] * 3 + 2] = z;
      const double bend = curl[f] * static_cast<double>(j + 1) * 0.5;
      const double len = 0.18;
      x += len * std::sin(spread) * std::cos(bend);
      y += len * std::cos(spread) * std::cos(bend);
      z += len * std::sin(bend);
    }
  }

  double shift[3] = {0, 0, 0};
  double angle = 0.0;
  if (coarse) {
    const std::size_t kind = variant % 4;
    const double sign = (variant / 4) % 2 ? -1.0 : 1.0;
    const double freq = 1.0 + static_cast<double>(variant / 8);
    const double s = sign * m.amplitude * bump(t, freq);
    if (kind < 3)
      shift[kind] = 0.6 * s;
    else
      angle = 0.8 * s * pi / 4.0;
  }
  const double c = std::cos(angle), sn = std::sin(angle);
  for (std::size_t j = 0; j < J; ++j) {
    const double x = joints[j * 3], y = joints[j * 3 + 1];
    joints[j * 3] = c * x - sn * y + shift[0] + m.offset[0];
    joints[j * 3 + 1] = sn * x + c * y + shift[1] + m.offset[1];
    joints[j * 3 + 2] += shift[2] + m.offset[2];
  }
  return joints;
}

SkeletonSequence render(std::size_t label, const HandPartition& partition, std::size_t frames,
                        const Motion& m) {
  std::vector<double> coords;
  coords.reserve(frames * partition.joint_count() * 3);
  for (std::size_t k = 0; k < frames; ++k) {
    const double u = frames > 1 ? static_cast<double>(k) / static_cast<double>(frames - 1) : 0.0;
    const auto p = pose(label, partition, u, m);
    coords.insert(coords.end(), p.begin(), p.end());
  }
  return SkeletonSequence(frames, partition.joint_count(), std::move(coords), label);
}

}  // namespace

void SynthConfig::validate() const {
  if (classes < 2) throw ConfigError("synth needs at least 2 classes");
  if (samples_per_class < 1) throw ConfigError("synth needs at least 1 sample per class");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in [0, 1)");
  if (min_frames < 1 || max_frames < min_frames)
    throw ConfigError("synth frame range must satisfy 1 <= min <= max");
  if (noise_std < 0.0 || offset < 0.0) throw ConfigError("synth noise and offset must be >= 0");
  HandPartition::builtin_for(joint_count);
}

SkeletonSequence class_template(std::size_t label, const SynthConfig& config, std::size_t frames) {
  return render(label, HandPartition::builtin_for(config.joint_count), frames, Motion{});
}

std::vector<SyntheticSample> generate_synthetic(const SynthConfig& config) {
  config.validate();
  const HandPartition partition = HandPartition::builtin_for(config.joint_count);
  const auto test_count = static_cast<std::size_t>(
      std::floor(config.test_fraction * static_cast<double>(config.samples_per_class)));
  std::vector<SyntheticSample> out;
  out.reserve(config.classes * config.samples_per_class);
  for (std::size_t c = 0; c < config.classes; ++c)
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      Rng rng = Rng::named(config.seed, "synth", {c, i});
      Motion m;
      m.amplitude = rng.uniform(0.85, 1.15);
      m.phase = rng.uniform(-0.05, 0.05);
      for (double& o : m.offset) o = rng.uniform(-config.offset, config.offset);
      const std::size_t frames =
          config.min_frames + rng.below(config.max_frames - config.min_frames + 1);
      SkeletonSequence seq = render(c, partition, frames, m);
      for (double& v : seq.coords) v += config.noise_std * rng.normal();
      seq.subject = "synth";
      seq.trial = std::to_string(i);
      const bool test = i >= config.samples_per_class - test_count;
      out.push_back({std::move(seq), test ? "test" : "train"});
    }
  return out;
}

std::filesystem::path write_synthetic(const std::filesystem::path& dir, const SynthConfig& config) {
  const auto samples = generate_synthetic(config);
  std::filesystem::create_directories(dir);
  DatasetManifest manifest;
  manifest.class_count = config.classes;
  manifest.joint_count = config.joint_count;
  manifest.partition = HandPartition::builtin_for(config.joint_count).name();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04zu.txt", i);
    write_sequence(dir / name, samples[i].sequence);
    manifest.entries.push_back({name, samples[i].sequence.label, samples[i].split});
  }
  const auto path = dir / "manifest.tsv";
  manifest.save(path);
  return path;
}

}  // namespace han
