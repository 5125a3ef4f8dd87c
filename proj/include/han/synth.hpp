#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "han/skeleton.hpp"

namespace han {

// Synthetic gestures: even classes move the whole hand (coarse), odd classes
// curl two fingers (fine). Each class has its own axis or finger pair,
// direction and frequency.
struct SynthConfig {
  std::size_t classes = 4;
  std::size_t samples_per_class = 16;
  double test_fraction = 0.25;  // last share of each class is tagged test
  std::size_t joint_count = 22;
  std::size_t min_frames = 20;
  std::size_t max_frames = 40;
  double noise_std = 0.005;
  double offset = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSample {
  SkeletonSequence sequence;
  std::string split;
};

// Noise-free motion of class at the given frame count.
SkeletonSequence class_template(std::size_t label, const SynthConfig& config, std::size_t frames);

std::vector<SyntheticSample> generate_synthetic(const SynthConfig& config);

// Writes seq_XXXX.txt files and manifest.tsv into dir; returns the manifest path.
std::filesystem::path write_synthetic(const std::filesystem::path& dir, const SynthConfig& config);

}  // namespace han
