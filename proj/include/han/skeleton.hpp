#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "han/rng.hpp"

namespace han {

inline constexpr std::size_t kPartCount = 6;
inline constexpr std::size_t kStreamCount = kPartCount + 1;

// T frames of J joints with xyz coordinates, stored frame-major then
// joint-major.
struct SkeletonSequence {
  std::size_t frame_count = 0;
  std::size_t joint_count = 0;
  std::vector<double> coords;
  std::size_t label = 0;
  std::string subject;
  std::string trial;

  SkeletonSequence() = default;
  SkeletonSequence(std::size_t frames, std::size_t joints, std::vector<double> values,
                   std::size_t label = 0);

  std::span<const double> frame(std::size_t t) const;
  std::span<double> frame(std::size_t t);
  double at(std::size_t t, std::size_t joint, std::size_t axis) const {
    return coords[(t * joint_count + joint) * 3 + axis];
  }
  double& at(std::size_t t, std::size_t joint, std::size_t axis) {
    return coords[(t * joint_count + joint) * 3 + axis];
  }
};

// Joint indices grouped as thumb, index, middle, ring, pinky, palm group.
class HandPartition {
 public:
  HandPartition() = default;
  HandPartition(std::string name, std::size_t joint_count,
                std::array<std::vector<std::size_t>, kPartCount> parts);

  // 22 joints: wrist, palm, then base..tip for thumb, index, middle, ring,
  // pinky. The palm group is {palm, wrist}.
  static HandPartition shrec22();
  // 21 joints: wrist, the five finger bases, then three joints per finger
  // from thumb to pinky. The palm group is {wrist}.
  static HandPartition fpha21();
  static HandPartition builtin_for(std::size_t joint_count);
  // Six lines of comma-separated joint indices.
  static HandPartition load(const std::filesystem::path& path, std::size_t joint_count);
  // Built-in name, or a partition file path.
  static HandPartition resolve(const std::string& name_or_path, std::size_t joint_count);
  static HandPartition parse(const std::string& text, std::size_t joint_count,
                             const std::string& source = "<partition>");

  const std::string& name() const { return name_; }
  std::size_t joint_count() const { return joint_count_; }
  const std::array<std::vector<std::size_t>, kPartCount>& parts() const { return parts_; }
  const std::vector<std::size_t>& part(std::size_t k) const { return parts_.at(k); }
  std::size_t max_part_size() const;
  // Every finger part holds exactly 4 joints.
  bool has_standard_fingers() const;

  // "0,1|2,3,4,5|..." form used in checkpoint headers.
  std::string encode() const;
  static HandPartition decode(const std::string& text, std::size_t joint_count);

  friend bool operator==(const HandPartition& a, const HandPartition& b) {
    return a.joint_count_ == b.joint_count_ && a.parts_ == b.parts_;
  }

 private:
  void validate() const;

  std::string name_;
  std::size_t joint_count_ = 0;
  std::array<std::vector<std::size_t>, kPartCount> parts_;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

std::array<std::vector<Vec3>, kPartCount> partition_joints(std::span<const double> frame,
                                                           const HandPartition& partition);

SkeletonSequence parse_sequence(std::istream& in, std::size_t joint_count,
                                const std::string& source = "<stream>");
SkeletonSequence parse_sequence(const std::filesystem::path& path, std::size_t joint_count);
void write_sequence(std::ostream& out, const SkeletonSequence& seq);
void write_sequence(const std::filesystem::path& path, const SkeletonSequence& seq);

// Uniform temporal sampling to target frames. Longer sequences pick source
// frame round(k (T-1) / (target-1)); shorter ones are linearly interpolated
// on the same grid.
SkeletonSequence uniform_sample(const SkeletonSequence& seq, std::size_t target = 8);

// Linear interpolation at fractional frame position, clamped to the ends.
std::vector<double> interpolate_frame(const SkeletonSequence& seq, double position);

struct AugmentationConfig {
  double scale_min = 0.9;
  double scale_max = 1.1;
  double shift = 0.05;         // per-axis offset drawn from [-shift, shift]
  double time_jitter = 0.5;    // max frames trimmed at each end before re-interpolation; 0 disables
  double noise_std = 0.001;

  static AugmentationConfig none();
  void validate() const;
};

// Global scale, global shift, temporal re-interpolation over a jittered span,
// then Gaussian coordinate noise. Frame count, joints and label are kept.
SkeletonSequence augment(const SkeletonSequence& seq, const AugmentationConfig& config, Rng& rng);

// Subtracts the given joint's position in each frame from every joint of that frame.
SkeletonSequence center_on_joint(const SkeletonSequence& seq, std::size_t joint);

struct ManifestEntry {
  std::filesystem::path path;
  std::size_t label = 0;
  std::string split = "train";
};

struct DatasetManifest {
  std::size_t class_count = 0;
  std::size_t joint_count = 22;
  std::string partition;  // empty selects the built-in layout for joint_count
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  HandPartition resolve_partition() const;
  std::size_t count(const std::string& split) const;
  // Parses every entry of the split. Paths are relative to base_dir.
  std::vector<SkeletonSequence> load_split(const std::string& split) const;
};

}  // namespace han
