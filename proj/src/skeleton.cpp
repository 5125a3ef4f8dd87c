#include "han/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "han/error.hpp"

namespace han {

SkeletonSequence::SkeletonSequence(std::size_t frames, std::size_t joints,
                                   std::vector<double> values, std::size_t label_)
    : frame_count(frames), joint_count(joints), coords(std::move(values)), label(label_) {
  if (frames == 0 || joints == 0) throw DataError("sequence needs at least one frame and joint");
  if (coords.size() != frames * joints * 3)
    throw DataError("sequence holds " + std::to_string(coords.size()) + " values, expected " +
                    std::to_string(frames * joints * 3));
}

std::span<const double> SkeletonSequence::frame(std::size_t t) const {
  return std::span<const double>(coords).subspan(t * joint_count * 3, joint_count * 3);
}

std::span<double> SkeletonSequence::frame(std::size_t t) {
  return std::span<double>(coords).subspan(t * joint_count * 3, joint_count * 3);
}

// ---------------------------------------------------------------------------
// Partitions

HandPartition::HandPartition(std::string name, std::size_t joint_count,
                             std::array<std::vector<std::size_t>, kPartCount> parts)
    : name_(std::move(name)), joint_count_(joint_count), parts_(std::move(parts)) {
  validate();
}

void HandPartition::validate() const {
  std::set<std::size_t> seen;
  for (std::size_t k = 0; k < kPartCount; ++k) {
    if (parts_[k].empty()) throw ConfigError("partition part " + std::to_string(k) + " is empty");
    for (std::size_t j : parts_[k]) {
      if (j >= joint_count_)
        throw ConfigError("partition joint " + std::to_string(j) + " out of range for " +
                          std::to_string(joint_count_) + " joints");
      if (!seen.insert(j).second)
        throw ConfigError("partition lists joint " + std::to_string(j) + " twice");
    }
  }
  if (seen.size() != joint_count_)
    throw ConfigError("partition covers " + std::to_string(seen.size()) + " of " +
                      std::to_string(joint_count_) + " joints");
}

HandPartition HandPartition::shrec22() {
  return HandPartition("shrec22", 22,
                       {{{2, 3, 4, 5},
                         {6, 7, 8, 9},
                         {10, 11, 12, 13},
                         {14, 15, 16, 17},
                         {18, 19, 20, 21},
                         {1, 0}}});
}

HandPartition HandPartition::fpha21() {
  return HandPartition("fpha21", 21,
                       {{{1, 6, 7, 8},
                         {2, 9, 10, 11},
                         {3, 12, 13, 14},
                         {4, 15, 16, 17},
                         {5, 18, 19, 20},
                         {0}}});
}

HandPartition HandPartition::builtin_for(std::size_t joint_count) {
  if (joint_count == 22) return shrec22();
  if (joint_count == 21) return fpha21();
  throw ConfigError("no built-in partition for " + std::to_string(joint_count) +
                    " joints; supply a partition file");
}

namespace {

std::vector<std::size_t> parse_index_list(const std::string& text, char sep,
                                          const std::string& source, std::size_t line) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, sep)) {
    const auto first = token.find_first_not_of(" \t\r");
    const auto last = token.find_last_not_of(" \t\r");
    if (first == std::string::npos) throw ParseError(source, line, "empty joint index");
    const std::string trimmed = token.substr(first, last - first + 1);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
    if (ec != std::errc{} || ptr != trimmed.data() + trimmed.size())
      throw ParseError(source, line, "bad joint index '" + trimmed + "'");
    out.push_back(value);
  }
  return out;
}

}  // namespace

HandPartition HandPartition::parse(const std::string& text, std::size_t joint_count,
                                   const std::string& source) {
  std::array<std::vector<std::size_t>, kPartCount> parts;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0, k = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (k == kPartCount) throw ParseError(source, line_no, "more than 6 parts");
    parts[k++] = parse_index_list(line, ',', source, line_no);
  }
  if (k != kPartCount)
    throw ConfigError(source + ": expected 6 parts, found " + std::to_string(k));
  return HandPartition(source, joint_count, std::move(parts));
}

HandPartition HandPartition::load(const std::filesystem::path& path, std::size_t joint_count) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open partition file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), joint_count, path.string());
}

HandPartition HandPartition::resolve(const std::string& name_or_path, std::size_t joint_count) {
  HandPartition p;
  if (name_or_path.empty()) {
    p = builtin_for(joint_count);
  } else if (name_or_path == "shrec22") {
    p = shrec22();
  } else if (name_or_path == "fpha21") {
    p = fpha21();
  } else {
    return load(name_or_path, joint_count);
  }
  if (p.joint_count() != joint_count)
    throw ConfigError("partition " + p.name() + " expects " + std::to_string(p.joint_count()) +
                      " joints, data has " + std::to_string(joint_count));
  return p;
}

std::size_t HandPartition::max_part_size() const {
  std::size_t m = 0;
  for (const auto& p : parts_) m = std::max(m, p.size());
  return m;
}

bool HandPartition::has_standard_fingers() const {
  for (std::size_t k = 0; k + 1 < kPartCount; ++k)
    if (parts_[k].size() != 4) return false;
  return true;
}

std::string HandPartition::encode() const {
  std::string s;
  for (std::size_t k = 0; k < kPartCount; ++k) {
    if (k) s += '|';
    for (std::size_t i = 0; i < parts_[k].size(); ++i) {
      if (i) s += ',';
      s += std::to_string(parts_[k][i]);
    }
  }
  return s;
}

HandPartition HandPartition::decode(const std::string& text, std::size_t joint_count) {
  std::string lines = text;
  std::replace(lines.begin(), lines.end(), '|', '\n');
  HandPartition p = parse(lines, joint_count, "<encoded partition>");
  if (p == shrec22())
    p.name_ = "shrec22";
  else if (p == fpha21())
    p.name_ = "fpha21";
  else
    p.name_ = "custom";
  return p;
}

std::array<std::vector<Vec3>, kPartCount> partition_joints(std::span<const double> frame,
                                                           const HandPartition& partition) {
  if (frame.size() != partition.joint_count() * 3)
    throw ConfigError("frame holds " + std::to_string(frame.size() / 3) +
                      " joints, partition expects " + std::to_string(partition.joint_count()));
  std::array<std::vector<Vec3>, kPartCount> out;
  for (std::size_t k = 0; k < kPartCount; ++k)
    for (std::size_t j : partition.part(k)) {
      if (j >= partition.joint_count()) throw ConfigError("partition joint out of range");
      out[k].push_back({frame[j * 3], frame[j * 3 + 1], frame[j * 3 + 2]});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence files

SkeletonSequence parse_sequence(std::istream& in, std::size_t joint_count,
                                const std::string& source) {
  if (joint_count == 0) throw ConfigError("joint count must be positive");
  const std::size_t expected = joint_count * 3;
  std::vector<double> values;
  std::size_t frames = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string token;
    std::size_t count = 0;
    while (tokens >> token) {
      double v = 0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc{} || ptr != token.data() + token.size())
        throw ParseError(source, line_no, "non-numeric token '" + token + "'");
      if (!std::isfinite(v)) throw ParseError(source, line_no, "non-finite value '" + token + "'");
      values.push_back(v);
      ++count;
    }
    if (count == 0) continue;
    if (count != expected)
      throw ParseError(source, line_no,
                       "expected " + std::to_string(expected) + " values, found " +
                           std::to_string(count));
    ++frames;
  }
  if (frames == 0) throw DataError(source + ": no frames");
  return SkeletonSequence(frames, joint_count, std::move(values));
}

SkeletonSequence parse_sequence(const std::filesystem::path& path, std::size_t joint_count) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sequence file " + path.string());
  return parse_sequence(in, joint_count, path.string());
}

void write_sequence(std::ostream& out, const SkeletonSequence& seq) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(9);
  for (std::size_t t = 0; t < seq.frame_count; ++t) {
    const auto f = seq.frame(t);
    for (std::size_t i = 0; i < f.size(); ++i) out << (i ? " " : "") << f[i];
    out << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

void write_sequence(const std::filesystem::path& path, const SkeletonSequence& seq) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write sequence file " + path.string());
  write_sequence(out, seq);
}

// ---------------------------------------------------------------------------
// Temporal sampling and augmentation

std::vector<double> interpolate_frame(const SkeletonSequence& seq, double position) {
  const double last = static_cast<double>(seq.frame_count - 1);
  position = std::clamp(position, 0.0, last);
  const auto lo = static_cast<std::size_t>(std::floor(position));
  const double w = position - static_cast<double>(lo);
  const auto a = seq.frame(lo);
  std::vector<double> out(a.begin(), a.end());
  if (w > 0.0 && lo + 1 < seq.frame_count) {
    const auto b = seq.frame(lo + 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * (1.0 - w) + b[i] * w;
  }
  return out;
}

SkeletonSequence uniform_sample(const SkeletonSequence& seq, std::size_t target) {
  if (seq.frame_count == 0) throw DataError("cannot sample an empty sequence");
  if (target == 0) throw ConfigError("target frame count must be positive");
  SkeletonSequence out = seq;
  out.frame_count = target;
  out.coords.clear();
  out.coords.reserve(target * seq.joint_count * 3);
  const std::size_t span = seq.frame_count - 1;
  const std::size_t steps = target > 1 ? target - 1 : 1;
  for (std::size_t k = 0; k < target; ++k) {
    if (seq.frame_count >= target) {
      // round half up in integer arithmetic
      const std::size_t index = (2 * k * span + steps) / (2 * steps);
      const auto f = seq.frame(index);
      out.coords.insert(out.coords.end(), f.begin(), f.end());
    } else {
      const double position =
          static_cast<double>(k) * static_cast<double>(span) / static_cast<double>(steps);
      const auto f = interpolate_frame(seq, position);
      out.coords.insert(out.coords.end(), f.begin(), f.end());
    }
  }
  return out;
}

AugmentationConfig AugmentationConfig::none() {
  AugmentationConfig c;
  c.scale_min = 1.0;
  c.scale_max = 1.0;
  c.shift = 0.0;
  c.time_jitter = 0.0;
  c.noise_std = 0.0;
  return c;
}

void AugmentationConfig::validate() const {
  if (!(scale_min > 0.0 && scale_max >= scale_min))
    throw ConfigError("augmentation scale bounds must satisfy 0 < min <= max");
  if (shift < 0.0) throw ConfigError("augmentation shift must be non-negative");
  if (time_jitter < 0.0) throw ConfigError("augmentation time jitter must be non-negative");
  if (noise_std < 0.0) throw ConfigError("augmentation noise must be non-negative");
}

SkeletonSequence augment(const SkeletonSequence& seq, const AugmentationConfig& config, Rng& rng) {
  config.validate();
  // draws happen in a fixed order so each stage is reproducible
  const double factor =
      config.scale_max > config.scale_min ? rng.uniform(config.scale_min, config.scale_max)
                                          : config.scale_min;
  double offset[3] = {0.0, 0.0, 0.0};
  if (config.shift > 0.0)
    for (double& o : offset) o = rng.uniform(-config.shift, config.shift);

  SkeletonSequence out = seq;
  const double last = static_cast<double>(seq.frame_count - 1);
  if (config.time_jitter > 0.0 && seq.frame_count > 1) {
    const double bound = std::min(config.time_jitter, last / 2.0);
    const double start = rng.uniform(0.0, bound);
    const double end = last - rng.uniform(0.0, bound);
    out.coords.clear();
    for (std::size_t k = 0; k < seq.frame_count; ++k) {
      const double position = start + (end - start) * static_cast<double>(k) / last;
      const auto f = interpolate_frame(seq, position);
      out.coords.insert(out.coords.end(), f.begin(), f.end());
    }
  }

  for (std::size_t i = 0; i < out.coords.size(); ++i) {
    double v = out.coords[i] * factor + offset[i % 3];
    if (config.noise_std > 0.0) v += config.noise_std * rng.normal();
    out.coords[i] = v;
  }
  return out;
}

SkeletonSequence center_on_joint(const SkeletonSequence& seq, std::size_t joint) {
  if (joint >= seq.joint_count) throw ConfigError("centering joint out of range");
  SkeletonSequence out = seq;
  for (std::size_t t = 0; t < seq.frame_count; ++t) {
    auto f = out.frame(t);
    const double origin[3] = {f[joint * 3], f[joint * 3 + 1], f[joint * 3 + 2]};
    for (std::size_t i = 0; i < f.size(); ++i) f[i] -= origin[i % 3];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  bool have_classes = false, have_joints = false;
  std::string line;
  std::size_t line_no = 0;
  const std::string source = path.string();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    if (line.find('\t') == std::string::npos && line.find('=') != std::string::npos) {
      const auto eq = line.find('=');
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      try {
        if (key == "classes") {
          m.class_count = std::stoul(value);
          have_classes = true;
        } else if (key == "joints") {
          m.joint_count = std::stoul(value);
          have_joints = true;
        } else if (key == "partition") {
          m.partition = value;
        } else {
          throw ParseError(source, line_no, "unknown header key '" + key + "'");
        }
      } catch (const std::logic_error&) {
        throw ParseError(source, line_no, "bad value for '" + key + "'");
      }
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() < 2 || fields.size() > 3)
      throw ParseError(source, line_no, "expected path<TAB>label[<TAB>split]");
    ManifestEntry e;
    e.path = fields[0];
    std::size_t label = 0;
    const auto [ptr, ec] =
        std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), label);
    if (ec != std::errc{} || ptr != fields[1].data() + fields[1].size())
      throw ParseError(source, line_no, "bad label '" + fields[1] + "'");
    e.label = label;
    if (fields.size() == 3) e.split = fields[2];
    if (e.split != "train" && e.split != "test")
      throw ParseError(source, line_no, "split must be train or test, got '" + e.split + "'");
    m.entries.push_back(std::move(e));
  }
  if (!have_classes) throw DataError(source + ": missing classes= header");
  if (!have_joints) throw DataError(source + ": missing joints= header");
  if (m.class_count < 2) throw DataError(source + ": need at least 2 classes");
  for (const auto& e : m.entries)
    if (e.label >= m.class_count)
      throw DataError(source + ": label " + std::to_string(e.label) + " of " + e.path.string() +
                      " is not below classes=" + std::to_string(m.class_count));
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "classes=" << class_count << '\n' << "joints=" << joint_count << '\n';
  if (!partition.empty()) out << "partition=" << partition << '\n';
  for (const auto& e : entries) out << e.path.generic_string() << '\t' << e.label << '\t' << e.split << '\n';
}

HandPartition DatasetManifest::resolve_partition() const {
  if (partition.empty() || partition == "shrec22" || partition == "fpha21")
    return HandPartition::resolve(partition, joint_count);
  std::filesystem::path p = partition;
  if (p.is_relative()) p = base_dir / p;
  return HandPartition::resolve(p.string(), joint_count);
}

std::size_t DatasetManifest::count(const std::string& split) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == split; }));
}

std::vector<SkeletonSequence> DatasetManifest::load_split(const std::string& split) const {
  std::vector<SkeletonSequence> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    const auto path = e.path.is_relative() ? base_dir / e.path : e.path;
    SkeletonSequence seq = parse_sequence(path, joint_count);
    seq.label = e.label;
    seq.trial = e.path.generic_string();
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace han
