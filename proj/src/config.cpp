#include "han/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "han/error.hpp"

namespace han {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      // model
      {"d_model", "128", "embedding width of every attention block"},
      {"heads", "8", "attention heads per block"},
      {"d_head", "32", "key/query/value width per head"},
      {"dropout", "0.1", "dropout rate inside the attention blocks"},
      {"frames", "8", "frames each sequence is sampled to"},
      {"classes", "14", "class count when no manifest provides one"},
      {"joints", "22", "joint count when no manifest provides one"},
      {"partition", "", "partition name (shrec22, fpha21) or file"},
      {"pe_joint", "1", "add joint position embeddings"},
      {"pe_finger", "1", "add part position embeddings"},
      {"pe_temporal", "1", "add frame position embeddings"},
      {"pe_fusion", "1", "add stream position embeddings"},
      {"share_j_att", "1", "share J-Att weights across the 6 parts"},
      {"share_t_att", "1", "share T-Att weights across the 7 streams"},
      // training
      {"seed", "0", "seed for every random draw"},
      {"lr", "0.001", "peak learning rate"},
      {"batch_size", "32", "training batch size"},
      {"warmup_epochs", "5", "linear warm-up length in epochs"},
      {"plateau_patience", "10", "epochs without improvement before a decay"},
      {"decay_factor", "10", "learning-rate divisor per decay"},
      {"max_decays", "4", "stop after this many decays"},
      {"max_epochs", "1000", "hard epoch cap"},
      {"augment", "1", "apply training augmentation"},
      {"wrist_center", "0", "subtract the wrist position from every frame"},
      // augmentation
      {"aug_scale_min", "0.9", "lower bound of the global scale factor"},
      {"aug_scale_max", "1.1", "upper bound of the global scale factor"},
      {"aug_shift", "0.05", "per-axis global shift bound"},
      {"aug_time_jitter", "0.5", "resampling phase jitter in frames"},
      {"aug_noise_std", "0.001", "Gaussian coordinate noise"},
      // paths and selectors
      {"manifest", "", "dataset manifest"},
      {"out", "", "output directory or file"},
      {"checkpoint", "", "model checkpoint"},
      {"confusion", "", "confusion matrix CSV output"},
      {"csv", "", "cost breakdown CSV output"},
      {"sequence", "", "single sequence file"},
      {"site", "", "attention site: J, F, T or Fusion"},
      {"frame", "0", "frame selector for J and F sites"},
      {"part", "0", "part selector for the J site"},
      {"stream", "0", "stream selector for the T site (6 = whole hand)"},
      {"split", "test", "manifest split to evaluate"},
      // synthetic data
      {"samples_per_class", "16", "synthetic samples per class"},
      {"test_fraction", "0.25", "share of each synthetic class tagged test"},
      {"min_frames", "20", "shortest synthetic sequence"},
      {"max_frames", "40", "longest synthetic sequence"},
      {"synth_noise", "0.005", "synthetic coordinate noise"},
  };
  return keys;
}

std::string flag_for_key(const std::string& key) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return flag;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys())
    if (!k.default_value.empty()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = config_keys();
  const bool known =
      std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
  if (!known) throw ConfigError("unknown configuration key '" + key + "'");
  values_[key] = value;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    try {
      set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  merge_text(buffer.str(), path.string());
}

bool RunConfig::has(const std::string& key) const {
  const auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->second.empty())
    throw ConfigError("missing required option " + flag_for_key(key));
  return it->second;
}

std::optional<std::string> RunConfig::get_optional(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return values_.at(key);
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError(flag_for_key(key) + " expects a non-negative integer, got '" + s + "'");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError(flag_for_key(key) + " expects a number, got '" + s + "'");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ConfigError(flag_for_key(key) + " expects a boolean, got '" + s + "'");
}

HanConfig RunConfig::han_config(std::optional<std::size_t> classes, std::optional<std::size_t> joints,
                                std::optional<HandPartition> partition) const {
  HanConfig c;
  c.attention.d_model = get_uint("d_model");
  c.attention.n_heads = get_uint("heads");
  c.attention.d_head = get_uint("d_head");
  c.attention.dropout_rate = get_double("dropout");
  c.frames = get_uint("frames");
  c.class_count = classes ? *classes : get_uint("classes");
  c.joint_count = joints ? *joints : get_uint("joints");
  c.partition = partition ? *partition
                          : HandPartition::resolve(get_optional("partition").value_or(""),
                                                   c.joint_count);
  c.pe.joint = get_bool("pe_joint");
  c.pe.finger = get_bool("pe_finger");
  c.pe.temporal = get_bool("pe_temporal");
  c.pe.fusion = get_bool("pe_fusion");
  c.share_j_att = get_bool("share_j_att");
  c.share_t_att = get_bool("share_t_att");
  c.validate();
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.lr = get_double("lr");
  t.batch_size = get_uint("batch_size");
  t.warmup_epochs = get_uint("warmup_epochs");
  t.plateau_patience = get_uint("plateau_patience");
  t.decay_factor = get_double("decay_factor");
  t.max_decays = get_uint("max_decays");
  t.max_epochs = get_uint("max_epochs");
  t.seed = get_uint("seed");
  t.augment = get_bool("augment");
  t.validate();
  return t;
}

AugmentationConfig RunConfig::augmentation_config() const {
  AugmentationConfig a;
  a.scale_min = get_double("aug_scale_min");
  a.scale_max = get_double("aug_scale_max");
  a.shift = get_double("aug_shift");
  a.time_jitter = get_double("aug_time_jitter");
  a.noise_std = get_double("aug_noise_std");
  a.validate();
  return a;
}

}  // namespace han
