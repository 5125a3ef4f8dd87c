#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "han/model.hpp"
#include "han/skeleton.hpp"
#include "han/train.hpp"

namespace han {

struct ConfigKey {
  std::string name;           // snake_case; the flag is --kebab-case
  std::string default_value;  // empty means unset
  std::string help;
};

// Every recognised configuration key.
const std::vector<ConfigKey>& config_keys();
std::string flag_for_key(const std::string& key);

// Merged key=value configuration. Later layers win:
// built-in defaults < config file < command-line flags.
class RunConfig {
 public:
  RunConfig();

  // Parses key=value lines; '#' starts a comment. Unknown keys throw ConfigError.
  void merge_text(const std::string& text, const std::string& source);
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::optional<std::string> get_optional(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // class_count, joint_count and partition come from the arguments when the
  // data dictates them, otherwise from the classes/joints/partition keys.
  HanConfig han_config(std::optional<std::size_t> classes = std::nullopt,
                       std::optional<std::size_t> joints = std::nullopt,
                       std::optional<HandPartition> partition = std::nullopt) const;
  TrainConfig train_config() const;
  AugmentationConfig augmentation_config() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace han
