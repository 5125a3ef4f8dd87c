#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "han/model.hpp"

namespace han {

inline constexpr const char* kCheckpointMagic = "HAN-CKPT v1";

// Layout (all integers little-endian):
//   "HAN-CKPT v1\n"
//   u64 config byte length, then the config echo as key=value lines
//   u64 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 per dimension,
//               IEEE-754 float32 values in row-major order
void save_checkpoint(std::ostream& out, const HanModel<float>& model);
void save_checkpoint(const std::filesystem::path& path, const HanModel<float>& model);
HanModel<float> load_checkpoint(std::istream& in);
HanModel<float> load_checkpoint(const std::filesystem::path& path);

std::string encode_config(const HanConfig& config);
HanConfig decode_config(const std::string& text);

}  // namespace han
