#include "han/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "han/error.hpp"

namespace han {

namespace {

template <typename Int>
void put_int(std::ostream& out, Int value) {
  unsigned char bytes[sizeof(Int)];
  for (std::size_t i = 0; i < sizeof(Int); ++i)
    bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(Int));
}

template <typename Int>
Int get_int(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(Int)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(Int)))
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < sizeof(Int); ++i) value |= std::uint64_t{bytes[i]} << (8 * i);
  return static_cast<Int>(value);
}

std::string get_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (1ull << 32)) throw FormatError(std::string("implausible length for ") + what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  return s;
}

std::string flag(bool b) { return b ? "1" : "0"; }

}  // namespace

std::string encode_config(const HanConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "d_model=" << c.attention.d_model << '\n'
      << "heads=" << c.attention.n_heads << '\n'
      << "d_head=" << c.attention.d_head << '\n'
      << "dropout=" << c.attention.dropout_rate << '\n'
      << "frames=" << c.frames << '\n'
      << "classes=" << c.class_count << '\n'
      << "joints=" << c.joint_count << '\n'
      << "partition=" << c.partition.encode() << '\n'
      << "pe_joint=" << flag(c.pe.joint) << '\n'
      << "pe_finger=" << flag(c.pe.finger) << '\n'
      << "pe_temporal=" << flag(c.pe.temporal) << '\n'
      << "pe_fusion=" << flag(c.pe.fusion) << '\n'
      << "share_j_att=" << flag(c.share_j_att) << '\n'
      << "share_t_att=" << flag(c.share_t_att) << '\n';
  return out.str();
}

HanConfig decode_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed config line in checkpoint: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("checkpoint config lacks ") + key);
    return it->second;
  };
  try {
    HanConfig c;
    c.attention.d_model = std::stoul(need("d_model"));
    c.attention.n_heads = std::stoul(need("heads"));
    c.attention.d_head = std::stoul(need("d_head"));
    c.attention.dropout_rate = std::stod(need("dropout"));
    c.frames = std::stoul(need("frames"));
    c.class_count = std::stoul(need("classes"));
    c.joint_count = std::stoul(need("joints"));
    c.partition = HandPartition::decode(need("partition"), c.joint_count);
    c.pe.joint = need("pe_joint") == "1";
    c.pe.finger = need("pe_finger") == "1";
    c.pe.temporal = need("pe_temporal") == "1";
    c.pe.fusion = need("pe_fusion") == "1";
    c.share_j_att = need("share_j_att") == "1";
    c.share_t_att = need("share_t_att") == "1";
    c.validate();
    return c;
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint config holds a malformed number");
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
}

void save_checkpoint(std::ostream& out, const HanModel<float>& model) {
  static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
  out << kCheckpointMagic << '\n';
  const std::string config = encode_config(model.config());
  put_int<std::uint64_t>(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  const auto& params = model.parameters();
  put_int<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put_int<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_int<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) put_int<std::uint64_t>(out, d);
    for (float v : p.tensor.data()) put_int<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw DataError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const HanModel<float>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  save_checkpoint(out, model);
}

HanModel<float> load_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header != kCheckpointMagic)
    throw FormatError("not a checkpoint: expected header '" + std::string(kCheckpointMagic) +
                      "', found '" + header.substr(0, 32) + "'");
  const auto config_len = get_int<std::uint64_t>(in, "config length");
  const HanConfig config = decode_config(get_bytes(in, config_len, "config"));
  HanModel<float> model = HanModel<float>::create(config, 0);

  const auto count = get_int<std::uint64_t>(in, "tensor count");
  if (count != model.parameters().size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(model.parameters().size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get_int<std::uint32_t>(in, "name length");
    const std::string name = get_bytes(in, name_len, "name");
    const auto rank = get_int<std::uint32_t>(in, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = get_int<std::uint64_t>(in, "dimension");
    Tensor<float> target;
    try {
      target = model.parameter(name);
    } catch (const UsageError&) {
      throw FormatError("checkpoint tensor '" + name + "' unknown to the model");
    }
    if (target.shape() != shape)
      throw FormatError("checkpoint tensor '" + name + "' has shape " + to_string(shape) +
                        ", model expects " + to_string(target.shape()));
    for (float& v : target.mutable_data())
      v = std::bit_cast<float>(get_int<std::uint32_t>(in, "values"));
  }
  return model;
}

HanModel<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace han
