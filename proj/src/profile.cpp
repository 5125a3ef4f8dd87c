#include "han/profile.hpp"

#include <iomanip>
#include <ostream>

namespace han {

std::uint64_t attention_macs(const AttentionConfig& c, std::uint64_t n) {
  const std::uint64_t d = c.d_model, inner = c.inner_width();
  return 3 * n * d * inner       // K, Q, V projections
         + 2 * n * n * inner     // Q.K scores and weighted value sums
         + n * inner * d;        // Wa
}

std::uint64_t attention_elementwise_ops(const AttentionConfig& c, std::uint64_t n) {
  const std::uint64_t d = c.d_model;
  return c.n_heads * n * n  // softmax
         + n * d            // relu
         + n * d            // layer norm
         + n * d            // residual add
         + n * d;           // mean pooling
}

CostReport profile(const HanConfig& config) {
  config.validate();
  const auto& att = config.attention;
  const std::uint64_t d = att.d_model;
  const std::uint64_t T = config.frames;
  const std::uint64_t J = config.joint_count;
  const std::uint64_t block = attention_parameter_count(att);
  const std::uint64_t j_sets = config.share_j_att ? 1 : kPartCount;
  const std::uint64_t t_sets = config.share_t_att ? 1 : kStreamCount;

  std::uint64_t j_macs = 0, elementwise = 0;
  for (const auto& part : config.partition.parts()) {
    j_macs += T * attention_macs(att, part.size());
    elementwise += T * attention_elementwise_ops(att, part.size());
  }
  const std::uint64_t f_macs = T * attention_macs(att, kPartCount);
  elementwise += T * attention_elementwise_ops(att, kPartCount);
  const std::uint64_t t_macs = kStreamCount * attention_macs(att, T);
  elementwise += kStreamCount * attention_elementwise_ops(att, T);
  const std::uint64_t fusion_macs = attention_macs(att, kStreamCount);
  elementwise += attention_elementwise_ops(att, kStreamCount);
  // position-embedding additions at each enabled site
  if (config.pe.joint) elementwise += T * J * d;
  if (config.pe.finger) elementwise += T * kPartCount * d;
  if (config.pe.temporal) elementwise += kStreamCount * T * d;
  if (config.pe.fusion) elementwise += kStreamCount * d;

  CostReport r;
  r.rows = {
      {"joint_embedding", 3 * d + d, T * J * 3 * d},
      {"j_att", j_sets * block, j_macs},
      {"f_att", block, f_macs},
      {"t_att", t_sets * block, t_macs},
      {"fusion_att", block, fusion_macs},
      {"classifier", config.class_count * d + config.class_count, config.class_count * d},
      {"elementwise", 0, elementwise},
  };
  for (const auto& row : r.rows) {
    r.param_count += row.params;
    r.flop_count += row.flops;
  }
  return r;
}

std::uint64_t count_params(const HanConfig& config) { return profile(config).param_count; }

std::uint64_t count_flops(const HanConfig& config) { return profile(config).flop_count; }

void write_report_text(std::ostream& out, const CostReport& report) {
  const auto flags = out.flags();
  out << std::left << std::setw(18) << "module" << std::right << std::setw(12) << "params"
      << std::setw(14) << "flops" << '\n';
  for (const auto& row : report.rows)
    out << std::left << std::setw(18) << row.module << std::right << std::setw(12) << row.params
        << std::setw(14) << row.flops << '\n';
  out << std::left << std::setw(18) << "total" << std::right << std::setw(12) << report.param_count
      << std::setw(14) << report.flop_count << '\n';
  out.flags(flags);
  out << "params=" << report.param_count << " (" << std::fixed << std::setprecision(2)
      << static_cast<double>(report.param_count) / 1e6 << "M)\n";
  out << "flops=" << report.flop_count << " (" << std::setprecision(3)
      << static_cast<double>(report.flop_count) / 1e9 << "G)\n";
  out.flags(flags);
}

void write_report_csv(std::ostream& out, const CostReport& report) {
  out << "module,params,flops\n";
  for (const auto& row : report.rows) out << row.module << ',' << row.params << ',' << row.flops << '\n';
  out << "total," << report.param_count << ',' << report.flop_count << '\n';
}

}  // namespace han
