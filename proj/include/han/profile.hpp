#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "han/model.hpp"

namespace han {

// Costs are counted in multiply-accumulates: one MAC is one FLOP.
struct CostRow {
  std::string module;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::uint64_t param_count = 0;
  std::uint64_t flop_count = 0;
};

std::uint64_t count_params(const HanConfig& config);
std::uint64_t count_flops(const HanConfig& config);

// Projections, attention scores, weighted sums and the output projection of
// one block invocation over n tokens.
std::uint64_t attention_macs(const AttentionConfig& config, std::uint64_t n);
// Softmax, ReLU, normalisation, residual add and pooling of the same
// invocation, at one unit per element touched.
std::uint64_t attention_elementwise_ops(const AttentionConfig& config, std::uint64_t n);

// Rows: joint_embedding, j_att, f_att, t_att, fusion_att, classifier,
// elementwise. The elementwise row carries every softmax/normalisation/
// activation/position-add term; the others carry MACs only.
CostReport profile(const HanConfig& config);

void write_report_text(std::ostream& out, const CostReport& report);
void write_report_csv(std::ostream& out, const CostReport& report);

}  // namespace han
