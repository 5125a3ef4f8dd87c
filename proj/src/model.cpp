#include "han/model.hpp"

#include <algorithm>
#include <cmath>

#include "han/error.hpp"
#include "han/ops.hpp"

namespace han {

void HanConfig::validate() const {
  attention.validate();
  if (frames < 1) throw ConfigError("frames must be at least 1");
  if (class_count < 2) throw ConfigError("classes must be at least 2");
  if (partition.joint_count() != joint_count)
    throw ConfigError("partition " + partition.name() + " covers " +
                      std::to_string(partition.joint_count()) + " joints, config has " +
                      std::to_string(joint_count));
}

AttentionSite parse_site(const std::string& name) {
  if (name == "J" || name == "j" || name == "joint") return AttentionSite::Joint;
  if (name == "F" || name == "f" || name == "finger") return AttentionSite::Finger;
  if (name == "T" || name == "t" || name == "temporal") return AttentionSite::Temporal;
  if (name == "Fusion" || name == "fusion") return AttentionSite::Fusion;
  throw UsageError("unknown attention site '" + name + "' (expected J, F, T or Fusion)");
}

std::string site_name(AttentionSite site) {
  switch (site) {
    case AttentionSite::Joint: return "J";
    case AttentionSite::Finger: return "F";
    case AttentionSite::Temporal: return "T";
    case AttentionSite::Fusion: return "Fusion";
  }
  return "?";
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::vector<double> softmax_probabilities(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double peak = *std::max_element(p.begin(), p.end());
  double total = 0;
  for (double& v : p) total += (v = std::exp(v - peak));
  for (double& v : p) v /= total;
  return p;
}

namespace {

template <typename Real>
Tensor<Real> uniform_param(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  const double bound = scale / std::sqrt(static_cast<double>(cols));
  std::vector<Real> values(rows * cols);
  for (Real& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor<Real>({rows, cols}, std::move(values), true);
}

// PE rows for a list of 1-based positions, as a constant tensor.
template <typename Real>
Tensor<Real> position_rows(const PositionEmbeddingTable& table, std::span<const std::size_t> positions) {
  const std::size_t d = table.d_model();
  std::vector<Real> values(positions.size() * d);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const auto row = table.row(positions[r]);
    for (std::size_t c = 0; c < d; ++c) values[r * d + c] = static_cast<Real>(row[c]);
  }
  return Tensor<Real>({positions.size(), d}, std::move(values));
}

}  // namespace

template <typename Real>
HanModel<Real>::HanModel(HanConfig config) : config_(std::move(config)) {}

template <typename Real>
HanModel<Real> HanModel<Real>::create(const HanConfig& config, std::uint64_t seed) {
  config.validate();
  HanModel model(config);
  const auto& att = config.attention;
  Rng rng = Rng::named(seed, "init");
  model.joint_weight_ = uniform_param<Real>(att.d_model, 3, rng);
  model.joint_bias_ = Tensor<Real>::zeros({att.d_model}, true);
  const std::size_t j_sets = config.share_j_att ? 1 : kPartCount;
  for (std::size_t i = 0; i < j_sets; ++i)
    model.j_att_.push_back(AttentionParams<Real>::initialize(att, rng));
  model.f_att_ = AttentionParams<Real>::initialize(att, rng);
  const std::size_t t_sets = config.share_t_att ? 1 : kStreamCount;
  for (std::size_t i = 0; i < t_sets; ++i)
    model.t_att_.push_back(AttentionParams<Real>::initialize(att, rng));
  model.fusion_att_ = AttentionParams<Real>::initialize(att, rng);
  // The pooled feature has norm ~sqrt(d_model), so the head is shrunk by a
  // further 1/sqrt(d_model) to start near the uniform prediction.
  model.cls_weight_ = uniform_param<Real>(config.class_count, att.d_model, rng,
                                          1.0 / std::sqrt(static_cast<double>(att.d_model)));
  model.cls_bias_ = Tensor<Real>::zeros({config.class_count}, true);

  const std::size_t positions =
      std::max({config.frames, kStreamCount, config.partition.max_part_size()}) + 1;
  model.pe_table_ = std::make_shared<PositionEmbeddingTable>(positions, att.d_model);
  model.register_parameters();
  return model;
}

template <typename Real>
void HanModel<Real>::register_parameters() {
  registry_.clear();
  auto add = [this](std::vector<std::pair<std::string, Tensor<Real>>> items) {
    for (auto& [name, t] : items) registry_.push_back({name, t});
  };
  add({{"joint.weight", joint_weight_}, {"joint.bias", joint_bias_}});
  for (std::size_t i = 0; i < j_att_.size(); ++i)
    add(j_att_[i].named(j_att_.size() == 1 ? "j_att" : "j_att." + std::to_string(i)));
  add(f_att_.named("f_att"));
  for (std::size_t i = 0; i < t_att_.size(); ++i)
    add(t_att_[i].named(t_att_.size() == 1 ? "t_att" : "t_att." + std::to_string(i)));
  add(fusion_att_.named("fusion_att"));
  add({{"classifier.weight", cls_weight_}, {"classifier.bias", cls_bias_}});
}

template <typename Real>
std::size_t HanModel<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : registry_) n += p.tensor.size();
  return n;
}

template <typename Real>
Tensor<Real> HanModel<Real>::parameter(const std::string& name) const {
  for (const auto& p : registry_)
    if (p.name == name) return p.tensor;
  throw UsageError("no parameter named " + name);
}

template <typename Real>
const AttentionParams<Real>& HanModel<Real>::j_att(std::size_t part) const {
  if (part >= kPartCount) throw UsageError("part index out of range");
  return j_att_.size() == 1 ? j_att_[0] : j_att_[part];
}

template <typename Real>
const AttentionParams<Real>& HanModel<Real>::t_att(std::size_t stream) const {
  if (stream >= kStreamCount) throw UsageError("stream index out of range");
  return t_att_.size() == 1 ? t_att_[0] : t_att_[stream];
}

template <typename Real>
void HanModel<Real>::check_batch(std::span<const SkeletonSequence> batch) const {
  if (batch.empty()) throw UsageError("forward needs at least one sequence");
  for (const auto& seq : batch) {
    if (seq.frame_count != config_.frames)
      throw UsageError("sequence has " + std::to_string(seq.frame_count) +
                       " frames; model expects " + std::to_string(config_.frames) +
                       " (sample it first)");
    if (seq.joint_count != config_.joint_count)
      throw ConfigError("sequence has " + std::to_string(seq.joint_count) +
                        " joints; model partition expects " + std::to_string(config_.joint_count));
  }
}

template <typename Real>
Tensor<Real> HanModel<Real>::forward(std::span<const SkeletonSequence> batch, bool training,
                                     Rng& rng, ForwardTrace* trace) const {
  check_batch(batch);
  const auto& att = config_.attention;
  const auto& partition = config_.partition;
  const std::size_t B = batch.size();
  const std::size_t T = config_.frames;
  const std::size_t J = config_.joint_count;
  const std::size_t BT = B * T;
  if (trace) *trace = ForwardTrace{};

  // Joint tokens ordered (sample, frame, part, slot).
  std::vector<Real> coords;
  coords.reserve(BT * J * 3);
  std::vector<std::size_t> joint_positions;
  joint_positions.reserve(BT * J);
  std::vector<std::size_t> joint_segments;
  joint_segments.reserve(BT * kPartCount);
  std::array<std::vector<std::size_t>, kPartCount> rows_of_part;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      const auto frame = batch[b].frame(t);
      for (std::size_t k = 0; k < kPartCount; ++k) {
        const auto& joints = partition.part(k);
        joint_segments.push_back(joints.size());
        for (std::size_t s = 0; s < joints.size(); ++s) {
          rows_of_part[k].push_back(joint_positions.size());
          joint_positions.push_back(s + 1);
          for (std::size_t c = 0; c < 3; ++c)
            coords.push_back(static_cast<Real>(frame[joints[s] * 3 + c]));
        }
      }
    }
  const std::size_t R = joint_positions.size();
  Tensor<Real> tokens = linear(Tensor<Real>({R, 3}, std::move(coords)), joint_weight_, joint_bias_);
  if (config_.pe.joint) tokens = add(tokens, position_rows<Real>(*pe_table_, joint_positions));

  // J-Att: one pooled feature per (sample, frame, part).
  Tensor<Real> part_features;
  if (j_att_.size() == 1) {
    AttentionCapture* cap = nullptr;
    if (trace) cap = &trace->joint.emplace_back();
    part_features = attend(tokens, joint_segments, j_att_[0], att, training, rng, cap);
  } else {
    std::vector<Tensor<Real>> per_part;
    if (trace) trace->joint.resize(kPartCount);
    for (std::size_t k = 0; k < kPartCount; ++k) {
      const std::vector<std::size_t> segs(BT, partition.part(k).size());
      per_part.push_back(attend(gather_rows(tokens, rows_of_part[k]), segs, j_att_[k], att,
                                training, rng, trace ? &trace->joint[k] : nullptr));
    }
    // rows are (part, sample, frame); reorder to (sample, frame, part)
    std::vector<std::size_t> order(BT * kPartCount);
    for (std::size_t bt = 0; bt < BT; ++bt)
      for (std::size_t k = 0; k < kPartCount; ++k) order[bt * kPartCount + k] = k * BT + bt;
    part_features = gather_rows(concat_rows<Real>(per_part), order);
  }

  // F-Att: six part tokens per frame.
  Tensor<Real> finger_in = part_features;
  if (config_.pe.finger) {
    std::vector<std::size_t> positions(BT * kPartCount);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % kPartCount + 1;
    finger_in = add(finger_in, position_rows<Real>(*pe_table_, positions));
  }
  const std::vector<std::size_t> finger_segments(BT, kPartCount);
  const Tensor<Real> hand_features = attend(finger_in, finger_segments, f_att_, att, training, rng,
                                            trace ? &trace->finger : nullptr);

  // T-Att over 7 streams (6 parts, whole hand), tokens ordered (sample, stream, frame).
  const Tensor<Real> stacked_parts[] = {part_features, hand_features};
  const Tensor<Real> all_features = concat_rows<Real>(stacked_parts);
  std::vector<std::size_t> stream_rows;
  stream_rows.reserve(B * kStreamCount * T);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t s = 0; s < kStreamCount; ++s)
      for (std::size_t t = 0; t < T; ++t)
        stream_rows.push_back(s < kPartCount ? (b * T + t) * kPartCount + s
                                             : BT * kPartCount + b * T + t);
  Tensor<Real> temporal_in = gather_rows(all_features, stream_rows);
  if (config_.pe.temporal) {
    std::vector<std::size_t> positions(stream_rows.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % T + 1;
    temporal_in = add(temporal_in, position_rows<Real>(*pe_table_, positions));
  }
  Tensor<Real> stream_features;
  if (t_att_.size() == 1) {
    const std::vector<std::size_t> segs(B * kStreamCount, T);
    AttentionCapture* cap = nullptr;
    if (trace) cap = &trace->temporal.emplace_back();
    stream_features = attend(temporal_in, segs, t_att_[0], att, training, rng, cap);
  } else {
    std::vector<Tensor<Real>> per_stream;
    if (trace) trace->temporal.resize(kStreamCount);
    const std::vector<std::size_t> segs(B, T);
    for (std::size_t s = 0; s < kStreamCount; ++s) {
      std::vector<std::size_t> rows;
      rows.reserve(B * T);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) rows.push_back((b * kStreamCount + s) * T + t);
      per_stream.push_back(attend(gather_rows(temporal_in, rows), segs, t_att_[s], att, training,
                                  rng, trace ? &trace->temporal[s] : nullptr));
    }
    std::vector<std::size_t> order(B * kStreamCount);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < kStreamCount; ++s) order[b * kStreamCount + s] = s * B + b;
    stream_features = gather_rows(concat_rows<Real>(per_stream), order);
  }

  // Fusion-Att over the 7 stream features.
  Tensor<Real> fusion_in = stream_features;
  if (config_.pe.fusion) {
    std::vector<std::size_t> positions(B * kStreamCount);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % kStreamCount + 1;
    fusion_in = add(fusion_in, position_rows<Real>(*pe_table_, positions));
  }
  const std::vector<std::size_t> fusion_segments(B, kStreamCount);
  const Tensor<Real> fused = attend(fusion_in, fusion_segments, fusion_att_, att, training, rng,
                                    trace ? &trace->fusion : nullptr);
  return linear(fused, cls_weight_, cls_bias_);
}

template <typename Real>
std::vector<double> HanModel<Real>::logits(const SkeletonSequence& seq) const {
  Rng unused(0);
  const Tensor<Real> out = forward(std::span<const SkeletonSequence>(&seq, 1), false, unused);
  return std::vector<double>(out.data().begin(), out.data().end());
}

template <typename Real>
Prediction HanModel<Real>::predict(const SkeletonSequence& seq) const {
  return predict(std::span<const SkeletonSequence>(&seq, 1)).front();
}

template <typename Real>
std::vector<Prediction> HanModel<Real>::predict(std::span<const SkeletonSequence> batch) const {
  Rng unused(0);
  const Tensor<Real> out = forward(batch, false, unused);
  const std::size_t C = config_.class_count;
  std::vector<Prediction> preds;
  preds.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<double> row(out.data().begin() + b * C, out.data().begin() + (b + 1) * C);
    Prediction p;
    p.probabilities = softmax_probabilities(row);
    p.label = argmax(row);
    preds.push_back(std::move(p));
  }
  return preds;
}

template <typename Real>
AttentionExport HanModel<Real>::extract_attention(const SkeletonSequence& seq,
                                                  const AttentionSelector& sel) const {
  const std::size_t T = config_.frames;
  if ((sel.site == AttentionSite::Joint || sel.site == AttentionSite::Finger) && sel.frame >= T)
    throw UsageError("frame selector " + std::to_string(sel.frame) + " out of range");
  if (sel.site == AttentionSite::Joint && sel.part >= kPartCount)
    throw UsageError("part selector " + std::to_string(sel.part) + " out of range");
  if (sel.site == AttentionSite::Temporal && sel.stream >= kStreamCount)
    throw UsageError("stream selector " + std::to_string(sel.stream) + " out of range");

  Rng unused(0);
  ForwardTrace trace;
  forward(std::span<const SkeletonSequence>(&seq, 1), false, unused, &trace);

  AttentionExport out;
  out.site = sel.site;
  switch (sel.site) {
    case AttentionSite::Joint:
      out.per_head = trace.joint.size() == 1
                         ? trace.joint[0].segments.at(sel.frame * kPartCount + sel.part)
                         : trace.joint[sel.part].segments.at(sel.frame);
      break;
    case AttentionSite::Finger:
      out.per_head = trace.finger.segments.at(sel.frame);
      break;
    case AttentionSite::Temporal:
      out.per_head = trace.temporal.size() == 1 ? trace.temporal[0].segments.at(sel.stream)
                                                : trace.temporal[sel.stream].segments.at(0);
      break;
    case AttentionSite::Fusion:
      out.per_head = trace.fusion.segments.at(0);
      break;
  }
  out.head_mean = head_average(out.per_head);
  if (sel.site == AttentionSite::Temporal) out.frame_sums = column_sums(out.head_mean);
  return out;
}

template class HanModel<float>;
template class HanModel<double>;

}  // namespace han
