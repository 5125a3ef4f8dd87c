#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "han/attention.hpp"
#include "han/skeleton.hpp"
#include "han/tensor.hpp"

namespace han {

// Which sites add their position embedding before attention.
struct PositionEmbeddingToggles {
  bool joint = true;
  bool finger = true;
  bool temporal = true;
  bool fusion = true;

  static PositionEmbeddingToggles all_off() { return {false, false, false, false}; }
};

struct HanConfig {
  AttentionConfig attention;
  std::size_t frames = 8;
  std::size_t class_count = 14;
  std::size_t joint_count = 22;
  HandPartition partition = HandPartition::shrec22();
  PositionEmbeddingToggles pe;
  bool share_j_att = true;
  bool share_t_att = true;

  void validate() const;
};

enum class AttentionSite { Joint, Finger, Temporal, Fusion };

AttentionSite parse_site(const std::string& name);
std::string site_name(AttentionSite site);

struct AttentionExport {
  AttentionSite site = AttentionSite::Fusion;
  std::vector<DenseMatrix> per_head;
  DenseMatrix head_mean;
  // Temporal site only: column sums of head_mean, one per frame.
  std::vector<double> frame_sums;
};

struct AttentionSelector {
  AttentionSite site = AttentionSite::Fusion;
  std::size_t frame = 0;   // Joint, Finger
  std::size_t part = 0;    // Joint
  std::size_t stream = 0;  // Temporal; 6 selects the whole-hand stream
};

// Attention weights of every block invocation in one forward pass.
struct ForwardTrace {
  std::vector<AttentionCapture> joint;     // one capture, or one per part when unshared
  AttentionCapture finger;
  std::vector<AttentionCapture> temporal;  // one capture, or one per stream when unshared
  AttentionCapture fusion;
};

template <typename Real>
struct NamedParameter {
  std::string name;
  Tensor<Real> tensor;
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);
std::vector<double> softmax_probabilities(std::span<const double> logits);

template <typename Real>
class HanModel {
 public:
  // Parameters drawn from the "init" stream of seed.
  static HanModel create(const HanConfig& config, std::uint64_t seed);

  const HanConfig& config() const { return config_; }
  const std::vector<NamedParameter<Real>>& parameters() const { return registry_; }
  std::size_t parameter_count() const;
  Tensor<Real> parameter(const std::string& name) const;

  const Tensor<Real>& joint_weight() const { return joint_weight_; }
  const Tensor<Real>& joint_bias() const { return joint_bias_; }
  const AttentionParams<Real>& j_att(std::size_t part) const;
  const AttentionParams<Real>& f_att() const { return f_att_; }
  const AttentionParams<Real>& t_att(std::size_t stream) const;
  const AttentionParams<Real>& fusion_att() const { return fusion_att_; }
  const Tensor<Real>& classifier_weight() const { return cls_weight_; }
  const Tensor<Real>& classifier_bias() const { return cls_bias_; }

  // Logits (batch x classes) for sequences already sampled to config().frames.
  Tensor<Real> forward(std::span<const SkeletonSequence> batch, bool training, Rng& rng,
                       ForwardTrace* trace = nullptr) const;
  std::vector<double> logits(const SkeletonSequence& seq) const;
  Prediction predict(const SkeletonSequence& seq) const;
  std::vector<Prediction> predict(std::span<const SkeletonSequence> batch) const;
  AttentionExport extract_attention(const SkeletonSequence& seq,
                                    const AttentionSelector& selector) const;

 private:
  explicit HanModel(HanConfig config);
  void register_parameters();
  void check_batch(std::span<const SkeletonSequence> batch) const;

  HanConfig config_;
  Tensor<Real> joint_weight_;  // d_model x 3
  Tensor<Real> joint_bias_;    // d_model
  std::vector<AttentionParams<Real>> j_att_;
  AttentionParams<Real> f_att_;
  std::vector<AttentionParams<Real>> t_att_;
  AttentionParams<Real> fusion_att_;
  Tensor<Real> cls_weight_;  // classes x d_model
  Tensor<Real> cls_bias_;
  std::vector<NamedParameter<Real>> registry_;
  std::shared_ptr<const PositionEmbeddingTable> pe_table_;
};

}  // namespace han
