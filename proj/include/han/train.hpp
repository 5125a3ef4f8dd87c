#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "han/model.hpp"
#include "han/skeleton.hpp"
#include "han/tensor.hpp"

namespace han {

// Mean over the batch of -log softmax(logits[b])[labels[b]], via log-sum-exp.
template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::span<const std::size_t> labels);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter moment buffers.
struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

// One bias-corrected Adam update of param in place. step is 1-based.
template <typename Real>
void adam_step(std::span<Real> param, std::span<const Real> grad, AdamMoments& moments,
               std::uint64_t step, double lr, const AdamConfig& config = {});

template <typename Real>
class Adam {
 public:
  Adam(std::vector<Tensor<Real>> params, AdamConfig config = {});

  // Applies one update from the accumulated grads; parameters without a grad
  // buffer are treated as having zero gradient.
  void step(double lr);
  void zero_grad();
  std::uint64_t step_count() const { return step_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }

 private:
  std::vector<Tensor<Real>> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t warmup_epochs = 5;
  std::size_t plateau_patience = 10;
  double decay_factor = 10.0;
  std::size_t max_decays = 4;
  std::size_t max_epochs = 1000;  // guard against a metric that keeps improving
  std::uint64_t seed = 0;
  bool augment = true;

  void validate() const;
};

// Linear warm-up, then divide by decay_factor whenever the monitored metric
// (higher is better) has not improved for plateau_patience epochs. The stop
// flag rises with the max_decays-th decay.
class LrSchedule {
 public:
  struct Update {
    double lr = 0;        // rate for the next epoch
    bool decayed = false;
    bool stop = false;
  };

  explicit LrSchedule(const TrainConfig& config);

  // Rate to use for the epoch about to run.
  double lr() const { return lr_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t decays() const { return decays_; }
  bool stopped() const { return stopped_; }

  Update end_epoch(double metric);

 private:
  TrainConfig config_;
  double lr_;
  std::size_t epoch_ = 0;
  std::size_t decays_ = 0;
  std::size_t stale_ = 0;
  std::optional<double> best_;
  bool stopped_ = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  std::optional<double> val_accuracy;
  std::size_t decays = 0;
};

// "epoch,lr,train_loss,val_acc,decays" with val_acc "nan" when there is no
// validation split.
std::string format_log_line(const EpochLog& entry);

struct EvalReport {
  double accuracy = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t total = 0;
};

// Deterministic eval-mode accuracy over sequences sampled to the model's
// frame count.
EvalReport evaluate(const HanModel<float>& model, std::span<const SkeletonSequence> data,
                    std::size_t batch_size = 64);

// CSV with a header row of class labels and one row per true class.
void write_confusion_csv(std::ostream& out, const EvalReport& report);

struct TrainResult {
  std::vector<EpochLog> log;
  std::optional<double> final_val_accuracy;
  double first_batch_loss = 0;
  bool stopped_by_schedule = false;
};

struct TrainOptions {
  TrainConfig train;
  AugmentationConfig augmentation;
  // Wrist-centre every sequence before sampling.
  std::optional<std::size_t> center_joint;
  std::function<void(const EpochLog&)> on_epoch;
};

// Shuffled mini-batches of augment -> sample -> forward -> loss -> backward
// -> Adam until the schedule stops. Stagnation is judged on validation
// accuracy when val is non-empty, else on negated training loss.
TrainResult train(HanModel<float>& model, std::span<const SkeletonSequence> train_set,
                  std::span<const SkeletonSequence> val_set, const TrainOptions& options);

// Eval-time preprocessing shared by training validation and the CLI.
SkeletonSequence prepare_for_eval(const SkeletonSequence& seq, std::size_t frames,
                                  std::optional<std::size_t> center_joint = std::nullopt);

}  // namespace han
