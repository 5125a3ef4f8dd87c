#include "han/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "han/error.hpp"
#include "han/ops.hpp"

namespace han {

template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be batch x classes");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  if (labels.size() != B)
    throw UsageError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(B));
  for (std::size_t y : labels)
    if (y >= C)
      throw UsageError("cross_entropy: label " + std::to_string(y) + " not below " +
                       std::to_string(C) + " classes");

  const Real* z = logits.data().data();
  std::vector<Real> probs(B * C);
  Real total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const Real* row = z + b * C;
    const Real peak = *std::max_element(row, row + C);
    Real s = 0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - peak);
    const Real lse = peak + std::log(s);
    for (std::size_t c = 0; c < C; ++c) probs[b * C + c] = std::exp(row[c] - lse);
    total += lse - row[labels[b]];
  }
  Tensor<Real> loss = Tensor<Real>::scalar(total / static_cast<Real>(B));
  if (detail::should_record<Real>({&logits})) {
    std::vector<std::size_t> ys(labels.begin(), labels.end());
    detail::record<Real>("cross_entropy", loss,
                         [logits, loss, B, C, probs = std::move(probs), ys = std::move(ys)]() mutable {
      const Real g = loss.grad()[0] / static_cast<Real>(B);
      auto acc = logits.grad_accumulator();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          acc[b * C + c] += g * (probs[b * C + c] - (c == ys[b] ? Real(1) : Real(0)));
    });
  }
  return loss;
}

template <typename Real>
void adam_step(std::span<Real> param, std::span<const Real> grad, AdamMoments& moments,
               std::uint64_t step, double lr, const AdamConfig& config) {
  if (grad.size() != param.size())
    throw UsageError("adam_step: gradient length " + std::to_string(grad.size()) +
                     " does not match parameter length " + std::to_string(param.size()));
  if (step == 0) throw UsageError("adam_step: step counter is 1-based");
  if (moments.first.empty()) {
    moments.first.assign(param.size(), 0.0);
    moments.second.assign(param.size(), 0.0);
  }
  if (moments.first.size() != param.size())
    throw UsageError("adam_step: moment buffers do not match parameter length");
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double update = lr * (m / c1) / (std::sqrt(v / c2) + config.eps);
    param[i] = static_cast<Real>(static_cast<double>(param[i]) - update);
  }
}

template <typename Real>
Adam<Real>::Adam(std::vector<Tensor<Real>> params, AdamConfig config)
    : params_(std::move(params)), moments_(params_.size()), config_(config) {}

template <typename Real>
void Adam<Real>::step(double lr) {
  ++step_;
  std::vector<Real> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    std::span<const Real> g = p.grad();
    if (g.empty()) {
      zeros.assign(p.size(), Real(0));
      g = zeros;
    }
    adam_step<Real>(p.mutable_data(), g, moments_[i], step_, lr, config_);
  }
}

template <typename Real>
void Adam<Real>::zero_grad() {
  for (auto& p : params_) p.clear_grad();
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(decay_factor > 1.0)) throw ConfigError("decay_factor must exceed 1");
  if (max_decays < 1) throw ConfigError("max_decays must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
}

LrSchedule::LrSchedule(const TrainConfig& config) : config_(config) {
  config_.validate();
  lr_ = config_.warmup_epochs > 0 ? config_.lr / static_cast<double>(config_.warmup_epochs)
                                  : config_.lr;
}

LrSchedule::Update LrSchedule::end_epoch(double metric) {
  Update u;
  if (stopped_) {
    u.lr = lr_;
    u.stop = true;
    return u;
  }
  const bool improved = !best_ || metric > *best_;
  if (improved) best_ = metric;
  const bool in_warmup = epoch_ < config_.warmup_epochs;
  ++epoch_;
  if (epoch_ < config_.warmup_epochs) {
    lr_ = config_.lr * static_cast<double>(epoch_ + 1) / static_cast<double>(config_.warmup_epochs);
  } else if (epoch_ == config_.warmup_epochs) {
    lr_ = config_.lr;
  }
  if (!in_warmup) {
    stale_ = improved ? 0 : stale_ + 1;
    if (stale_ >= config_.plateau_patience) {
      stale_ = 0;
      lr_ /= config_.decay_factor;
      ++decays_;
      u.decayed = true;
      if (decays_ >= config_.max_decays) stopped_ = true;
    }
  }
  u.lr = lr_;
  u.stop = stopped_;
  return u;
}

std::string format_log_line(const EpochLog& e) {
  std::ostringstream out;
  out.precision(9);
  out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',';
  if (e.val_accuracy)
    out << *e.val_accuracy;
  else
    out << "nan";
  out << ',' << e.decays;
  return out.str();
}

SkeletonSequence prepare_for_eval(const SkeletonSequence& seq, std::size_t frames,
                                  std::optional<std::size_t> center_joint) {
  if (center_joint) return uniform_sample(center_on_joint(seq, *center_joint), frames);
  return uniform_sample(seq, frames);
}

EvalReport evaluate(const HanModel<float>& model, std::span<const SkeletonSequence> data,
                    std::size_t batch_size) {
  const std::size_t C = model.config().class_count;
  EvalReport report;
  report.confusion.assign(C, std::vector<std::size_t>(C, 0));
  report.per_class_accuracy.assign(C, 0.0);
  report.total = data.size();
  std::vector<SkeletonSequence> batch;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(uniform_sample(data[i], model.config().frames));
    const auto preds = model.predict(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i].label >= C) throw DataError("label beyond model class count");
      ++report.confusion[batch[i].label][preds[i].label];
    }
  }
  std::size_t correct = 0;
  for (std::size_t c = 0; c < C; ++c) {
    correct += report.confusion[c][c];
    const std::size_t row = std::accumulate(report.confusion[c].begin(), report.confusion[c].end(),
                                            std::size_t{0});
    report.per_class_accuracy[c] = row ? static_cast<double>(report.confusion[c][c]) / row : 0.0;
  }
  report.accuracy = report.total ? static_cast<double>(correct) / report.total : 0.0;
  return report;
}

void write_confusion_csv(std::ostream& out, const EvalReport& report) {
  const std::size_t C = report.confusion.size();
  out << "true\\pred";
  for (std::size_t c = 0; c < C; ++c) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < C; ++r) {
    out << r;
    for (std::size_t c = 0; c < C; ++c) out << ',' << report.confusion[r][c];
    out << '\n';
  }
}

TrainResult train(HanModel<float>& model, std::span<const SkeletonSequence> train_set,
                  std::span<const SkeletonSequence> val_set, const TrainOptions& options) {
  const TrainConfig& cfg = options.train;
  cfg.validate();
  options.augmentation.validate();
  if (train_set.empty()) throw UsageError("training split is empty");
  const std::size_t frames = model.config().frames;

  std::vector<SkeletonSequence> val;
  val.reserve(val_set.size());
  for (const auto& s : val_set) val.push_back(prepare_for_eval(s, frames, options.center_joint));

  std::vector<Tensor<float>> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  Adam<float> adam(params);
  LrSchedule schedule(cfg);
  TrainResult result;

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::vector<SkeletonSequence> batch;
  std::vector<std::size_t> labels;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = schedule.lr();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::named(cfg.seed, "shuffle", {epoch});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        SkeletonSequence s = train_set[idx];
        if (options.center_joint) s = center_on_joint(s, *options.center_joint);
        if (cfg.augment) {
          Rng aug = Rng::named(cfg.seed, "augment", {idx, epoch});
          s = augment(s, options.augmentation, aug);
        }
        batch.push_back(uniform_sample(s, frames));
        labels.push_back(batch.back().label);
      }
      Tape<float> tape;
      TapeScope<float> scope(tape);
      Rng drop = Rng::named(cfg.seed, "dropout", {epoch, batch_index});
      const Tensor<float> logits = model.forward(batch, true, drop);
      const Tensor<float> loss = cross_entropy(logits, labels);
      if (epoch == 0 && batch_index == 0) result.first_batch_loss = loss.item();
      if (!std::isfinite(loss.item())) throw Error("training diverged: non-finite loss");
      tape.backward(loss);
      adam.step(lr);
      adam.zero_grad();
      tape.reset();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(end - start);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = loss_sum / static_cast<double>(n);
    if (!val.empty()) entry.val_accuracy = evaluate(model, val).accuracy;
    const double metric = entry.val_accuracy ? *entry.val_accuracy : -entry.train_loss;
    const auto update = schedule.end_epoch(metric);
    entry.decays = schedule.decays();
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    if (update.stop) {
      result.stopped_by_schedule = true;
      break;
    }
  }
  if (!result.log.empty()) result.final_val_accuracy = result.log.back().val_accuracy;
  return result;
}

template Tensor<float> cross_entropy(const Tensor<float>&, std::span<const std::size_t>);
template Tensor<double> cross_entropy(const Tensor<double>&, std::span<const std::size_t>);
template void adam_step<float>(std::span<float>, std::span<const float>, AdamMoments&,
                               std::uint64_t, double, const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamMoments&,
                                std::uint64_t, double, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace han
