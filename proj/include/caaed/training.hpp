#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "caaed/data.hpp"
#include "caaed/model.hpp"

namespace caaed {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  double sampling_start = 0.0;
  double sampling_end = 0.4;
  // Epochs over which the sampling probability ramps; 0 means epochs / 2.
  std::size_t sampling_ramp_epochs = 0;
  double label_smoothing = 0.1;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  std::size_t max_decode_len = 200;

  void validate() const;
};

// Linear ramp from sampling_start to sampling_end, clamped at the end value.
// `epoch` is zero-based.
double sampling_probability(const TrainConfig& config, std::size_t epoch);

// Label-smoothed cross-entropy: per step the target distribution puts
// 1 - eps on the reference and eps / (d_y - 1) on every other unit; the loss
// is the mean over steps whose mask entry is set (all steps if mask empty).
Tensor smoothed_ce(const Tensor& logits, std::span<const UnitId> targets,
                   double eps, std::span<const std::uint8_t> mask = {});

struct ForwardResult {
  Tensor logits;  // [T x d_y]
  Tensor loss;
  std::vector<UnitId> inputs;  // unit fed at each step
};

// Encodes the utterance then runs one decoder step per label after <sos>.
// With probability `sampling_p` (independently per step after the first)
// the previous step's argmax replaces the reference as the next input.
ForwardResult forward_utterance(const Model& model, const Utterance& utt,
                                double sampling_p, double label_smoothing,
                                const ForwardOptions& opts);

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const TrainConfig& config) : config_(config) {}

  // Returns the global gradient norm before clipping.
  double step(ParameterSet& params);
  std::size_t steps() const { return t_; }

 private:
  TrainConfig config_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double global_grad_norm(const ParameterSet& params);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_wer = 0.0;
  double sampling_p = 0.0;
  double seconds = 0.0;
};

// epoch, train loss, dev loss, dev WER, sampling p, wall time (tab-separated).
std::string format_epoch(const EpochRecord& r, bool include_time = true);

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_dev_wer = 1.0;
};

struct TrainHooks {
  std::ostream* log = nullptr;
  // Written whenever the dev WER improves.
  std::string checkpoint_path;
  bool log_wall_time = true;
  // Stop once the dev WER reaches this value (negative: never).
  double stop_at_wer = -1.0;
};

// Mini-batch training with global-norm clipping. The batch order is a
// seeded shuffle, so runs are reproducible. The model ends up holding the
// parameters of the best dev epoch.
TrainResult train(Model& model, const Vocab& vocab,
                  const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& dev_set,
                  const TrainConfig& config, const TrainHooks& hooks = {});

// Teacher-forced eval-mode loss averaged over decoder steps.
double evaluate_loss(const Model& model, const std::vector<Utterance>& data,
                     double label_smoothing);

}  // namespace caaed
