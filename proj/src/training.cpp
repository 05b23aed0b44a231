#include "caaed/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>

#include "caaed/decoding.hpp"
#include "caaed/error.hpp"

namespace caaed {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(sampling_start >= 0.0 && sampling_end <= 0.4 &&
        sampling_start <= sampling_end)) {
    throw ConfigError("train: sampling schedule must satisfy 0 <= start <= end <= 0.4");
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("train: label_smoothing must be in [0, 1)");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("train: dropout must be in [0, 1)");
  }
  if (max_decode_len == 0) throw ConfigError("train: max_decode_len must be >= 1");
}

double sampling_probability(const TrainConfig& c, std::size_t epoch) {
  const std::size_t ramp =
      c.sampling_ramp_epochs ? c.sampling_ramp_epochs
                             : std::max<std::size_t>(1, c.epochs / 2);
  const double frac = std::min(1.0, static_cast<double>(epoch) /
                                        static_cast<double>(ramp));
  return std::min(c.sampling_end,
                  c.sampling_start + frac * (c.sampling_end - c.sampling_start));
}

Tensor smoothed_ce(const Tensor& logits, std::span<const UnitId> targets,
                   double eps, std::span<const std::uint8_t> mask) {
  if (!(eps >= 0.0 && eps < 1.0)) {
    throw ConfigError("smoothed_ce: smoothing mass must be in [0, 1), got " +
                      std::to_string(eps));
  }
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw DimensionError("smoothed_ce: logits " + shape_string(logits.shape()) +
                         " do not match " + std::to_string(targets.size()) +
                         " targets");
  }
  if (!mask.empty() && mask.size() != targets.size()) {
    throw DimensionError("smoothed_ce: mask length mismatch");
  }
  const std::size_t steps = logits.rows();
  const std::size_t units = logits.cols();
  if (units < 2 && eps > 0.0) {
    throw ConfigError("smoothed_ce: smoothing needs at least two units");
  }
  const double off = units > 1 ? eps / static_cast<double>(units - 1) : 0.0;
  std::vector<double> target(steps * units, 0.0);
  std::size_t real = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!mask.empty() && !mask[t]) continue;
    if (targets[t] >= units) {
      throw DataError("smoothed_ce: target id " + std::to_string(targets[t]) +
                      " out of range");
    }
    ++real;
    std::fill_n(target.begin() + t * units, units, off);
    target[t * units + targets[t]] = 1.0 - eps;
  }
  if (real == 0) throw DataError("smoothed_ce: no unmasked steps");
  Tensor weights = Tensor::from(logits.shape(), std::move(target));
  return scale(sum(mul(log_softmax(logits), weights)),
               -1.0 / static_cast<double>(real));
}

ForwardResult forward_utterance(const Model& model, const Utterance& utt,
                                double sampling_p, double label_smoothing,
                                const ForwardOptions& opts) {
  if (utt.labels.size() < 2 || utt.labels.front() != Vocab::kSos ||
      utt.labels.back() != Vocab::kEos) {
    throw DataError("forward: labels must be framed by <sos> and <eos>");
  }
  if (sampling_p > 0.0 && opts.rng == nullptr) {
    throw UsageError("forward: scheduled sampling needs an rng");
  }
  EncodedUtterance enc = model.encode(utt.features, opts);
  DecoderState state = model.initial_state(enc);

  // Embeddings depend only on the unit, so each distinct unit is computed
  // once per utterance and its gradient accumulates over uses.
  std::map<UnitId, Tensor> cache;
  auto embedding = [&](UnitId id) -> const Tensor& {
    auto it = cache.find(id);
    if (it == cache.end()) it = cache.emplace(id, model.embed(id)).first;
    return it->second;
  };

  const std::size_t steps = utt.labels.size() - 1;
  std::bernoulli_distribution use_prediction(std::clamp(sampling_p, 0.0, 1.0));
  ForwardResult out;
  std::vector<Tensor> rows;
  rows.reserve(steps);
  UnitId input = Vocab::kSos;
  for (std::size_t t = 0; t < steps; ++t) {
    out.inputs.push_back(input);
    StepOutput step = model.decode_step(state, embedding(input), enc, opts);
    state = std::move(step.state);
    rows.push_back(step.logits);
    input = utt.labels[t + 1];
    if (sampling_p > 0.0 && use_prediction(*opts.rng)) {
      input = argmax(rows.back().data());
    }
  }
  out.logits = stack_rows(rows);
  out.loss = smoothed_ce(out.logits,
                         std::span<const UnitId>(utt.labels).subspan(1),
                         label_smoothing);
  return out;
}

// ---------------------------------------------------------------------------

double global_grad_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double AdamOptimizer::step(ParameterSet& params) {
  if (m_.empty()) {
    for (const auto& [name, t] : params) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) {
    throw NumericError("optimizer: non-finite gradient norm");
  }
  const double clip = norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double update = config_.learning_rate * (m[i] / c1) /
                            (std::sqrt(v[i] / c2) + config_.adam_eps);
      w[i] -= update;
      if (precision() == Precision::Float32) {
        w[i] = static_cast<double>(static_cast<float>(w[i]));
      }
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------

std::string format_epoch(const EpochRecord& r, bool include_time) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.4f\t%.3f", r.epoch,
                r.train_loss, r.dev_loss, r.dev_wer, r.sampling_p,
                include_time ? r.seconds : 0.0);
  return buf;
}

double evaluate_loss(const Model& model, const std::vector<Utterance>& data,
                     double label_smoothing) {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t steps = 0;
  for (const Utterance& u : data) {
    ForwardResult r = forward_utterance(model, u, 0.0, label_smoothing, {});
    const std::size_t n = u.labels.size() - 1;
    total += r.loss.item() * static_cast<double>(n);
    steps += n;
  }
  return steps ? total / static_cast<double>(steps) : 0.0;
}

namespace {

double corpus_wer(const Model& model, const Vocab& vocab,
                  const std::vector<Utterance>& data, std::size_t max_len) {
  WerResult total;
  const auto hyps = decode_all(model, vocab, data, max_len);
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += wer(data[i].transcript, hyps[i].text);
  }
  return total.rate();
}

}  // namespace

TrainResult train(Model& model, const Vocab& vocab,
                  const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& dev_set,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  if (model.config().vocab_size != vocab.size()) {
    throw DataError("train: model and vocabulary disagree on unit count");
  }
  for (const auto* set : {&train_set, &dev_set}) {
    for (const Utterance& u : *set) {
      for (UnitId id : u.labels) {
        if (id >= vocab.size()) {
          throw DataError("train: label id " + std::to_string(id) +
                          " outside the vocabulary");
        }
      }
    }
  }

  std::mt19937_64 rng(config.seed);
  AdamOptimizer optimizer(config);
  ParameterSet& params = model.parameters();
  TrainResult result;
  result.best_dev_wer = std::numeric_limits<double>::infinity();
  double best_dev_loss = std::numeric_limits<double>::infinity();
  auto best = params.snapshot();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.sampling_p = sampling_probability(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t step_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      std::size_t batch_steps = 0;
      for (std::size_t k = b; k < e; ++k) {
        batch_steps += train_set[order[k]].labels.size() - 1;
      }
      params.zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const Utterance& u = train_set[order[k]];
        const std::size_t n = u.labels.size() - 1;
        Tape tape;
        ForwardOptions opts{Mode::Train, config.dropout, &rng};
        ForwardResult r = forward_utterance(model, u, rec.sampling_p,
                                            config.label_smoothing, opts);
        const double value = r.loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("train: non-finite loss at epoch " +
                             std::to_string(rec.epoch) + " on utterance " +
                             std::to_string(order[k]) + " ('" + u.transcript +
                             "')");
        }
        loss_sum += value * static_cast<double>(n);
        step_sum += n;
        // Weighted so the batch loss is the mean over all real decoder steps.
        tape.backward(scale(r.loss, static_cast<double>(n) /
                                        static_cast<double>(batch_steps)));
      }
      optimizer.step(params);
    }
    params.zero_grad();
    rec.train_loss = loss_sum / static_cast<double>(step_sum);
    if (!dev_set.empty()) {
      rec.dev_loss = evaluate_loss(model, dev_set, config.label_smoothing);
      rec.dev_wer = corpus_wer(model, vocab, dev_set, config.max_decode_len);
    }
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - started)
                      .count();
    result.epochs.push_back(rec);
    if (hooks.log != nullptr) {
      *hooks.log << format_epoch(rec, hooks.log_wall_time) << '\n';
      hooks.log->flush();
    }
    const bool improved =
        rec.dev_wer < result.best_dev_wer ||
        (rec.dev_wer == result.best_dev_wer && rec.dev_loss < best_dev_loss);
    if (improved) {
      result.best_dev_wer = rec.dev_wer;
      best_dev_loss = rec.dev_loss;
      result.best_epoch = rec.epoch;
      best = params.snapshot();
      if (!hooks.checkpoint_path.empty()) model.save(hooks.checkpoint_path);
    }
    if (hooks.stop_at_wer >= 0.0 && rec.dev_wer <= hooks.stop_at_wer) break;
  }
  params.restore(best);
  return result;
}

}  // namespace caaed
