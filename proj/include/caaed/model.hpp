#pragma once

// Attention-based encoder-decoder with pluggable output-unit embeddings.
//
// Weight matrices are stored input-major ([in x out]) so that a row vector
// times the matrix gives the projection.

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "caaed/data.hpp"
#include "caaed/tensor.hpp"
#include "caaed/vocab.hpp"

namespace caaed {

enum class EmbeddingKind { Lookup, CharAware };

std::string to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(std::string_view text);

struct ModelConfig {
  std::size_t input_dim = 24;
  // Shared by encoder output, decoder state, attention space, conv channels
  // and unit embeddings.
  std::size_t hidden = 64;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t conv_taps = 15;
  std::size_t vocab_size = 0;
  EmbeddingKind embedding = EmbeddingKind::Lookup;
  std::size_t num_chars = 31;
  std::size_t char_embed_dim = 32;
  std::size_t char_rnn_layers = 2;

  void validate() const;
  // "key = value" lines, one per field.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Configurations with the published layer sizes: 240-dim stacked input,
// 512 hidden units, 15-tap location filter, 30 characters embedded in 256
// dimensions and a 2-layer character RNN.
ModelConfig paper_config(std::size_t vocab_size, std::size_t encoder_layers,
                         EmbeddingKind embedding);
inline constexpr std::size_t kPaperWordPieces = 29190;
inline constexpr std::size_t kPaperMixedUnits = 33755;

// ---------------------------------------------------------------------------
// Parameter accounting

std::size_t gru_parameter_count(std::size_t input, std::size_t hidden);

struct ParameterCounts {
  std::size_t encoder = 0;
  std::size_t attention = 0;
  std::size_t decoder = 0;
  std::size_t output = 0;
  std::size_t embedding = 0;

  std::size_t total() const {
    return encoder + attention + decoder + output + embedding;
  }
};

ParameterCounts count_parameters(const ModelConfig& config);

// (N_p(lookup) - N_p(char-aware)) / N_p(lookup) * 100 for two configs that
// differ only in the embedding provider.
double parameter_reduction_rate(const ParameterCounts& lookup,
                                const ParameterCounts& char_aware);

// ---------------------------------------------------------------------------

// Ordered, named learnable tensors.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name); }

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Per-call stochastic settings. Dropout is only active in train mode.
struct ForwardOptions {
  Mode mode = Mode::Eval;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(ParameterSet& params, const std::string& prefix, std::size_t input,
           std::size_t hidden);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }

  // [T x in] -> [T x 3h] input contributions including the bias.
  Tensor project(const Tensor& inputs) const;
  // One update from a precomputed input projection row.
  Tensor step_projected(const Tensor& projected, const Tensor& state) const;
  Tensor step(const Tensor& input, const Tensor& state) const;

  Tensor zero_state() const;

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  Tensor input_weight_;   // [in x 3h]: update, reset, candidate
  Tensor state_gates_;    // [h x 2h]: update, reset
  Tensor state_cand_;     // [h x h]
  Tensor bias_;           // [3h]
};

struct EncodedUtterance {
  Tensor features;  // H: [I x d_h]
  Tensor keys;      // H W_h, fixed per utterance
  std::size_t valid_length = 0;

  std::size_t frames() const { return features.rows(); }
};

struct AttentionOutput {
  Tensor weights;  // a_t: [I]
  Tensor context;  // g_t: [d_h]
};

class Attention {
 public:
  Attention() = default;
  Attention(ParameterSet& params, std::size_t dim, std::size_t taps);

  Tensor keys(const Tensor& encoded) const;
  AttentionOutput attend(const Tensor& state, const EncodedUtterance& enc,
                         const Tensor& previous) const;
  AttentionOutput attend(const Tensor& state, const Tensor& encoded,
                         const Tensor& previous,
                         std::size_t valid_length = 0) const;

  // Fixed identity projections; never learnable.
  const Tensor& encoder_projection() const { return w_h_; }
  const Tensor& state_projection() const { return w_s_; }
  const Tensor& location_projection() const { return w_f_; }

 private:
  Tensor score_;   // v [k]
  Tensor bias_;    // b_z [k]
  Tensor filter_;  // F [d_f x r]
  Tensor w_h_, w_s_, w_f_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Tensor embed(UnitId id) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t units() const = 0;
};

class LookupProvider : public EmbeddingProvider {
 public:
  explicit LookupProvider(Tensor table);
  LookupProvider(ParameterSet& params, std::size_t units, std::size_t dim);

  Tensor embed(UnitId id) const override;
  std::size_t dim() const override { return table_.cols(); }
  std::size_t units() const override { return table_.rows(); }
  const Tensor& table() const { return table_; }

 private:
  Tensor table_;
};

class CharAwareProvider : public EmbeddingProvider {
 public:
  CharAwareProvider(ParameterSet& params, const Vocab& vocab,
                    std::size_t num_chars, std::size_t char_dim,
                    std::size_t hidden, std::size_t layers);

  // Runs the character RNN from a zero state over the unit's characters and
  // returns the last top-layer state.
  Tensor embed(UnitId id) const override;
  std::size_t dim() const override { return hidden_; }
  std::size_t units() const override { return unit_chars_.size(); }

  // Top-layer state after each character of `chars`.
  std::vector<Tensor> prefix_states(const std::vector<CharId>& chars) const;

  // Table whose row u equals embed(u).
  LookupProvider precompute_table() const;

 private:
  std::vector<std::vector<CharId>> unit_chars_;
  std::size_t hidden_;
  Tensor char_table_;  // [n_chars x e]
  std::vector<GruLayer> rnn_;
};

struct DecoderState {
  std::vector<Tensor> layers;  // per-layer GRU states; back() is s_t
  Tensor attention;            // a_{t-1}
  Tensor context;              // g_{t-1}
};

struct StepOutput {
  Tensor logits;
  DecoderState state;
};

class Model {
 public:
  // Uniform(-a, a) weights with a = sqrt(1 / fan_in), zero biases, unit
  // layer-norm gains. Identical seeds give identical models.
  static Model create(const ModelConfig& config, const Vocab& vocab,
                      std::uint64_t seed);
  static Model load(const std::string& path, const Vocab& vocab);
  void save(const std::string& path) const;
  void write(std::ostream& os) const;
  static Model read(std::istream& is, const Vocab& vocab);

  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const Attention& attention() const { return attention_; }
  const EmbeddingProvider& provider() const { return *provider_; }
  const CharAwareProvider* char_aware() const;

  Tensor features_tensor(const FeatureMatrix& features) const;
  EncodedUtterance encode(const FeatureMatrix& features,
                          const ForwardOptions& opts = {}) const;
  EncodedUtterance encode(const Tensor& features,
                          const ForwardOptions& opts = {}) const;

  Tensor embed(UnitId id) const { return provider_->embed(id); }
  DecoderState initial_state(const EncodedUtterance& enc) const;
  StepOutput decode_step(const DecoderState& previous,
                         const Tensor& previous_embedding,
                         const EncodedUtterance& enc,
                         const ForwardOptions& opts = {}) const;

  // Encoder GRU of a given layer and direction (0 forward, 1 backward).
  GruLayer& encoder_gru(std::size_t layer, std::size_t direction);

 private:
  Model(ModelConfig config, const Vocab& vocab);
  void initialize(std::uint64_t seed);

  struct EncoderLayer {
    GruLayer forward;
    GruLayer backward;
    Tensor ln_gain;
    Tensor ln_bias;
  };

  ModelConfig config_;
  ParameterSet params_;
  std::vector<EncoderLayer> encoder_;
  Attention attention_;
  std::vector<GruLayer> decoder_;
  Tensor out_weight_;  // W_y [d_s x d_y]
  Tensor out_bias_;    // b_y [d_y]
  std::unique_ptr<EmbeddingProvider> provider_;
};

// Lowest id wins ties.
UnitId argmax(std::span<const double> values);

}  // namespace caaed
