#include "caaed/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "caaed/error.hpp"

namespace caaed {

std::string to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::Lookup ? "lookup" : "char-aware";
}

EmbeddingKind parse_embedding_kind(std::string_view text) {
  if (text == "lookup") return EmbeddingKind::Lookup;
  if (text == "char-aware") return EmbeddingKind::CharAware;
  throw ConfigError("unknown embedding provider '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model: ") + name + " must be positive");
  };
  positive(input_dim, "input_dim");
  positive(hidden, "hidden");
  positive(encoder_layers, "encoder_layers");
  positive(decoder_layers, "decoder_layers");
  positive(vocab_size, "vocab_size");
  if (hidden < 2) throw ConfigError("model: hidden must be >= 2 for layer norm");
  if (conv_taps % 2 == 0) {
    throw ConfigError("model: conv_taps must be odd, got " +
                      std::to_string(conv_taps));
  }
  if (embedding == EmbeddingKind::CharAware) {
    positive(num_chars, "num_chars");
    positive(char_embed_dim, "char_embed_dim");
    positive(char_rnn_layers, "char_rnn_layers");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "input_dim = " << input_dim << '\n'
     << "hidden = " << hidden << '\n'
     << "encoder_layers = " << encoder_layers << '\n'
     << "decoder_layers = " << decoder_layers << '\n'
     << "conv_taps = " << conv_taps << '\n'
     << "vocab_size = " << vocab_size << '\n'
     << "embedding = " << to_string(embedding) << '\n'
     << "num_chars = " << num_chars << '\n'
     << "char_embed_dim = " << char_embed_dim << '\n'
     << "char_rnn_layers = " << char_rnn_layers << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find(" = ");
    if (eq == std::string::npos) throw DataError("model config: bad line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    auto num = [&]() -> std::size_t {
      try {
        std::size_t pos = 0;
        auto v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw DataError("model config: bad value for " + key);
      }
    };
    if (key == "input_dim") c.input_dim = num();
    else if (key == "hidden") c.hidden = num();
    else if (key == "encoder_layers") c.encoder_layers = num();
    else if (key == "decoder_layers") c.decoder_layers = num();
    else if (key == "conv_taps") c.conv_taps = num();
    else if (key == "vocab_size") c.vocab_size = num();
    else if (key == "embedding") c.embedding = parse_embedding_kind(value);
    else if (key == "num_chars") c.num_chars = num();
    else if (key == "char_embed_dim") c.char_embed_dim = num();
    else if (key == "char_rnn_layers") c.char_rnn_layers = num();
    else throw DataError("model config: unknown key '" + key + "'");
  }
  return c;
}

ModelConfig paper_config(std::size_t vocab_size, std::size_t encoder_layers,
                         EmbeddingKind embedding) {
  ModelConfig c;
  c.input_dim = 240;
  c.hidden = 512;
  c.encoder_layers = encoder_layers;
  c.decoder_layers = 2;
  c.conv_taps = 15;
  c.vocab_size = vocab_size;
  c.embedding = embedding;
  c.num_chars = 30;
  c.char_embed_dim = 256;
  c.char_rnn_layers = 2;
  return c;
}

// ---------------------------------------------------------------------------
// Accounting

std::size_t gru_parameter_count(std::size_t input, std::size_t hidden) {
  return 3 * (hidden * (input + hidden) + hidden);
}

ParameterCounts count_parameters(const ModelConfig& c) {
  ParameterCounts n;
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::size_t in = l == 0 ? c.input_dim : c.hidden;
    n.encoder += 2 * gru_parameter_count(in, c.hidden) + 2 * c.hidden;
  }
  n.attention = c.hidden + c.hidden + c.hidden * c.conv_taps;
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    n.decoder += gru_parameter_count(c.hidden, c.hidden);
  }
  n.output = c.vocab_size * c.hidden + c.vocab_size;
  if (c.embedding == EmbeddingKind::Lookup) {
    n.embedding = c.vocab_size * c.hidden;
  } else {
    n.embedding = c.num_chars * c.char_embed_dim;
    for (std::size_t l = 0; l < c.char_rnn_layers; ++l) {
      n.embedding += gru_parameter_count(l == 0 ? c.char_embed_dim : c.hidden,
                                         c.hidden);
    }
  }
  return n;
}

double parameter_reduction_rate(const ParameterCounts& lookup,
                                const ParameterCounts& char_aware) {
  const double a = static_cast<double>(lookup.total());
  const double b = static_cast<double>(char_aware.total());
  return (a - b) / a * 100.0;
}

// ---------------------------------------------------------------------------

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw UsageError("duplicate parameter " + name);
  t.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter " + name);
  return entries_[it->second].second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter " + name);
  return entries_[it->second].second;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

std::vector<std::vector<double>> ParameterSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t.to_vector());
  return out;
}

void ParameterSet::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) {
    throw UsageError("parameter snapshot size mismatch");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].second.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------
// GRU

GruLayer::GruLayer(ParameterSet& params, const std::string& prefix,
                   std::size_t input, std::size_t hidden)
    : input_(input), hidden_(hidden) {
  input_weight_ = params.add(prefix + ".input_weight",
                             Tensor::zeros({input, 3 * hidden}));
  state_gates_ = params.add(prefix + ".state_gates",
                            Tensor::zeros({hidden, 2 * hidden}));
  state_cand_ = params.add(prefix + ".state_candidate",
                           Tensor::zeros({hidden, hidden}));
  bias_ = params.add(prefix + ".bias", Tensor::zeros({3 * hidden}));
}

Tensor GruLayer::project(const Tensor& inputs) const {
  return add_row(matmul(inputs, input_weight_), bias_);
}

Tensor GruLayer::step_projected(const Tensor& projected,
                                const Tensor& state) const {
  const std::size_t h = hidden_;
  Tensor gates = sigmoid(add(slice(projected, 0, 2 * h),
                             matmul(state, state_gates_)));
  Tensor update = slice(gates, 0, h);
  Tensor reset = slice(gates, h, h);
  Tensor candidate = tanh(add(slice(projected, 2 * h, h),
                              matmul(mul(reset, state), state_cand_)));
  // h' = (1 - z) * n + z * h
  return add(candidate, mul(update, sub(state, candidate)));
}

Tensor GruLayer::step(const Tensor& input, const Tensor& state) const {
  return step_projected(add(matmul(input, input_weight_), bias_), state);
}

Tensor GruLayer::zero_state() const { return Tensor::zeros({hidden_}); }

// ---------------------------------------------------------------------------
// Attention

Attention::Attention(ParameterSet& params, std::size_t dim, std::size_t taps) {
  score_ = params.add("attention.score", Tensor::zeros({dim}));
  bias_ = params.add("attention.bias", Tensor::zeros({dim}));
  filter_ = params.add("attention.filter", Tensor::zeros({dim, taps}));
  w_h_ = Tensor::identity(dim);
  w_s_ = Tensor::identity(dim);
  w_f_ = Tensor::identity(dim);
}

Tensor Attention::keys(const Tensor& encoded) const {
  return matmul(encoded, w_h_);
}

AttentionOutput Attention::attend(const Tensor& state,
                                  const EncodedUtterance& enc,
                                  const Tensor& previous) const {
  const std::size_t frames = enc.frames();
  if (previous.rank() != 1 || previous.size() != frames) {
    throw DimensionError("attend: previous attention has shape " +
                         shape_string(previous.shape()) + ", expected [" +
                         std::to_string(frames) + "]");
  }
  Tensor location = matmul(conv1d_same(previous, filter_), w_f_);
  Tensor query = add(matmul(state, w_s_), bias_);
  Tensor energies = relu(add_row(add(enc.keys, location), query));
  Tensor weights = softmax(matmul(energies, score_), enc.valid_length);
  Tensor context = matmul(weights, enc.features);
  return {weights, context};
}

AttentionOutput Attention::attend(const Tensor& state, const Tensor& encoded,
                                  const Tensor& previous,
                                  std::size_t valid_length) const {
  EncodedUtterance enc{encoded, keys(encoded), valid_length};
  return attend(state, enc, previous);
}

// ---------------------------------------------------------------------------
// Embedding providers

LookupProvider::LookupProvider(Tensor table) : table_(std::move(table)) {}

LookupProvider::LookupProvider(ParameterSet& params, std::size_t units,
                               std::size_t dim)
    : table_(params.add("embedding.table", Tensor::zeros({units, dim}))) {}

Tensor LookupProvider::embed(UnitId id) const {
  if (id >= table_.rows()) {
    throw DataError("embed: unit id " + std::to_string(id) + " out of range");
  }
  return row(table_, id);
}

CharAwareProvider::CharAwareProvider(ParameterSet& params, const Vocab& vocab,
                                     std::size_t num_chars,
                                     std::size_t char_dim, std::size_t hidden,
                                     std::size_t layers)
    : hidden_(hidden) {
  for (UnitId id = 0; id < vocab.size(); ++id) {
    unit_chars_.push_back(vocab.char_ids(id));
    for (CharId c : unit_chars_.back()) {
      if (c >= num_chars) {
        throw ConfigError("char-aware embedding: character id " +
                          std::to_string(c) + " exceeds num_chars " +
                          std::to_string(num_chars));
      }
    }
  }
  char_table_ =
      params.add("embedding.chars", Tensor::zeros({num_chars, char_dim}));
  for (std::size_t l = 0; l < layers; ++l) {
    rnn_.emplace_back(params, "embedding.rnn." + std::to_string(l),
                      l == 0 ? char_dim : hidden, hidden);
  }
}

std::vector<Tensor> CharAwareProvider::prefix_states(
    const std::vector<CharId>& chars) const {
  std::vector<Tensor> state;
  for (const GruLayer& g : rnn_) state.push_back(g.zero_state());
  std::vector<Tensor> out;
  for (CharId c : chars) {
    Tensor x = row(char_table_, c);
    for (std::size_t l = 0; l < rnn_.size(); ++l) {
      state[l] = rnn_[l].step(x, state[l]);
      x = state[l];
    }
    out.push_back(x);
  }
  return out;
}

Tensor CharAwareProvider::embed(UnitId id) const {
  if (id >= unit_chars_.size()) {
    throw DataError("embed: unit id " + std::to_string(id) + " out of range");
  }
  // A fresh zero state per unit: nothing carries over between units.
  return prefix_states(unit_chars_[id]).back();
}

LookupProvider CharAwareProvider::precompute_table() const {
  NoGradGuard no_grad;
  std::vector<Tensor> rows;
  rows.reserve(unit_chars_.size());
  for (UnitId id = 0; id < unit_chars_.size(); ++id) rows.push_back(embed(id));
  return LookupProvider(stack_rows(rows));
}

// ---------------------------------------------------------------------------
// Model

UnitId argmax(std::span<const double> values) {
  return static_cast<UnitId>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

Model::Model(ModelConfig config, const Vocab& vocab) : config_(config) {
  config_.validate();
  if (config_.vocab_size != vocab.size()) {
    throw DataError("model/vocab mismatch: model has " +
                    std::to_string(config_.vocab_size) +
                    " units, vocabulary has " + std::to_string(vocab.size()));
  }
  const std::size_t h = config_.hidden;
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    const std::size_t in = l == 0 ? config_.input_dim : h;
    EncoderLayer layer;
    layer.forward = GruLayer(params_, p + ".forward", in, h);
    layer.backward = GruLayer(params_, p + ".backward", in, h);
    layer.ln_gain = params_.add(p + ".ln_gain", Tensor::zeros({h}));
    layer.ln_bias = params_.add(p + ".ln_bias", Tensor::zeros({h}));
    encoder_.push_back(std::move(layer));
  }
  attention_ = Attention(params_, h, config_.conv_taps);
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    decoder_.emplace_back(params_, "decoder." + std::to_string(l), h, h);
  }
  out_weight_ = params_.add("output.weight", Tensor::zeros({h, config_.vocab_size}));
  out_bias_ = params_.add("output.bias", Tensor::zeros({config_.vocab_size}));
  if (config_.embedding == EmbeddingKind::Lookup) {
    provider_ = std::make_unique<LookupProvider>(params_, config_.vocab_size, h);
  } else {
    provider_ = std::make_unique<CharAwareProvider>(
        params_, vocab, config_.num_chars, config_.char_embed_dim, h,
        config_.char_rnn_layers);
  }
}

Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void Model::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : params_) {
    auto values = t.mutable_data();
    if (ends_with(name, "ln_gain")) {
      std::fill(values.begin(), values.end(), 1.0);
      continue;
    }
    if (ends_with(name, "bias")) {
      std::fill(values.begin(), values.end(), 0.0);
      continue;
    }
    // Fan-in is the input side of the map: rows of an [in x out] matrix,
    // the taps of a convolution filter, the length of a scoring vector.
    std::size_t fan_in = t.rank() == 2 ? t.rows() : t.size();
    if (name == "attention.filter") fan_in = t.cols();
    const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& v : values) {
      v = dist(rng);
      if (precision() == Precision::Float32) {
        v = static_cast<double>(static_cast<float>(v));
      }
    }
  }
}

Model Model::create(const ModelConfig& config, const Vocab& vocab,
                    std::uint64_t seed) {
  Model m(config, vocab);
  m.initialize(seed);
  return m;
}

const CharAwareProvider* Model::char_aware() const {
  return dynamic_cast<const CharAwareProvider*>(provider_.get());
}

GruLayer& Model::encoder_gru(std::size_t layer, std::size_t direction) {
  EncoderLayer& l = encoder_.at(layer);
  return direction == 0 ? l.forward : l.backward;
}

Tensor Model::features_tensor(const FeatureMatrix& features) const {
  if (features.cols != config_.input_dim) {
    throw ConfigError("encode: feature dimension " +
                      std::to_string(features.cols) +
                      " does not match model input_dim " +
                      std::to_string(config_.input_dim));
  }
  if (features.rows < 1) throw DataError("encode: no frames");
  return Tensor::from({features.rows, features.cols},
                      std::vector<double>(features.values.begin(),
                                          features.values.end()));
}

EncodedUtterance Model::encode(const FeatureMatrix& features,
                               const ForwardOptions& opts) const {
  return encode(features_tensor(features), opts);
}

EncodedUtterance Model::encode(const Tensor& features,
                               const ForwardOptions& opts) const {
  if (features.rank() != 2 || features.cols() != config_.input_dim) {
    throw ConfigError("encode: expected [I x " +
                      std::to_string(config_.input_dim) + "] features, got " +
                      shape_string(features.shape()));
  }
  if (opts.mode == Mode::Train && opts.dropout > 0.0 && opts.rng == nullptr) {
    throw UsageError("encode: train-mode dropout needs an rng");
  }
  const std::size_t frames = features.rows();
  Tensor x = features;
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const EncoderLayer& layer = encoder_[l];
    if (l > 0 && opts.mode == Mode::Train && opts.dropout > 0.0) {
      x = dropout(x, opts.dropout, opts.mode, *opts.rng);
    }
    Tensor fwd_in = layer.forward.project(x);
    Tensor bwd_in = layer.backward.project(x);
    std::vector<Tensor> fwd(frames), bwd(frames);
    Tensor state = layer.forward.zero_state();
    for (std::size_t i = 0; i < frames; ++i) {
      state = layer.forward.step_projected(row(fwd_in, i), state);
      fwd[i] = state;
    }
    state = layer.backward.zero_state();
    for (std::size_t i = frames; i-- > 0;) {
      state = layer.backward.step_projected(row(bwd_in, i), state);
      bwd[i] = state;
    }
    std::vector<Tensor> summed(frames);
    for (std::size_t i = 0; i < frames; ++i) summed[i] = add(fwd[i], bwd[i]);
    x = layer_norm(stack_rows(summed), layer.ln_gain, layer.ln_bias);
  }
  return EncodedUtterance{x, attention_.keys(x), frames};
}

DecoderState Model::initial_state(const EncodedUtterance& enc) const {
  DecoderState s;
  for (const GruLayer& g : decoder_) s.layers.push_back(g.zero_state());
  const std::size_t valid = enc.valid_length ? enc.valid_length : enc.frames();
  std::vector<double> uniform(enc.frames(), 0.0);
  std::fill_n(uniform.begin(), valid, 1.0 / static_cast<double>(valid));
  s.attention = Tensor::from({enc.frames()}, std::move(uniform));
  s.context = Tensor::zeros({config_.hidden});
  return s;
}

StepOutput Model::decode_step(const DecoderState& previous,
                              const Tensor& previous_embedding,
                              const EncodedUtterance& enc,
                              const ForwardOptions& opts) const {
  if (previous.layers.size() != decoder_.size() ||
      previous_embedding.shape() != Shape{config_.hidden}) {
    throw ConfigError("decode_step: state or embedding does not match config");
  }
  if (opts.mode == Mode::Train && opts.dropout > 0.0 && opts.rng == nullptr) {
    throw UsageError("decode_step: train-mode dropout needs an rng");
  }
  const bool drop = opts.mode == Mode::Train && opts.dropout > 0.0;
  StepOutput out;
  Tensor x = add(previous_embedding, previous.context);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    if (l > 0 && drop) x = dropout(x, opts.dropout, opts.mode, *opts.rng);
    x = decoder_[l].step(x, previous.layers[l]);
    out.state.layers.push_back(x);
  }
  const Tensor& s = out.state.layers.back();
  AttentionOutput att = attention_.attend(s, enc, previous.attention);
  Tensor combined = add(s, att.context);
  if (drop) combined = dropout(combined, opts.dropout, opts.mode, *opts.rng);
  out.logits = add(matmul(combined, out_weight_), out_bias_);
  out.state.attention = att.weights;
  out.state.context = att.context;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "CAAEDCKPT", u32 config length, config text, u32 tensor
// count, then per tensor: u32 name length, name, u32 rank, u32 extents,
// f32 values. Integers little-endian.

namespace {

constexpr std::array<char, 9> kCheckpointMagic = {'C', 'A', 'A', 'E', 'D',
                                                  'C', 'K', 'P', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff),
                     static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("checkpoint: truncated");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string get_string(std::istream& is, std::uint32_t len) {
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw DataError("checkpoint: truncated");
  return s;
}

}  // namespace

void Model::write(std::ostream& os) const {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  const std::string cfg = config_.to_text();
  put_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put_u32(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, t] : params_) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
    for (double v : t.data()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(os, bits);
    }
  }
}

Model Model::read(std::istream& is, const Vocab& vocab) {
  std::array<char, 9> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw DataError("checkpoint: bad magic (expected CAAEDCKPT)");
  }
  ModelConfig config = ModelConfig::from_text(get_string(is, get_u32(is)));
  Model m(config, vocab);
  const std::uint32_t count = get_u32(is);
  if (count != m.params_.size()) {
    throw DataError("checkpoint: " + std::to_string(count) +
                    " tensors, config implies " +
                    std::to_string(m.params_.size()));
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = get_string(is, get_u32(is));
    if (!m.params_.contains(name)) {
      throw DataError("checkpoint: unexpected tensor " + name);
    }
    Tensor& t = m.params_.get(name);
    Shape shape(get_u32(is));
    for (auto& e : shape) e = get_u32(is);
    if (shape != t.shape()) {
      throw DataError("checkpoint: tensor " + name + " has shape " +
                      shape_string(shape) + ", config implies " +
                      shape_string(t.shape()));
    }
    for (double& v : t.mutable_data()) {
      const std::uint32_t bits = get_u32(is);
      float f = 0.0f;
      std::memcpy(&f, &bits, sizeof f);
      v = f;
    }
  }
  return m;
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path);
  write(out);
}

Model Model::load(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  return read(in, vocab);
}

}  // namespace caaed
