#include "gense/tiny_seq2seq.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gense/error.hpp"
#include "gense/rng.hpp"

namespace gense {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

constexpr char kMagic[8] = {'G', 'E', 'N', 'S', 'E', 'C', 'K', 'P'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("checkpoint truncated");
  return value;
}

}  // namespace

void TinySeq2SeqConfig::validate() const {
  if (hidden_size == 0 || heads == 0 || ffn_size == 0 || layers == 0 || max_positions < 2)
    throw std::invalid_argument("tiny backbone sizes must be positive (max_positions >= 2)");
  if (hidden_size % heads != 0)
    throw std::invalid_argument("hidden_size must be divisible by heads");
}

nlohmann::json TinySeq2SeqConfig::to_json() const {
  return {{"hidden_size", hidden_size}, {"heads", heads},     {"ffn_size", ffn_size},
          {"layers", layers},           {"max_positions", max_positions}, {"seed", seed}};
}

TinySeq2SeqConfig TinySeq2SeqConfig::from_json(const nlohmann::json& j) {
  TinySeq2SeqConfig c;
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.heads = j.value("heads", c.heads);
  c.ffn_size = j.value("ffn_size", c.ffn_size);
  c.layers = j.value("layers", c.layers);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Var TinySeq2Seq::Forward::operator()(std::size_t index) {
  if (!bound[index]) bound[index] = tape.parameter(params[index]);
  return *bound[index];
}

TinySeq2Seq::Forward TinySeq2Seq::forward_on(Tape& tape) const {
  return Forward{tape, params_, std::vector<std::optional<Var>>(params_.size())};
}

TinySeq2Seq::TinySeq2Seq(TinySeq2SeqConfig config, WordTokenizer tokenizer)
    : config_(config), tokenizer_(std::move(tokenizer)) {
  config_.validate();
  build_parameters();
  initialize();
}

std::size_t TinySeq2Seq::add_parameter(std::string name, std::size_t rows, std::size_t cols) {
  params_.emplace_back(std::move(name), rows, cols);
  return params_.size() - 1;
}

void TinySeq2Seq::build_parameters() {
  params_.clear();
  encoder_.clear();
  decoder_.clear();
  const std::size_t d = config_.hidden_size;
  const std::size_t f = config_.ffn_size;
  const std::size_t v = tokenizer_.size();

  auto make_norm = [&](const std::string& name) {
    return NormIndex{add_parameter(name + ".gain", 1, d), add_parameter(name + ".bias", 1, d)};
  };
  auto make_attn = [&](const std::string& name) {
    return AttentionIndex{add_parameter(name + ".query", d, d), add_parameter(name + ".key", d, d),
                          add_parameter(name + ".value", d, d),
                          add_parameter(name + ".output", d, d)};
  };
  auto make_ffn = [&](const std::string& name) {
    return FeedForwardIndex{add_parameter(name + ".w1", d, f), add_parameter(name + ".b1", 1, f),
                            add_parameter(name + ".w2", f, d), add_parameter(name + ".b2", 1, d)};
  };

  token_embedding_ = add_parameter("embed.tokens", v, d);
  encoder_positions_ = add_parameter("embed.encoder_positions", config_.max_positions, d);
  decoder_positions_ = add_parameter("embed.decoder_positions", config_.max_positions, d);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayer layer;
    layer.norm1 = make_norm(p + ".norm1");
    layer.self_attn = make_attn(p + ".self_attn");
    layer.norm2 = make_norm(p + ".norm2");
    layer.ffn = make_ffn(p + ".ffn");
    encoder_.push_back(layer);
  }
  encoder_final_ = make_norm("encoder.final_norm");
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecoderLayer layer;
    layer.norm1 = make_norm(p + ".norm1");
    layer.self_attn = make_attn(p + ".self_attn");
    layer.norm2 = make_norm(p + ".norm2");
    layer.cross_attn = make_attn(p + ".cross_attn");
    layer.norm3 = make_norm(p + ".norm3");
    layer.ffn = make_ffn(p + ".ffn");
    decoder_.push_back(layer);
  }
  decoder_final_ = make_norm("decoder.final_norm");
  output_weight_ = add_parameter("output.weight", d, v);
  output_bias_ = add_parameter("output.bias", 1, v);
}

void TinySeq2Seq::initialize() {
  Rng rng(derive_seed(config_.seed, "tiny-seq2seq-init"));
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config_.layers));
  for (ad::Parameter& p : params_) {
    const std::string& n = p.name;
    if (n.ends_with(".gain")) {
      p.value.fill(1.0);
    } else if (n.ends_with(".bias") || n.ends_with(".b1") || n.ends_with(".b2")) {
      p.value.fill(0.0);
    } else {
      double scale = 1.0 / std::sqrt(static_cast<double>(p.value.rows));
      if (n.starts_with("embed.")) scale = 1.0;
      if (n.ends_with(".output") || n.ends_with(".w2")) scale *= residual_scale;
      for (double& x : p.value.data) x = scale * rng.normal();
    }
    p.grad.fill(0.0);
  }
}

std::size_t TinySeq2Seq::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<int> TinySeq2Seq::tokenize(std::string_view text) const { return tokenizer_.encode(text); }

std::string TinySeq2Seq::detokenize(std::span<const int> ids) const { return tokenizer_.decode(ids); }

Var TinySeq2Seq::norm(Forward& fwd, Var x, const NormIndex& w) const {
  return fwd.tape.layer_norm(x, fwd(w.gain), fwd(w.bias));
}

Var TinySeq2Seq::attention(Forward& fwd, Var query_in, Var memory, const AttentionIndex& w,
                           bool causal) const {
  Tape& t = fwd.tape;
  const Var q = t.matmul(query_in, fwd(w.query));
  const Var k = t.matmul(memory, fwd(w.key));
  const Var v = t.matmul(memory, fwd(w.value));
  const std::size_t head_dim = config_.hidden_size / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Var qh = t.slice_cols(q, h * head_dim, head_dim);
    const Var kh = t.slice_cols(k, h * head_dim, head_dim);
    const Var vh = t.slice_cols(v, h * head_dim, head_dim);
    const Var weights = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), inv_sqrt), causal);
    heads.push_back(t.matmul(weights, vh));
  }
  const Var merged = heads.size() == 1 ? heads[0] : t.concat_cols(heads);
  return t.matmul(merged, fwd(w.output));
}

Var TinySeq2Seq::feed_forward(Forward& fwd, Var x, const FeedForwardIndex& w) const {
  Tape& t = fwd.tape;
  const Var hidden = t.gelu(t.add_row(t.matmul(x, fwd(w.w1)), fwd(w.b1)));
  return t.add_row(t.matmul(hidden, fwd(w.w2)), fwd(w.b2));
}

Var TinySeq2Seq::encode(Forward& fwd, std::span<const int> ids) const {
  Tape& t = fwd.tape;
  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
  Var x = t.add(t.gather_rows(fwd(token_embedding_), ids),
                t.gather_rows(fwd(encoder_positions_), positions));
  for (const EncoderLayer& layer : encoder_) {
    const Var normed = norm(fwd, x, layer.norm1);
    x = t.add(x, attention(fwd, normed, normed, layer.self_attn, false));
    x = t.add(x, feed_forward(fwd, norm(fwd, x, layer.norm2), layer.ffn));
  }
  return norm(fwd, x, encoder_final_);
}

Var TinySeq2Seq::decode(Forward& fwd, Var encoded, std::span<const int> decoder_inputs) const {
  Tape& t = fwd.tape;
  std::vector<int> positions(decoder_inputs.size());
  for (std::size_t i = 0; i < decoder_inputs.size(); ++i) positions[i] = static_cast<int>(i);
  Var y = t.add(t.gather_rows(fwd(token_embedding_), decoder_inputs),
                t.gather_rows(fwd(decoder_positions_), positions));
  for (const DecoderLayer& layer : decoder_) {
    const Var normed = norm(fwd, y, layer.norm1);
    y = t.add(y, attention(fwd, normed, normed, layer.self_attn, true));
    y = t.add(y, attention(fwd, norm(fwd, y, layer.norm2), encoded, layer.cross_attn, false));
    y = t.add(y, feed_forward(fwd, norm(fwd, y, layer.norm3), layer.ffn));
  }
  return norm(fwd, y, decoder_final_);
}

Var TinySeq2Seq::project(Forward& fwd, Var hidden) const {
  Tape& t = fwd.tape;
  return t.add_row(t.matmul(hidden, fwd(output_weight_)), fwd(output_bias_));
}

std::vector<int> TinySeq2Seq::encoder_ids(std::string_view text) const {
  std::vector<int> ids = tokenizer_.encode(text);
  if (ids.empty()) throw std::invalid_argument("input text tokenizes to nothing");
  if (ids.size() > config_.max_positions) ids.resize(config_.max_positions);
  return ids;
}

NllResult TinySeq2Seq::target_nll(std::string_view input, std::string_view target) const {
  const std::vector<int> src = encoder_ids(input);
  std::vector<int> tgt = tokenizer_.encode(target);
  if (tgt.empty()) throw std::invalid_argument("target text tokenizes to nothing");
  tgt.push_back(WordTokenizer::kEos);
  if (tgt.size() > config_.max_positions)
    throw std::invalid_argument("target longer than max_positions");
  std::vector<int> dec_in = {WordTokenizer::kPad};
  dec_in.insert(dec_in.end(), tgt.begin(), tgt.end() - 1);

  Tape tape(false);
  Forward fwd = forward_on(tape);
  const Var logp = tape.token_log_probs(project(fwd, decode(fwd, encode(fwd, src), dec_in)), tgt);
  NllResult out;
  for (double v : tape.value(logp).data) out.total -= v;
  out.tokens = tgt.size();
  return out;
}

Matrix TinySeq2Seq::encode_values(std::span<const int> ids) const {
  Tape tape(false);
  Forward fwd = forward_on(tape);
  return tape.value(encode(fwd, ids));
}

TokenDistribution TinySeq2Seq::next_from_encoded(const Matrix& encoded,
                                                 std::span<const int> prefix) const {
  std::vector<int> dec_in = {WordTokenizer::kPad};
  dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
  if (dec_in.size() > config_.max_positions) throw std::invalid_argument("decode prefix too long");
  Tape tape(false);
  Forward fwd = forward_on(tape);
  const Var hidden = decode(fwd, tape.constant(encoded), dec_in);
  const Var last = tape.slice_rows(hidden, dec_in.size() - 1, 1);
  const Matrix& logits = tape.value(project(fwd, last));
  TokenDistribution dist{std::vector<double>(logits.cols)};
  double peak = logits.data[0];
  for (double v : logits.data) peak = std::max(peak, v);
  double total = 0.0;
  for (std::size_t j = 0; j < logits.cols; ++j) {
    dist.probs[j] = std::exp(logits.data[j] - peak);
    total += dist.probs[j];
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

TokenDistribution TinySeq2Seq::next_token_distribution(std::string_view input,
                                                       std::span<const int> prefix) const {
  return next_from_encoded(encode_values(encoder_ids(input)), prefix);
}

DecodeResult TinySeq2Seq::sample(std::string_view input, const BackboneConfig& config) const {
  config.validate();
  const Matrix encoded = encode_values(encoder_ids(input));
  const std::size_t limit = std::min(config.max_decode_len, config_.max_positions - 1);
  Rng rng(config.seed);
  DecodeResult out;
  while (out.tokens.size() < limit) {
    const auto filtered = nucleus_filter(next_from_encoded(encoded, out.tokens), config.nucleus_p);
    const int token = static_cast<int>(draw_token(filtered, rng.uniform()));
    if (token == WordTokenizer::kEos) {
      out.text = detokenize(out.tokens);
      return out;
    }
    out.tokens.push_back(token);
  }
  out.truncated = true;
  out.text = detokenize(out.tokens);
  return out;
}

EmbeddingVector TinySeq2Seq::encode_embed(std::string_view text) const {
  const std::vector<int> src = encoder_ids(text);
  const std::array<int, 1> start = {WordTokenizer::kPad};
  Tape tape(false);
  Forward fwd = forward_on(tape);
  const Matrix& h = tape.value(decode(fwd, encode(fwd, src), start));
  return EmbeddingVector{h.data};
}

std::vector<ad::Parameter*> TinySeq2Seq::parameters() {
  std::vector<ad::Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

double TinySeq2Seq::accumulate_nll_gradients(std::span<const Seq2SeqExample> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Seq2SeqExample& ex : batch) {
    const std::vector<int> src = encoder_ids(ex.input);
    std::vector<int> tgt = tokenizer_.encode(ex.target);
    if (tgt.empty()) throw std::invalid_argument("target text tokenizes to nothing");
    tgt.push_back(WordTokenizer::kEos);
    if (tgt.size() > config_.max_positions)
      throw std::invalid_argument("target longer than max_positions");
    std::vector<int> dec_in = {WordTokenizer::kPad};
    dec_in.insert(dec_in.end(), tgt.begin(), tgt.end() - 1);

    Tape tape(true);
    Forward fwd = forward_on(tape);
    const Var logp = tape.token_log_probs(project(fwd, decode(fwd, encode(fwd, src), dec_in)), tgt);
    const Var objective = tape.scale(tape.sum(logp), -inv_batch / static_cast<double>(tgt.size()));
    loss += tape.value(objective).data[0];
    tape.backward(objective);
  }
  return loss;
}

double TinySeq2Seq::accumulate_embedding_gradients(std::span<const std::string> texts,
                                                   const EmbeddingObjective& objective) {
  Tape tape(true);
  Forward fwd = forward_on(tape);
  const std::array<int, 1> start = {WordTokenizer::kPad};
  std::vector<Var> outputs;
  std::vector<EmbeddingVector> values;
  outputs.reserve(texts.size());
  for (const std::string& text : texts) {
    const Var h = decode(fwd, encode(fwd, encoder_ids(text)), start);
    outputs.push_back(h);
    values.push_back(EmbeddingVector{tape.value(h).data});
  }
  std::vector<EmbeddingVector> grads(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) grads[i].values.assign(values[i].dim(), 0.0);
  const double loss = objective(values, grads);

  std::vector<std::pair<Var, Matrix>> seeds;
  seeds.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    Matrix seed(1, config_.hidden_size);
    seed.data = std::move(grads[i].values);
    seeds.emplace_back(outputs[i], std::move(seed));
  }
  tape.backward(seeds);
  return loss;
}

std::unique_ptr<Seq2SeqBackbone> TinySeq2Seq::clone() const {
  return std::make_unique<TinySeq2Seq>(*this);
}

void TinySeq2Seq::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian hosts");
  nlohmann::json meta;
  meta["format"] = "gense-tiny-seq2seq";
  meta["version"] = kCheckpointVersion;
  meta["config"] = config_.to_json();
  meta["vocabulary"] = tokenizer_.tokens();
  meta["parameters"] = nlohmann::json::array();
  for (const auto& p : params_)
    meta["parameters"].push_back({{"name", p.name}, {"rows", p.value.rows}, {"cols", p.value.cols}});
  const std::string header = meta.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : params_)
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

std::unique_ptr<TinySeq2Seq> TinySeq2Seq::from_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError(path.string() + " is not a gense checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto header_size = read_pod<std::uint64_t>(in);
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw FormatError("checkpoint header truncated");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  auto model = std::make_unique<TinySeq2Seq>(
      TinySeq2SeqConfig::from_json(meta.at("config")),
      WordTokenizer(meta.at("vocabulary").get<std::vector<std::string>>()));
  const auto& table = meta.at("parameters");
  if (table.size() != model->params_.size()) throw FormatError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < table.size(); ++i) {
    ad::Parameter& p = model->params_[i];
    if (table[i].at("name") != p.name || table[i].at("rows") != p.value.rows ||
        table[i].at("cols") != p.value.cols) {
      throw FormatError("checkpoint parameter " + std::to_string(i) + " does not match " + p.name);
    }
    in.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw FormatError("checkpoint parameters truncated");
  }
  return model;
}

void TinySeq2Seq::load(const std::filesystem::path& path) { *this = std::move(*from_checkpoint(path)); }

}  // namespace gense
