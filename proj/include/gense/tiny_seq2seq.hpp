#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "gense/autodiff.hpp"
#include "gense/backbone.hpp"
#include "gense/tokenizer.hpp"

namespace gense {

struct TinySeq2SeqConfig {
  std::size_t hidden_size = 32;
  std::size_t heads = 2;
  std::size_t ffn_size = 64;
  std::size_t layers = 2;
  std::size_t max_positions = 128;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TinySeq2SeqConfig from_json(const nlohmann::json& j);
};

// Small pre-LayerNorm Transformer encoder-decoder with word-level tokens,
// trained from scratch. It is the desk-scale reference backbone: every
// operation has an exact gradient path through gense::ad.
//
// Checkpoint layout (little-endian):
//   "GENSECKP" | u32 version | u64 n | n bytes of JSON metadata
//   (config, vocabulary, parameter table) | float64 parameter values in
//   table order, each row-major.
class TinySeq2Seq final : public Seq2SeqBackbone {
 public:
  static constexpr std::uint32_t kCheckpointVersion = 1;

  TinySeq2Seq(TinySeq2SeqConfig config, WordTokenizer tokenizer);
  static std::unique_ptr<TinySeq2Seq> from_checkpoint(const std::filesystem::path& path);

  std::size_t hidden_size() const override { return config_.hidden_size; }
  std::vector<int> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const int> ids) const override;
  int eos_token() const override { return WordTokenizer::kEos; }

  NllResult target_nll(std::string_view input, std::string_view target) const override;
  TokenDistribution next_token_distribution(std::string_view input,
                                            std::span<const int> prefix) const override;
  DecodeResult sample(std::string_view input, const BackboneConfig& config) const override;
  EmbeddingVector encode_embed(std::string_view text) const override;

  std::vector<ad::Parameter*> parameters() override;
  double accumulate_nll_gradients(std::span<const Seq2SeqExample> batch) override;
  double accumulate_embedding_gradients(std::span<const std::string> texts,
                                        const EmbeddingObjective& objective) override;

  std::unique_ptr<Seq2SeqBackbone> clone() const override;
  void save(const std::filesystem::path& path) const override;
  void load(const std::filesystem::path& path) override;

  const TinySeq2SeqConfig& config() const { return config_; }
  const WordTokenizer& tokenizer() const { return tokenizer_; }
  std::size_t parameter_count() const;

  // Forward building blocks, exposed so tests can assemble manual passes.
  struct Forward;
  ad::Var encode(Forward& fwd, std::span<const int> ids) const;
  ad::Var decode(Forward& fwd, ad::Var encoded, std::span<const int> decoder_inputs) const;
  ad::Var project(Forward& fwd, ad::Var hidden) const;

  // Binds parameters to a tape lazily so each parameter is one leaf per pass.
  struct Forward {
    ad::Tape& tape;
    std::vector<ad::Parameter>& params;
    std::vector<std::optional<ad::Var>> bound;

    ad::Var operator()(std::size_t index);
  };
  Forward forward_on(ad::Tape& tape) const;

 private:
  struct AttentionIndex {
    std::size_t query, key, value, output;
  };
  struct FeedForwardIndex {
    std::size_t w1, b1, w2, b2;
  };
  struct NormIndex {
    std::size_t gain, bias;
  };
  struct EncoderLayer {
    NormIndex norm1, norm2;
    AttentionIndex self_attn;
    FeedForwardIndex ffn;
  };
  struct DecoderLayer {
    NormIndex norm1, norm2, norm3;
    AttentionIndex self_attn, cross_attn;
    FeedForwardIndex ffn;
  };

  void build_parameters();
  std::size_t add_parameter(std::string name, std::size_t rows, std::size_t cols);
  void initialize();

  ad::Var attention(Forward& fwd, ad::Var query_in, ad::Var memory, const AttentionIndex& w,
                    bool causal) const;
  ad::Var feed_forward(Forward& fwd, ad::Var x, const FeedForwardIndex& w) const;
  ad::Var norm(Forward& fwd, ad::Var x, const NormIndex& w) const;

  std::vector<int> encoder_ids(std::string_view text) const;
  ad::Matrix encode_values(std::span<const int> ids) const;
  TokenDistribution next_from_encoded(const ad::Matrix& encoded, std::span<const int> prefix) const;

  TinySeq2SeqConfig config_;
  WordTokenizer tokenizer_;
  // Mutable only so const forward passes can bind parameters to a tape;
  // forward passes never modify values or gradients.
  mutable std::vector<ad::Parameter> params_;

  std::size_t token_embedding_ = 0;
  std::size_t encoder_positions_ = 0;
  std::size_t decoder_positions_ = 0;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  NormIndex encoder_final_{};
  NormIndex decoder_final_{};
  std::size_t output_weight_ = 0;
  std::size_t output_bias_ = 0;
};

}  // namespace gense
