#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gense/autodiff.hpp"

namespace gense {

/// Probability mass over a vocabulary. Entries are non-negative and sum to 1.
struct TokenDistribution {
  std::vector<double> probs;

  /// Throws std::invalid_argument unless entries are >= 0 and sum to 1 within 1e-6.
  void validate() const;
};

/// Sentence-level vector produced by first-decoder-position extraction.
struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

struct BackboneConfig {
  std::size_t max_decode_len = 64;
  double nucleus_p = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DecodeResult {
  std::string text;
  std::vector<int> tokens;
  // No end-of-sequence token within max_decode_len.
  bool truncated = false;
};

/// Teacher-forced negative log-likelihood of a target, summed over tokens.
struct NllResult {
  double total = 0.0;
  std::size_t tokens = 0;

  double mean() const { return total / static_cast<double>(tokens); }
};

struct Seq2SeqExample {
  std::string input;
  std::string target;
};

/// A loss over a batch of embeddings. Returns the loss and writes
/// d(loss)/d(embedding) into `grads` (pre-sized, same shapes as `embeddings`).
using EmbeddingObjective =
    std::function<double(std::span<const EmbeddingVector> embeddings, std::span<EmbeddingVector> grads)>;

/// Keeps the smallest prefix of tokens (sorted by descending probability, ties
/// by ascending index) whose cumulative mass reaches `p`, zeroes the rest and
/// renormalizes. Requires 0 < p <= 1.
TokenDistribution nucleus_filter(const TokenDistribution& dist, double p);

/// Categorical draw: the first index (ascending) whose running mass exceeds
/// `u` in [0, 1). Falls back to the last index with non-zero mass.
std::size_t draw_token(const TokenDistribution& dist, double u);

/// Softmax over log-scores: renormalizes sequence probabilities to sum to 1.
std::vector<double> normalize_log_scores(std::span<const double> log_scores);

// Encoder-decoder text model as seen by the pipeline. Inference methods are
// const and safe to call concurrently; training hooks mutate parameters and
// need exclusive access. Pretrained models attach by implementing this class.
class Seq2SeqBackbone {
 public:
  virtual ~Seq2SeqBackbone() = default;

  virtual std::size_t hidden_size() const = 0;
  virtual std::vector<int> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const int> ids) const = 0;
  virtual int eos_token() const = 0;

  /// Sum of -log P(y_m | y_<m, X) over the target tokens plus end-of-sequence,
  /// decoder started from the start token. Throws on empty tokenizations.
  virtual NllResult target_nll(std::string_view input, std::string_view target) const = 0;

  /// Mean per-token negative log-likelihood in nats.
  double conditional_nll(std::string_view input, std::string_view target) const {
    return target_nll(input, target).mean();
  }

  /// P(next token | input, prefix) with teacher-forced prefix ids.
  virtual TokenDistribution next_token_distribution(std::string_view input,
                                                    std::span<const int> prefix) const = 0;

  /// Autoregressive nucleus-sampled decode, deterministic given config.seed.
  /// The RNG consumes one Rng::uniform() per step.
  virtual DecodeResult sample(std::string_view input, const BackboneConfig& config) const;

  /// Argmax decode (ties by lowest token id).
  virtual DecodeResult greedy(std::string_view input, std::size_t max_decode_len) const;

  /// Sequence probability (target tokens plus end-of-sequence) of each label,
  /// renormalized over the given labels.
  virtual std::vector<double> label_probability(std::string_view input,
                                                std::span<const std::string> labels) const;

  /// Final decoder hidden state at the first position, with the pad token as
  /// decoder input.
  virtual EmbeddingVector encode_embed(std::string_view text) const = 0;

  virtual std::vector<ad::Parameter*> parameters() = 0;
  /// Adds d(mean over batch of conditional_nll)/d(theta) to parameter grads;
  /// returns that mean.
  virtual double accumulate_nll_gradients(std::span<const Seq2SeqExample> batch) = 0;
  /// Embeds `texts` with encode_embed semantics, evaluates `objective` and
  /// adds d(objective)/d(theta) to parameter grads; returns the objective.
  virtual double accumulate_embedding_gradients(std::span<const std::string> texts,
                                                const EmbeddingObjective& objective) = 0;
  void zero_grad();

  virtual std::unique_ptr<Seq2SeqBackbone> clone() const = 0;
  virtual void save(const std::filesystem::path& path) const = 0;
  virtual void load(const std::filesystem::path& path) = 0;
};

}  // namespace gense
