#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gense/backbone.hpp"

namespace gense {

struct SentenceEmbedding {
  EmbeddingVector vector;
  std::string sentence;
};

/// The Embedding-template rendering of `sentence`; this is what gets encoded.
std::string embedding_prompt(std::string_view sentence);

/// Raw (unnormalized) embedding of the prompted sentence.
SentenceEmbedding embed(std::string_view sentence, const Seq2SeqBackbone& backbone);
/// Same vectors as calling embed() per sentence.
std::vector<SentenceEmbedding> embed_batch(std::span<const std::string> sentences,
                                           const Seq2SeqBackbone& backbone);

/// dot(a, b) / (|a| |b|). Throws on zero vectors or mismatched dimensions.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
EmbeddingVector unit_normalized(const EmbeddingVector& v);

// Anything that maps a sentence to a vector; the evaluation harness scores
// these.
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual EmbeddingVector encode(std::string_view sentence) const = 0;
};

class PromptedEncoder final : public SentenceEncoder {
 public:
  explicit PromptedEncoder(const Seq2SeqBackbone& backbone) : backbone_(backbone) {}
  EmbeddingVector encode(std::string_view sentence) const override;

 private:
  const Seq2SeqBackbone& backbone_;
};

/// Baseline: an i.i.d. Gaussian vector per distinct sentence, seeded by a
/// hash of (seed, sentence).
class RandomEncoder final : public SentenceEncoder {
 public:
  RandomEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  EmbeddingVector encode(std::string_view sentence) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Bulk export. The matrix file is
//   "GENSEEMB" | u32 version (1) | u64 count | u64 dim | count*dim float64,
// little-endian, row-major. The index file holds one sentence per line in row
// order.
struct EmbeddingMatrix {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> values;
};

void export_embeddings(const std::filesystem::path& matrix_path, const std::filesystem::path& index_path,
                       std::span<const SentenceEmbedding> embeddings);
EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& matrix_path);

}  // namespace gense
