#include "gense/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gense/error.hpp"
#include "gense/prompt_templates.hpp"
#include "gense/rng.hpp"

namespace gense {
namespace {

constexpr char kMatrixMagic[8] = {'G', 'E', 'N', 'S', 'E', 'E', 'M', 'B'};
constexpr std::uint32_t kMatrixVersion = 1;

double norm2(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v.values) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::string embedding_prompt(std::string_view sentence) {
  return render(PromptKind::Embedding, sentence).text;
}

SentenceEmbedding embed(std::string_view sentence, const Seq2SeqBackbone& backbone) {
  return {backbone.encode_embed(embedding_prompt(sentence)), std::string(sentence)};
}

std::vector<SentenceEmbedding> embed_batch(std::span<const std::string> sentences,
                                           const Seq2SeqBackbone& backbone) {
  std::vector<SentenceEmbedding> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(embed(s, backbone));
  return out;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("cosine of vectors with different dimensions");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine is undefined for a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

EmbeddingVector unit_normalized(const EmbeddingVector& v) {
  const double n = norm2(v);
  if (n == 0.0) throw std::invalid_argument("cannot normalize a zero vector");
  EmbeddingVector out = v;
  for (double& x : out.values) x /= n;
  return out;
}

EmbeddingVector PromptedEncoder::encode(std::string_view sentence) const {
  return embed(sentence, backbone_).vector;
}

EmbeddingVector RandomEncoder::encode(std::string_view sentence) const {
  Rng rng(derive_seed(seed_, sentence));
  EmbeddingVector v;
  v.values.resize(dim_);
  for (double& x : v.values) x = rng.normal();
  return v;
}

void export_embeddings(const std::filesystem::path& matrix_path, const std::filesystem::path& index_path,
                       std::span<const SentenceEmbedding> embeddings) {
  const std::uint64_t count = embeddings.size();
  const std::uint64_t dim = embeddings.empty() ? 0 : embeddings.front().vector.dim();
  std::ofstream matrix(matrix_path, std::ios::binary | std::ios::trunc);
  std::ofstream index(index_path, std::ios::binary | std::ios::trunc);
  if (!matrix || !index) throw IoError("cannot write embedding export to " + matrix_path.string());
  matrix.write(kMatrixMagic, sizeof(kMatrixMagic));
  matrix.write(reinterpret_cast<const char*>(&kMatrixVersion), sizeof(kMatrixVersion));
  matrix.write(reinterpret_cast<const char*>(&count), sizeof(count));
  matrix.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  for (const auto& e : embeddings) {
    if (e.vector.dim() != dim) throw std::invalid_argument("embeddings have inconsistent dimensions");
    if (e.sentence.find('\n') != std::string::npos)
      throw std::invalid_argument("sentence contains a newline; cannot index it");
    matrix.write(reinterpret_cast<const char*>(e.vector.values.data()),
                 static_cast<std::streamsize>(dim * sizeof(double)));
    index << e.sentence << '\n';
  }
  if (!matrix || !index) throw IoError("failed writing embedding export " + matrix_path.string());
}

EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& matrix_path) {
  std::ifstream in(matrix_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + matrix_path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  std::uint64_t dim = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  if (!in || std::memcmp(magic, kMatrixMagic, sizeof(magic)) != 0 || version != kMatrixVersion)
    throw FormatError(matrix_path.string() + " is not a gense embedding matrix");
  EmbeddingMatrix out{count, dim, std::vector<double>(count * dim)};
  in.read(reinterpret_cast<char*>(out.values.data()), static_cast<std::streamsize>(out.values.size() * sizeof(double)));
  if (!in) throw FormatError(matrix_path.string() + " is truncated");
  return out;
}

}  // namespace gense
