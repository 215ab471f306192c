#include <gtest/gtest.h>

#include <cmath>

#include "gense/embedding.hpp"
#include "gense/error.hpp"
#include "gense/prompt_templates.hpp"
#include "support.hpp"

namespace gense {
namespace {

TEST(Embedding, PromptIsTheEmbeddingTemplate) {
  EXPECT_EQ(embedding_prompt("a dog ."), render(PromptKind::Embedding, "a dog .").text);
}

TEST(Embedding, DeterministicAndFixedDimension) {
  const auto m = test::tiny_model();
  const auto a = embed("a man is running .", *m);
  EXPECT_EQ(a.vector, embed("a man is running .", *m).vector);
  EXPECT_EQ(a.sentence, "a man is running .");
  EXPECT_EQ(embed("a", *m).vector.dim(), m->hidden_size());
  EXPECT_EQ(embed("two children are playing a game near the window .", *m).vector.dim(), m->hidden_size());
}

TEST(Embedding, PromptChangesTheVector) {
  const auto m = test::tiny_model();
  EXPECT_NE(embed("a dog", *m).vector, m->encode_embed("a dog"));
  EXPECT_EQ(embed("a dog", *m).vector, m->encode_embed(embedding_prompt("a dog")));
}

TEST(Embedding, EmptySentenceRejected) {
  const auto m = test::tiny_model();
  EXPECT_THROW(embed("", *m), std::invalid_argument);
  EXPECT_THROW(embed("   ", *m), std::invalid_argument);
}

TEST(Embedding, BatchEqualsPerSentence) {
  const auto m = test::tiny_model();
  const auto texts = test::toy_vocabulary_texts();
  const auto batch = embed_batch(texts, *m);
  ASSERT_EQ(batch.size(), texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto single = embed(texts[i], *m);
    for (std::size_t k = 0; k < single.vector.dim(); ++k)
      EXPECT_NEAR(batch[i].vector.values[k], single.vector.values[k], 1e-5);
  }
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine({{1.0, 2.0}}, {{2.0, 1.0}}), 0.8, 1e-15);
  EXPECT_NEAR(cosine({{3.0, -4.0, 1.0}}, {{3.0, -4.0, 1.0}}), 1.0, 1e-15);
  EXPECT_EQ(cosine({{1.0, 0.0}}, {{0.0, 1.0}}), 0.0);
  EXPECT_THROW(cosine({{0.0, 0.0}}, {{1.0, 0.0}}), std::invalid_argument);
  EXPECT_THROW(cosine({{1.0}}, {{1.0, 0.0}}), std::invalid_argument);
}

TEST(CosineProperty, SymmetricAndScaleInvariant) {
  Rng rng(17);
  for (int t = 0; t < 500; ++t) {
    const auto v = test::random_embeddings(2, 1 + rng.below(16), rng);
    const double c = cosine(v[0], v[1]);
    EXPECT_LE(std::abs(c), 1.0 + 1e-12);
    EXPECT_NEAR(c, cosine(v[1], v[0]), 1e-15);
    EmbeddingVector scaled = v[0];
    const double lambda = 1e-3 + 100.0 * rng.uniform();
    for (double& x : scaled.values) x *= lambda;
    EXPECT_NEAR(cosine(scaled, v[1]), c, 1e-12);
  }
}

TEST(UnitNormalized, HasUnitNorm) {
  const auto u = unit_normalized({{3.0, 4.0}});
  EXPECT_NEAR(u.values[0], 0.6, 1e-15);
  EXPECT_NEAR(u.values[1], 0.8, 1e-15);
}

TEST(RandomEncoder, SeededPerSentence) {
  const RandomEncoder a(16, 1);
  const RandomEncoder b(16, 2);
  EXPECT_EQ(a.encode("x"), a.encode("x"));
  EXPECT_NE(a.encode("x"), a.encode("y"));
  EXPECT_NE(a.encode("x"), b.encode("x"));
  EXPECT_EQ(a.encode("x").dim(), 16u);
}

TEST(PromptedEncoder, MatchesEmbed) {
  const auto m = test::tiny_model();
  EXPECT_EQ(PromptedEncoder(*m).encode("a cat"), embed("a cat", *m).vector);
}

TEST(ExportEmbeddings, MatrixAndIndexRoundTrip) {
  test::TempDir dir;
  const auto m = test::tiny_model();
  const auto texts = test::toy_vocabulary_texts();
  const auto e = embed_batch(texts, *m);
  export_embeddings(dir / "emb.bin", dir / "emb.idx", e);
  const auto back = read_embedding_matrix(dir / "emb.bin");
  EXPECT_EQ(back.count, texts.size());
  EXPECT_EQ(back.dim, m->hidden_size());
  for (std::size_t i = 0; i < back.count; ++i)
    for (std::size_t k = 0; k < back.dim; ++k) EXPECT_EQ(back.values[i * back.dim + k], e[i].vector.values[k]);
  EXPECT_EQ(test::read_lines(dir / "emb.idx"), texts);
  const std::string bytes = test::read_file(dir / "emb.bin");
  EXPECT_EQ(bytes.substr(0, 8), "GENSEEMB");
  EXPECT_EQ(bytes.size(), 8u + 4u + 8u + 8u + 8u * back.count * back.dim);
  test::write_file(dir / "bad.bin", "GENSEEMBxx");
  EXPECT_THROW(read_embedding_matrix(dir / "bad.bin"), FormatError);
}

}  // namespace
}  // namespace gense
