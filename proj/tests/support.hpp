#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gense/backbone.hpp"
#include "gense/rng.hpp"
#include "gense/tiny_seq2seq.hpp"
#include "gense/tokenizer.hpp"

namespace gense::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "gense-test-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::stringstream ss(read_file(path));
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

inline std::filesystem::path fixture(const std::string& relative) {
  return std::filesystem::path(GENSE_FIXTURE_DIR) / relative;
}

inline std::vector<std::string> toy_vocabulary_texts() {
  return {"a man is running in the park .", "a woman is sleeping on the beach .",
          "the dog is eating food .",      "two children are playing a game .",
          "a cat sits near the window .",  "nobody is outside today ."};
}

inline TinySeq2SeqConfig tiny_config(std::uint64_t seed = 3) {
  TinySeq2SeqConfig c;
  c.hidden_size = 8;
  c.heads = 2;
  c.ffn_size = 12;
  c.layers = 2;
  c.max_positions = 40;
  c.seed = seed;
  return c;
}

/// A small randomly initialized reference backbone over a fixed vocabulary.
inline std::unique_ptr<TinySeq2Seq> tiny_model(std::uint64_t seed = 3, TinySeq2SeqConfig config = tiny_config()) {
  config.seed = seed;
  const auto texts = toy_vocabulary_texts();
  return std::make_unique<TinySeq2Seq>(config, WordTokenizer::build(texts, 200));
}

// Backbone whose probabilities come from callbacks; everything about training
// is unsupported. Tokens are whitespace-separated words over a fixed list.
class StubBackbone : public Seq2SeqBackbone {
 public:
  using NllFn = std::function<NllResult(std::string_view, std::string_view)>;
  using NextFn = std::function<TokenDistribution(std::string_view, std::span<const int>)>;
  using EmbedFn = std::function<EmbeddingVector(std::string_view)>;

  explicit StubBackbone(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {}

  NllFn nll;
  NextFn next;
  EmbedFn embed_fn;

  std::size_t hidden_size() const override { return 2; }
  std::vector<int> tokenize(std::string_view text) const override {
    std::vector<int> ids;
    std::stringstream ss{std::string(text)};
    std::string w;
    while (ss >> w) {
      int id = 2;
      for (std::size_t i = 0; i < vocab_.size(); ++i)
        if (vocab_[i] == w) id = static_cast<int>(i);
      ids.push_back(id);
    }
    return ids;
  }
  std::string detokenize(std::span<const int> ids) const override {
    std::string out;
    for (int id : ids) {
      if (!out.empty()) out += ' ';
      out += vocab_[static_cast<std::size_t>(id)];
    }
    return out;
  }
  int eos_token() const override { return 1; }
  NllResult target_nll(std::string_view input, std::string_view target) const override {
    return nll(input, target);
  }
  TokenDistribution next_token_distribution(std::string_view input, std::span<const int> prefix) const override {
    return next(input, prefix);
  }
  EmbeddingVector encode_embed(std::string_view text) const override { return embed_fn(text); }
  std::vector<ad::Parameter*> parameters() override { return {}; }
  double accumulate_nll_gradients(std::span<const Seq2SeqExample>) override {
    throw std::logic_error("stub backbone is not trainable");
  }
  double accumulate_embedding_gradients(std::span<const std::string>, const EmbeddingObjective&) override {
    throw std::logic_error("stub backbone is not trainable");
  }
  std::unique_ptr<Seq2SeqBackbone> clone() const override { return std::make_unique<StubBackbone>(*this); }
  void save(const std::filesystem::path&) const override { throw std::logic_error("stub"); }
  void load(const std::filesystem::path&) override { throw std::logic_error("stub"); }

 private:
  std::vector<std::string> vocab_;
};

inline std::vector<EmbeddingVector> random_embeddings(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<EmbeddingVector> out(n);
  for (auto& e : out) {
    e.values.resize(dim);
    for (double& v : e.values) v = rng.normal();
  }
  return out;
}

}  // namespace gense::test
