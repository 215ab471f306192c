#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gense {

// Word-level tokenizer for the reference backbone. Text is split on
// whitespace and the punctuation characters . , ! ? ; : " ( ) become tokens of
// their own. Ids 0..2 are reserved for [PAD], [EOS] and [UNK].
class WordTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  /// Builds a vocabulary from `texts`. Prompt-skeleton words and the labels
  /// "true"/"false" are always included; the rest are ranked by frequency
  /// (ties lexicographic) until `max_vocab` entries exist.
  static WordTokenizer build(std::span<const std::string> texts, std::size_t max_vocab);

  /// `tokens[i]` is the surface form of id i; the first three must be the
  /// reserved specials.
  explicit WordTokenizer(std::vector<std::string> tokens);

  static std::vector<std::string> split(std::string_view text);

  std::vector<int> encode(std::string_view text) const;
  /// Space-joined surface forms; stops at [EOS] and drops [PAD].
  std::string decode(std::span<const int> ids) const;

  int id(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace gense
