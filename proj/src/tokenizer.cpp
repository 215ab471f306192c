#include "gense/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "gense/prompt_templates.hpp"

namespace gense {
namespace {

constexpr std::string_view kPunctuation = ".,!?;:\"()";
constexpr std::string_view kWhitespace = " \t\r\n\f\v";

}  // namespace

std::vector<std::string> WordTokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (kWhitespace.find(c) != std::string_view::npos) {
      flush();
    } else if (kPunctuation.find(c) != std::string_view::npos) {
      flush();
      out.emplace_back(1, c);
    } else {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

WordTokenizer WordTokenizer::build(std::span<const std::string> texts, std::size_t max_vocab) {
  std::vector<std::string> tokens = {"[PAD]", "[EOS]", "[UNK]"};
  std::vector<std::string> reserved = {"true", "false"};
  for (PromptKind kind : kAllPromptKinds)
    for (std::string_view piece : template_skeleton(kind))
      for (auto& t : split(piece)) reserved.push_back(std::move(t));
  for (const auto& t : reserved)
    if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) tokens.push_back(t);
  if (max_vocab < tokens.size()) {
    throw std::invalid_argument("max_vocab " + std::to_string(max_vocab) +
                                " is smaller than the reserved vocabulary (" +
                                std::to_string(tokens.size()) + ")");
  }

  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts)
    for (auto& t : split(text)) ++counts[std::move(t)];
  for (const auto& t : tokens) counts.erase(t);

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [token, count] : ranked) {
    if (tokens.size() >= max_vocab) break;
    tokens.push_back(token);
  }
  return WordTokenizer(std::move(tokens));
}

WordTokenizer::WordTokenizer(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[kPad] != "[PAD]" || tokens_[kEos] != "[EOS]" ||
      tokens_[kUnk] != "[UNK]") {
    throw std::invalid_argument("vocabulary must start with [PAD], [EOS], [UNK]");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate vocabulary entry: " + tokens_[i]);
  }
}

int WordTokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> WordTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : split(text)) ids.push_back(id(t));
  return ids;
}

std::string WordTokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i == kEos) break;
    if (i == kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens_.at(static_cast<std::size_t>(i));
  }
  return out;
}

}  // namespace gense
