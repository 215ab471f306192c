#include "gense/prompt_templates.hpp"

#include <stdexcept>

namespace gense {
namespace {

constexpr std::array<std::string_view, 2> kEntailmentPieces = {
    "Write two sentences that are entailment. Sentence 1: \"", "\" Sentence 2:"};
constexpr std::array<std::string_view, 2> kContradictionPieces = {
    "Write two sentences that are contradictory. Sentence 1: \"", "\" Sentence 2:"};
constexpr std::array<std::string_view, 3> kDiscriminationPieces = {
    "if \"", "\", does this mean that \"", "\"? true or false"};
constexpr std::array<std::string_view, 2> kEmbeddingPieces = {
    "", " Question: what can we draw from the above sentence?"};

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

}  // namespace

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::EntailmentGen: return "EntailmentGen";
    case PromptKind::ContradictionGen: return "ContradictionGen";
    case PromptKind::Discrimination: return "Discrimination";
    case PromptKind::Embedding: return "Embedding";
  }
  return "Unknown";
}

std::size_t arity(PromptKind kind) { return kind == PromptKind::Discrimination ? 2 : 1; }

std::span<const std::string_view> template_skeleton(PromptKind kind) {
  switch (kind) {
    case PromptKind::EntailmentGen: return kEntailmentPieces;
    case PromptKind::ContradictionGen: return kContradictionPieces;
    case PromptKind::Discrimination: return kDiscriminationPieces;
    case PromptKind::Embedding: return kEmbeddingPieces;
  }
  throw std::invalid_argument("unknown prompt kind");
}

RenderedPrompt render(PromptKind kind, std::span<const std::string> sentences) {
  if (sentences.size() != arity(kind)) {
    throw std::invalid_argument("prompt " + std::string(to_string(kind)) + " takes " +
                                std::to_string(arity(kind)) + " sentence(s), got " +
                                std::to_string(sentences.size()));
  }
  RenderedPrompt out{{}, kind, {}, false};
  const auto pieces = template_skeleton(kind);
  out.text.append(pieces[0]);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (blank(sentences[i])) {
      throw std::invalid_argument("prompt " + std::string(to_string(kind)) + ": sentence " +
                                  std::to_string(i + 1) + " is empty");
    }
    if (sentences[i].find('"') != std::string::npos) out.embedded_quote_warning = true;
    out.text.append(sentences[i]);
    out.text.append(pieces[i + 1]);
    out.source_sentences.push_back(sentences[i]);
  }
  return out;
}

RenderedPrompt render(PromptKind kind, std::string_view sentence) {
  const std::array<std::string, 1> one = {std::string(sentence)};
  return render(kind, one);
}

RenderedPrompt render(PromptKind kind, std::string_view first, std::string_view second) {
  const std::array<std::string, 2> two = {std::string(first), std::string(second)};
  return render(kind, two);
}

std::optional<std::vector<std::string>> recover_sentences(PromptKind kind,
                                                          std::string_view text) {
  const auto pieces = template_skeleton(kind);
  const std::string_view head = pieces.front();
  const std::string_view tail = pieces.back();
  if (text.size() < head.size() + tail.size() || !text.starts_with(head) ||
      !text.ends_with(tail)) {
    return std::nullopt;
  }
  std::string_view body = text.substr(head.size(), text.size() - head.size() - tail.size());
  if (pieces.size() == 2) return std::vector<std::string>{std::string(body)};

  const std::string_view separator = pieces[1];
  const auto at = body.find(separator);
  if (at == std::string_view::npos) return std::nullopt;
  return std::vector<std::string>{std::string(body.substr(0, at)),
                                  std::string(body.substr(at + separator.size()))};
}

}  // namespace gense
