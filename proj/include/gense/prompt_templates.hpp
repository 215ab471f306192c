#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gense {

enum class PromptKind { EntailmentGen, ContradictionGen, Discrimination, Embedding };

inline constexpr std::array<PromptKind, 4> kAllPromptKinds = {
    PromptKind::EntailmentGen, PromptKind::ContradictionGen,
    PromptKind::Discrimination, PromptKind::Embedding};

std::string_view to_string(PromptKind kind);

/// Number of sentences a template consumes (2 for Discrimination, else 1).
std::size_t arity(PromptKind kind);

/// The literal pieces a template is assembled from: pieces[0] + s1 + pieces[1]
/// (+ s2 + pieces[2]). Sentences are inserted verbatim, never escaped.
std::span<const std::string_view> template_skeleton(PromptKind kind);

struct RenderedPrompt {
  std::string text;
  PromptKind kind;
  std::vector<std::string> source_sentences;
  // Set when a sentence carries a '"', which makes the quoted slot ambiguous.
  bool embedded_quote_warning = false;
};

/// Instantiates the template for `kind`. Throws std::invalid_argument on an
/// arity mismatch or a sentence that is empty after trimming.
RenderedPrompt render(PromptKind kind, std::span<const std::string> sentences);
RenderedPrompt render(PromptKind kind, std::string_view sentence);
RenderedPrompt render(PromptKind kind, std::string_view first, std::string_view second);

/// Inverse of render: strips the skeleton and returns the inserted sentences,
/// or nullopt when `text` is not an instance of the template.
std::optional<std::vector<std::string>> recover_sentences(PromptKind kind, std::string_view text);

}  // namespace gense
