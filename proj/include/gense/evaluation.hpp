#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gense/embedding.hpp"

namespace gense {

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Throws std::invalid_argument on length mismatch, fewer than 2 items or a
/// constant list.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

/// Mean over relevant items of precision at their rank, ranking by descending
/// score with ties broken by ascending index. nullopt when nothing is relevant.
std::optional<double> average_precision(std::span<const double> scores, std::span<const int> relevance);

struct StsExample {
  std::string sentence_a;
  std::string sentence_b;
  double gold_score = 0.0;
};

struct StsDataset {
  std::string name;
  std::vector<StsExample> examples;
  double scale_min = 0.0;
  double scale_max = 5.0;
};

/// Tab-separated `score<TAB>sentence_a<TAB>sentence_b` per line. Scores
/// outside [scale_min, scale_max] are a FormatError.
StsDataset load_sts(const std::filesystem::path& path, double scale_min = 0.0, double scale_max = 5.0);

struct StsResult {
  double spearman = 0.0;
  std::size_t n = 0;
};

StsResult evaluate_sts(const SentenceEncoder& model, const StsDataset& dataset);

struct RankingQuery {
  std::string query;
  std::vector<std::string> candidates;
  std::vector<int> relevance;
};

/// JSON-lines {query, candidates: [...], relevance: [0|1, ...]}.
std::vector<RankingQuery> load_ranking(const std::filesystem::path& path);

struct RankingResult {
  double mean_ap = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // queries without a relevant candidate
};

RankingResult evaluate_ranking(const SentenceEncoder& model, std::span<const RankingQuery> queries);

enum class FormulaMode { Standard, LiteralForm };

std::string_view to_string(FormulaMode mode);
FormulaMode formula_mode_from_string(std::string_view name);

struct DiagnosticsConfig {
  double align_threshold = 4.0;
  FormulaMode formula_mode = FormulaMode::Standard;

  nlohmann::json to_json() const;
  static DiagnosticsConfig from_json(const nlohmann::json& j);
};

// Alignment over positive pairs of unit-normalized embeddings:
//   Standard:     mean ||f(x) - f(y)||^2
//   LiteralForm: -mean ||f(x) - f(y)||
// Uniformity over unordered distinct pairs:
//   Standard:     log mean exp(-2 ||f(x) - f(y)||^2)
//   LiteralForm: log mean exp(-2 ||f(x) - f(y)||)
double alignment_loss(std::span<const std::pair<EmbeddingVector, EmbeddingVector>> pairs, FormulaMode mode);
double uniformity_loss(std::span<const EmbeddingVector> embeddings, FormulaMode mode);

double alignment_loss(std::span<const std::pair<std::string, std::string>> pairs, const SentenceEncoder& model,
                      const DiagnosticsConfig& config);
double uniformity_loss(std::span<const std::string> sentences, const SentenceEncoder& model,
                       const DiagnosticsConfig& config);

struct AlignmentSelection {
  std::vector<std::pair<std::string, std::string>> pairs;  // gold > threshold
  std::size_t at_threshold = 0;                            // gold == threshold, excluded
};

AlignmentSelection select_alignment_pairs(const StsDataset& dataset, double threshold);
/// Every sentence of the dataset (both columns), in order, duplicates kept.
std::vector<std::string> dataset_sentences(const StsDataset& dataset);

struct Diagnostics {
  double alignment = 0.0;
  double uniformity = 0.0;
  std::size_t alignment_pairs = 0;
  std::size_t excluded_at_threshold = 0;
  FormulaMode formula_mode = FormulaMode::Standard;
};

Diagnostics compute_diagnostics(const SentenceEncoder& model, const StsDataset& dataset,
                                const DiagnosticsConfig& config);

struct EvaluationReport {
  std::string checkpoint;
  std::vector<std::pair<std::string, StsResult>> sts;
  std::vector<std::pair<std::string, RankingResult>> ranking;
  std::optional<Diagnostics> diagnostics;

  double average_spearman() const;
  nlohmann::json to_json() const;
};

}  // namespace gense
