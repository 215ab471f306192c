#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gense/rng.hpp"

namespace gense {

struct NliTriplet {
  std::string premise;
  std::string entailment;
  std::string contradiction;

  bool operator==(const NliTriplet&) const = default;
};

enum class TaskKind { Generation, Discrimination };

std::string_view to_string(TaskKind task);

struct TrainingInstance {
  std::string input_text;
  std::string target_text;
  TaskKind task = TaskKind::Generation;

  bool operator==(const TrainingInstance&) const = default;
  auto operator<=>(const TrainingInstance&) const = default;
};

struct QaPair {
  std::string question;
  std::string answer;
};

struct UnlabeledSentence {
  std::string text;
  std::string source_id;
};

/// Trim, collapse internal whitespace runs to one space.
std::string collapse_whitespace(std::string_view text);
/// collapse_whitespace plus ASCII case folding; the key used for matching.
std::string normalize_for_matching(std::string_view text);

/// Reads a text file line by line, dropping a trailing '\r' (CRLF input).
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path);
  std::optional<std::string> next();
  std::size_t line_number() const { return line_number_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_number_ = 0;
};

struct NliLoadResult {
  std::vector<NliTriplet> triplets;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// JSON-lines {premise, entailment, contradiction}. Malformed lines are
/// skipped and counted; more than 10% malformed is a FormatError. Blank lines
/// are ignored.
NliLoadResult load_nli(const std::filesystem::path& path);

/// The four instances of one triplet, in order: entailment generation,
/// contradiction generation, discrimination -> "true", discrimination -> "false".
std::vector<TrainingInstance> build_instances(const NliTriplet& triplet);
std::vector<TrainingInstance> build_instances(const std::vector<NliTriplet>& triplets);

/// Seeded uniform shuffle.
std::vector<TrainingInstance> mix_instances(std::vector<TrainingInstance> instances, std::uint64_t seed);

// Streams an unlabeled corpus, one sentence per line. Output text is
// whitespace-collapsed with original casing; a sentence is dropped when its
// normalize_for_matching key is in the exclusion set. source_id is
// "<file name>:<line number>".
class UnlabeledReader {
 public:
  UnlabeledReader(const std::filesystem::path& path, std::set<std::string> normalized_exclusions = {});
  std::optional<UnlabeledSentence> next();

  std::size_t blank_lines() const { return blank_; }
  std::size_t excluded() const { return excluded_; }

 private:
  LineReader lines_;
  std::string tag_;
  std::set<std::string> exclusions_;
  std::size_t blank_ = 0;
  std::size_t excluded_ = 0;
};

struct UnlabeledLoadResult {
  std::vector<UnlabeledSentence> sentences;
  std::size_t blank_lines = 0;
  std::size_t excluded = 0;
};

/// Raw exclusion strings; they are normalized here.
UnlabeledLoadResult load_unlabeled(const std::filesystem::path& path,
                                   const std::optional<std::set<std::string>>& exclusion_set = std::nullopt);

std::set<std::string> normalize_exclusions(const std::set<std::string>& raw);

struct QaLoadResult {
  std::vector<QaPair> pairs;
  std::size_t skipped = 0;
};

/// JSON-lines {question, answer}; same malformed-line policy as load_nli.
QaLoadResult load_qa(const std::filesystem::path& path);

/// Exactly floor(fraction * n) items, uniform without replacement, original
/// order kept. Selections for nested fractions with one seed are nested.
template <typename T>
std::vector<T> subsample(const std::vector<T>& items, double fraction, std::uint64_t seed);

/// Indices chosen by subsample, ascending.
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed);

template <typename T>
std::vector<T> subsample(const std::vector<T>& items, double fraction, std::uint64_t seed) {
  std::vector<T> out;
  for (std::size_t i : subsample_indices(items.size(), fraction, seed)) out.push_back(items[i]);
  return out;
}

struct PairGroupingResult {
  std::vector<NliTriplet> triplets;
  std::size_t premises_seen = 0;
  std::size_t premises_dropped = 0;
  std::size_t skipped_lines = 0;
};

/// Groups labeled pairs by premise into triplets. Accepts JSON-lines with
/// premise/hypothesis/label or sentence1/sentence2/gold_label keys. A premise
/// is kept when it has at least one entailment and one contradiction; its
/// first entailment pairs with its first contradiction. Output follows first
/// premise occurrence.
PairGroupingResult group_pairs_into_triplets(const std::filesystem::path& path);

nlohmann::json triplet_json(const NliTriplet& t);

}  // namespace gense
