#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gense/backbone.hpp"
#include "gense/data.hpp"

namespace gense {

struct SynthesisConfig {
  double nucleus_p = 0.9;
  double alpha = 0.9;
  std::uint64_t seed = 0;
  bool keep_positive_only = false;
  // Hypotheses sampled per relation; the most confident one is kept.
  std::size_t samples_per_relation = 1;
  std::size_t max_decode_len = 64;
  // Anchors scored per shard before the outputs are flushed to the sink.
  std::size_t shard_size = 256;
  std::size_t workers = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthesisConfig from_json(const nlohmann::json& j);
};

enum class Relation { Entailment, Contradiction };

std::string_view to_string(Relation relation);

struct SynthCandidate {
  std::string anchor;
  std::string hypothesis;
  Relation relation = Relation::Entailment;
  std::optional<double> confidence;  // unset until scored
  // The generator stopped immediately (empty hypothesis).
  bool degenerate = false;
  bool truncated = false;
};

struct SynthTriplet {
  std::string anchor;
  std::string positive;
  std::string negative;
  double pos_confidence = 0.0;
  double neg_confidence = 0.0;
  bool positive_is_anchor = false;

  nlohmann::json to_json() const;
};

struct SynthPair {
  std::string anchor;
  std::string positive;
  double pos_confidence = 0.0;
  bool positive_is_anchor = false;

  nlohmann::json to_json() const;
};

/// Seed of sample `sample_index` for one relation of one anchor; depends only
/// on the global seed and the anchor's source_id.
std::uint64_t candidate_seed(std::uint64_t global_seed, std::string_view source_id, Relation relation,
                             std::size_t sample_index = 0);

/// Samples one hypothesis from the entailment and one from the contradiction
/// generation prompt of `u.text`.
std::pair<SynthCandidate, SynthCandidate> generate_candidates(const UnlabeledSentence& u,
                                                              const Seq2SeqBackbone& backbone,
                                                              const SynthesisConfig& config,
                                                              std::size_t sample_index = 0);

/// Confidence is the renormalized probability of "true" for an entailment and
/// of "false" for a contradiction candidate; degenerate candidates get 0.
SynthCandidate score_candidate(SynthCandidate c, const Seq2SeqBackbone& backbone);

struct FilterOutcome {
  std::optional<SynthTriplet> triplet;
  std::optional<SynthPair> pair;
};

/// Keeps a triplet iff both candidates are non-degenerate with confidence >=
/// alpha. With keep_positive_only, an anchor whose entailment alone passes
/// yields a pair instead. Throws std::invalid_argument on mismatched anchors,
/// wrong relations or unscored candidates.
FilterOutcome filter(const SynthCandidate& entailment, const SynthCandidate& contradiction,
                     const SynthesisConfig& config);

struct ScoredAnchor {
  UnlabeledSentence source;
  SynthCandidate entailment;
  SynthCandidate contradiction;
  std::size_t hypotheses = 0;
  std::size_t degenerate = 0;
};

/// generate_candidates + score_candidate for every sample; the best-scoring
/// sample of each relation (earliest on ties) is returned.
ScoredAnchor process_anchor(const UnlabeledSentence& u, const Seq2SeqBackbone& backbone,
                            const SynthesisConfig& config);

struct SynthesisStats {
  std::size_t read = 0;
  std::size_t generated = 0;  // hypotheses sampled
  std::size_t degenerate = 0;
  std::size_t kept_triplets = 0;
  std::size_t kept_pairs = 0;
  std::size_t dropped = 0;
  std::size_t duplicate_positives = 0;

  bool operator==(const SynthesisStats&) const = default;
  nlohmann::json to_json() const;
};

class SynthesisSink {
 public:
  virtual ~SynthesisSink() = default;
  virtual void write(const SynthTriplet& t) = 0;
  virtual void write(const SynthPair& p) = 0;
  /// Called once after the last write of a successful run.
  virtual void finish() {}
  /// Called when the run fails; the output is incomplete.
  virtual void abort() {}
};

// Appends JSON lines to a triplet file and, optionally, a pair file. A
// "<triplet file>.partial" marker exists from construction until finish();
// abort() leaves it in place.
class JsonlSynthesisSink final : public SynthesisSink {
 public:
  JsonlSynthesisSink(std::filesystem::path triplets, std::optional<std::filesystem::path> pairs = std::nullopt);
  void write(const SynthTriplet& t) override;
  void write(const SynthPair& p) override;
  void finish() override;
  void abort() override;

  static std::filesystem::path partial_marker(const std::filesystem::path& triplets);

 private:
  std::filesystem::path triplet_path_;
  std::optional<std::filesystem::path> pair_path_;
  std::ofstream triplets_;
  std::ofstream pairs_;
};

using SentenceSource = std::function<std::optional<UnlabeledSentence>()>;
SentenceSource sentence_source(std::span<const UnlabeledSentence> sentences);

/// Processes the stream shard by shard and writes kept items to `sink` in
/// input order. Every anchor ends as exactly one of triplet, pair or dropped.
/// A sink failure aborts the sink and rethrows.
SynthesisStats run_synthesis(const SentenceSource& source, const Seq2SeqBackbone& backbone,
                             const SynthesisConfig& config, SynthesisSink& sink);

/// Scores the corpus once and filters it under every alpha; sinks[i] receives
/// the output for alphas[i].
std::vector<SynthesisStats> run_alpha_sweep(const SentenceSource& source, const Seq2SeqBackbone& backbone,
                                            const SynthesisConfig& config, std::span<const double> alphas,
                                            std::span<SynthesisSink* const> sinks);

}  // namespace gense
