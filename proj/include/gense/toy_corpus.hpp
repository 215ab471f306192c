#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gense/data.hpp"
#include "gense/evaluation.hpp"
#include "gense/rng.hpp"

namespace gense::toy {

// A small synthetic language for desk-scale runs. Every sentence realizes a
// frame (subject, optional adjective, action, optional place) as
//   "a <adjective> <subject> is <action> in the <place>."
// with each concept drawn from a few interchangeable surface words, so word
// overlap and meaning come apart. Subjects and actions belong to coarse
// classes used for hypernyms and for graded similarity.
struct Frame {
  std::size_t subject = 0;
  std::optional<std::size_t> adjective;
  std::size_t action = 0;
  std::optional<std::size_t> place;

  bool operator==(const Frame&) const = default;
};

std::size_t subject_count();
std::size_t action_count();
std::size_t place_count();
std::size_t adjective_count();

Frame random_frame(Rng& rng);
/// Surface string with synonyms drawn from `rng`.
std::string realize(const Frame& frame, Rng& rng);

/// Graded meaning similarity in [0, 5]: subject 0.35 (same class 0.5 credit),
/// action 0.4 (same class 0.25 credit), place 0.25, adjective ignored. A
/// missing place matches only a missing place.
double gold_similarity(const Frame& a, const Frame& b);

/// Premise plus an entailed hypothesis (synonyms, hypernym subject, dropped
/// modifiers) and a contradicting one (incompatible action or subject).
NliTriplet make_triplet(Rng& rng);

struct CorpusConfig {
  std::size_t nli_triplets = 500;
  std::size_t dev_triplets = 60;
  std::size_t unlabeled = 1000;
  std::size_t sts_pairs = 100;
  std::size_t ranking_queries = 40;
  std::size_t qa_pairs = 300;
  std::uint64_t seed = 0;
};

struct Corpora {
  std::vector<NliTriplet> nli;
  std::vector<NliTriplet> nli_dev;
  std::vector<std::string> unlabeled;
  StsDataset sts;
  std::vector<RankingQuery> ranking;
  std::vector<QaPair> qa;
};

/// Each part uses its own derived RNG stream. STS and ranking sentences are
/// drawn first and excluded from every training part.
Corpora generate(const CorpusConfig& config);

struct CorpusFiles {
  std::filesystem::path nli, nli_dev, unlabeled, sts, ranking, qa;
};

/// nli.jsonl, nli_dev.jsonl, unlabeled.txt, sts.tsv, ranking.jsonl, qa.jsonl.
CorpusFiles write(const Corpora& corpora, const std::filesystem::path& dir);

}  // namespace gense::toy
