#include "gense/synthesis.hpp"

#include <algorithm>
#include <array>
#include <exception>
#include <stdexcept>
#include <thread>

#include "gense/error.hpp"
#include "gense/prompt_templates.hpp"
#include "gense/rng.hpp"

namespace gense {
namespace {

const std::array<std::string, 2> kLabels = {"true", "false"};

// Applies the filter to one scored anchor and records the outcome.
void emit(const ScoredAnchor& a, const SynthesisConfig& config, SynthesisStats& stats, SynthesisSink& sink) {
  ++stats.read;
  stats.generated += a.hypotheses;
  stats.degenerate += a.degenerate;
  const FilterOutcome out = filter(a.entailment, a.contradiction, config);
  if (out.triplet) {
    stats.duplicate_positives += out.triplet->positive_is_anchor;
    ++stats.kept_triplets;
    sink.write(*out.triplet);
  } else if (out.pair) {
    stats.duplicate_positives += out.pair->positive_is_anchor;
    ++stats.kept_pairs;
    sink.write(*out.pair);
  } else {
    ++stats.dropped;
  }
}

std::vector<ScoredAnchor> process_shard(std::span<const UnlabeledSentence> shard, const Seq2SeqBackbone& backbone,
                                        const SynthesisConfig& config) {
  std::vector<ScoredAnchor> out(shard.size());
  const std::size_t workers = std::min(config.workers, shard.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < shard.size(); ++i) out[i] = process_anchor(shard[i], backbone, config);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < shard.size(); i += workers) out[i] = process_anchor(shard[i], backbone, config);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Reads the source in shards, handing each scored shard to `consume`.
template <typename Consume>
void for_each_shard(const SentenceSource& source, const Seq2SeqBackbone& backbone, const SynthesisConfig& config,
                    Consume&& consume) {
  std::vector<UnlabeledSentence> shard;
  shard.reserve(config.shard_size);
  bool more = true;
  while (more) {
    shard.clear();
    while (shard.size() < config.shard_size) {
      auto next = source();
      if (!next) {
        more = false;
        break;
      }
      shard.push_back(std::move(*next));
    }
    if (!shard.empty()) consume(process_shard(shard, backbone, config));
  }
}

}  // namespace

void SynthesisConfig::validate() const {
  if (!(nucleus_p > 0.0 && nucleus_p <= 1.0)) throw std::invalid_argument("synthesis nucleus_p must be in (0, 1]");
  if (!(alpha >= 0.0)) throw std::invalid_argument("synthesis alpha must be non-negative");
  if (samples_per_relation == 0 || max_decode_len == 0 || shard_size == 0 || workers == 0)
    throw std::invalid_argument("samples_per_relation, max_decode_len, shard_size and workers must be positive");
}

nlohmann::json SynthesisConfig::to_json() const {
  return {{"nucleus_p", nucleus_p},
          {"alpha", alpha},
          {"seed", seed},
          {"keep_positive_only", keep_positive_only},
          {"samples_per_relation", samples_per_relation},
          {"max_decode_len", max_decode_len},
          {"shard_size", shard_size},
          {"workers", workers}};
}

SynthesisConfig SynthesisConfig::from_json(const nlohmann::json& j) {
  SynthesisConfig c;
  c.nucleus_p = j.value("nucleus_p", c.nucleus_p);
  c.alpha = j.value("alpha", c.alpha);
  c.seed = j.value("seed", c.seed);
  c.keep_positive_only = j.value("keep_positive_only", c.keep_positive_only);
  c.samples_per_relation = j.value("samples_per_relation", c.samples_per_relation);
  c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
  c.shard_size = j.value("shard_size", c.shard_size);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

std::string_view to_string(Relation relation) {
  return relation == Relation::Entailment ? "entailment" : "contradiction";
}

nlohmann::json SynthTriplet::to_json() const {
  nlohmann::json j = {{"anchor", anchor},
                      {"positive", positive},
                      {"negative", negative},
                      {"pos_confidence", pos_confidence},
                      {"neg_confidence", neg_confidence}};
  if (positive_is_anchor) j["positive_is_anchor"] = true;
  return j;
}

nlohmann::json SynthPair::to_json() const {
  nlohmann::json j = {{"anchor", anchor}, {"positive", positive}, {"pos_confidence", pos_confidence}};
  if (positive_is_anchor) j["positive_is_anchor"] = true;
  return j;
}

std::uint64_t candidate_seed(std::uint64_t global_seed, std::string_view source_id, Relation relation,
                             std::size_t sample_index) {
  const std::uint64_t anchor_seed = derive_seed(global_seed, source_id);
  return derive_seed(anchor_seed, std::string(to_string(relation)) + "#" + std::to_string(sample_index));
}

std::pair<SynthCandidate, SynthCandidate> generate_candidates(const UnlabeledSentence& u,
                                                              const Seq2SeqBackbone& backbone,
                                                              const SynthesisConfig& config,
                                                              std::size_t sample_index) {
  auto one = [&](Relation relation, PromptKind kind) {
    BackboneConfig bc{config.max_decode_len, config.nucleus_p,
                      candidate_seed(config.seed, u.source_id, relation, sample_index)};
    const DecodeResult d = backbone.sample(render(kind, u.text).text, bc);
    SynthCandidate c;
    c.anchor = u.text;
    c.hypothesis = collapse_whitespace(d.text);
    c.relation = relation;
    c.degenerate = c.hypothesis.empty();
    c.truncated = d.truncated;
    return c;
  };
  return {one(Relation::Entailment, PromptKind::EntailmentGen),
          one(Relation::Contradiction, PromptKind::ContradictionGen)};
}

SynthCandidate score_candidate(SynthCandidate c, const Seq2SeqBackbone& backbone) {
  if (c.degenerate) {
    c.confidence = 0.0;
    return c;
  }
  const auto probs = backbone.label_probability(render(PromptKind::Discrimination, c.anchor, c.hypothesis).text,
                                                kLabels);
  c.confidence = c.relation == Relation::Entailment ? probs[0] : probs[1];
  return c;
}

FilterOutcome filter(const SynthCandidate& entailment, const SynthCandidate& contradiction,
                     const SynthesisConfig& config) {
  if (entailment.relation != Relation::Entailment || contradiction.relation != Relation::Contradiction)
    throw std::invalid_argument("filter expects an entailment and a contradiction candidate");
  if (entailment.anchor != contradiction.anchor)
    throw std::invalid_argument("filter candidates have different anchors: '" + entailment.anchor + "' vs '" +
                                contradiction.anchor + "'");
  if (!entailment.confidence || !contradiction.confidence)
    throw std::invalid_argument("filter candidates must be scored first");
  const bool pos_ok = !entailment.degenerate && *entailment.confidence >= config.alpha;
  const bool neg_ok = !contradiction.degenerate && *contradiction.confidence >= config.alpha;
  const bool duplicate = entailment.hypothesis == entailment.anchor;
  FilterOutcome out;
  if (pos_ok && neg_ok) {
    out.triplet = SynthTriplet{entailment.anchor,     entailment.hypothesis,     contradiction.hypothesis,
                               *entailment.confidence, *contradiction.confidence, duplicate};
  } else if (pos_ok && config.keep_positive_only) {
    out.pair = SynthPair{entailment.anchor, entailment.hypothesis, *entailment.confidence, duplicate};
  }
  return out;
}

ScoredAnchor process_anchor(const UnlabeledSentence& u, const Seq2SeqBackbone& backbone,
                            const SynthesisConfig& config) {
  ScoredAnchor out;
  out.source = u;
  for (std::size_t k = 0; k < config.samples_per_relation; ++k) {
    auto [e, c] = generate_candidates(u, backbone, config, k);
    out.hypotheses += 2;
    out.degenerate += static_cast<std::size_t>(e.degenerate) + static_cast<std::size_t>(c.degenerate);
    e = score_candidate(std::move(e), backbone);
    c = score_candidate(std::move(c), backbone);
    if (k == 0 || *e.confidence > *out.entailment.confidence) out.entailment = std::move(e);
    if (k == 0 || *c.confidence > *out.contradiction.confidence) out.contradiction = std::move(c);
  }
  return out;
}

nlohmann::json SynthesisStats::to_json() const {
  return {{"read", read},
          {"generated", generated},
          {"degenerate", degenerate},
          {"kept_triplets", kept_triplets},
          {"kept_pairs", kept_pairs},
          {"dropped", dropped},
          {"duplicate_positives", duplicate_positives}};
}

JsonlSynthesisSink::JsonlSynthesisSink(std::filesystem::path triplets, std::optional<std::filesystem::path> pairs)
    : triplet_path_(std::move(triplets)), pair_path_(std::move(pairs)) {
  if (triplet_path_.has_parent_path()) std::filesystem::create_directories(triplet_path_.parent_path());
  std::ofstream(partial_marker(triplet_path_)) << "incomplete\n";
  triplets_.open(triplet_path_, std::ios::binary | std::ios::trunc);
  if (!triplets_) throw IoError("cannot write " + triplet_path_.string());
  if (pair_path_) {
    pairs_.open(*pair_path_, std::ios::binary | std::ios::trunc);
    if (!pairs_) throw IoError("cannot write " + pair_path_->string());
  }
}

std::filesystem::path JsonlSynthesisSink::partial_marker(const std::filesystem::path& triplets) {
  std::filesystem::path p = triplets;
  p += ".partial";
  return p;
}

void JsonlSynthesisSink::write(const SynthTriplet& t) {
  triplets_ << t.to_json().dump() << '\n';
  if (!triplets_) throw IoError("failed writing " + triplet_path_.string());
}

void JsonlSynthesisSink::write(const SynthPair& p) {
  if (!pair_path_) throw std::logic_error("positive-only pairs need a pair output path");
  pairs_ << p.to_json().dump() << '\n';
  if (!pairs_) throw IoError("failed writing " + pair_path_->string());
}

void JsonlSynthesisSink::finish() {
  triplets_.close();
  if (pair_path_) pairs_.close();
  if (triplets_.fail() || (pair_path_ && pairs_.fail())) throw IoError("failed closing " + triplet_path_.string());
  std::filesystem::remove(partial_marker(triplet_path_));
}

void JsonlSynthesisSink::abort() {
  triplets_.close();
  if (pair_path_) pairs_.close();
}

SentenceSource sentence_source(std::span<const UnlabeledSentence> sentences) {
  return [sentences, i = std::size_t{0}]() mutable -> std::optional<UnlabeledSentence> {
    if (i >= sentences.size()) return std::nullopt;
    return sentences[i++];
  };
}

SynthesisStats run_synthesis(const SentenceSource& source, const Seq2SeqBackbone& backbone,
                             const SynthesisConfig& config, SynthesisSink& sink) {
  config.validate();
  SynthesisStats stats;
  try {
    for_each_shard(source, backbone, config, [&](const std::vector<ScoredAnchor>& scored) {
      for (const auto& a : scored) emit(a, config, stats, sink);
    });
    sink.finish();
  } catch (...) {
    sink.abort();
    throw;
  }
  return stats;
}

std::vector<SynthesisStats> run_alpha_sweep(const SentenceSource& source, const Seq2SeqBackbone& backbone,
                                            const SynthesisConfig& config, std::span<const double> alphas,
                                            std::span<SynthesisSink* const> sinks) {
  config.validate();
  if (alphas.size() != sinks.size()) throw std::invalid_argument("alpha sweep needs one sink per alpha");
  std::vector<SynthesisConfig> configs(alphas.size(), config);
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    configs[i].alpha = alphas[i];
    configs[i].validate();
  }
  std::vector<SynthesisStats> stats(alphas.size());
  try {
    for_each_shard(source, backbone, config, [&](const std::vector<ScoredAnchor>& scored) {
      for (std::size_t i = 0; i < alphas.size(); ++i)
        for (const auto& a : scored) emit(a, configs[i], stats[i], *sinks[i]);
    });
    for (auto* s : sinks) s->finish();
  } catch (...) {
    for (auto* s : sinks) s->abort();
    throw;
  }
  return stats;
}

}  // namespace gense
