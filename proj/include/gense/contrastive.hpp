#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gense/backbone.hpp"

namespace gense {

enum class LossKind { Triplet, Pair };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

struct ContrastiveBatch {
  std::vector<std::string> anchors;
  std::vector<std::string> positives;
  std::optional<std::vector<std::string>> negatives;

  std::size_t size() const { return anchors.size(); }
  /// Throws on length mismatches or an empty batch.
  void validate() const;
};

struct EmbeddingLoss {
  double loss = 0.0;
  std::vector<EmbeddingVector> anchor_grads;
  std::vector<EmbeddingVector> positive_grads;
  std::vector<EmbeddingVector> negative_grads;  // empty for the pair loss
};

// Softmax contrastive losses over raw embeddings, s(a, b) = cos(a, b) / tau:
//   triplet: mean_i -log( e^{s(h_i,h_i+)} / sum_j (e^{s(h_i,h_j+)} + e^{s(h_i,h_j-)}) )
//   pair:    mean_i -log( e^{s(h_i,h_i+)} / sum_j e^{s(h_i,h_j+)} )
// Other rows' positives and hard negatives act as in-batch negatives.
double triplet_loss(std::span<const EmbeddingVector> anchors, std::span<const EmbeddingVector> positives,
                    std::span<const EmbeddingVector> negatives, double temperature);
double pair_loss(std::span<const EmbeddingVector> anchors, std::span<const EmbeddingVector> positives,
                 double temperature);
EmbeddingLoss triplet_loss_with_gradient(std::span<const EmbeddingVector> anchors,
                                         std::span<const EmbeddingVector> positives,
                                         std::span<const EmbeddingVector> negatives, double temperature);
EmbeddingLoss pair_loss_with_gradient(std::span<const EmbeddingVector> anchors,
                                      std::span<const EmbeddingVector> positives, double temperature);

/// Inspection only: the ratio exactly as typeset, without a log and with the
/// anchor's own positive repeated in every denominator term, averaged over i:
///   mean_i e^{s(h_i,h_i+)} / sum_{j=1..N} (e^{s(h_i,h_i+)} + e^{s(h_i,h_i-)}).
double literal_ratio_triplet(std::span<const EmbeddingVector> anchors, std::span<const EmbeddingVector> positives,
                             std::span<const EmbeddingVector> negatives, double temperature);

/// Embeds all 3N sentences with the Embedding prompt and evaluates the loss.
/// Throws std::invalid_argument when negatives are missing.
double triplet_loss(const ContrastiveBatch& batch, double temperature, const Seq2SeqBackbone& backbone);
/// Negatives, if present, are ignored.
double pair_loss(const ContrastiveBatch& batch, double temperature, const Seq2SeqBackbone& backbone);
/// Adds the loss gradient to the backbone's parameter grads; returns the loss.
double accumulate_contrastive_gradients(const ContrastiveBatch& batch, LossKind kind, double temperature,
                                        Seq2SeqBackbone& backbone);

struct ContrastiveExample {
  std::string anchor;
  std::string positive;
  std::optional<std::string> negative;
};

struct ContrastiveCorpus {
  std::vector<ContrastiveExample> examples;
  std::size_t skipped = 0;
  std::size_t with_negative = 0;
};

/// JSON-lines in any of: {anchor, positive[, negative]} (synthesis output),
/// {premise, entailment, contradiction} (NLI) or {question, answer} (QA).
ContrastiveCorpus load_contrastive_corpus(const std::filesystem::path& path);

struct StageConfig {
  std::filesystem::path corpus;
  std::string corpus_tag;
  LossKind loss = LossKind::Triplet;
  double temperature = 0.05;
  double learning_rate = 5e-5;
  std::size_t batch_size = 512;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields keep the values already in `base`.
  static StageConfig from_json(const nlohmann::json& j, StageConfig base);
  static StageConfig from_json(const nlohmann::json& j);
};

enum class ScheduleName { Universal, DomainAdapt, QaOnly, QaPlus, Custom };

std::string_view to_string(ScheduleName name);
ScheduleName schedule_name_from_string(std::string_view name);

struct TrainingSchedule {
  ScheduleName name = ScheduleName::Custom;
  std::vector<StageConfig> stages;
};

// Stage presets. The large synthetic corpora train with batch 1024 and the
// NLI corpus with batch 512, all at lr 5e-5; QA uses tau 0.01, everything
// else 0.05. Epochs: 1 for synthetic/in-domain/QA, 3 for NLI.
StageConfig synthetic_stage(std::filesystem::path corpus);
StageConfig in_domain_stage(std::filesystem::path corpus);
StageConfig nli_stage(std::filesystem::path corpus);
StageConfig qa_stage(std::filesystem::path corpus);

TrainingSchedule universal_schedule(std::filesystem::path synthetic, std::filesystem::path nli);
TrainingSchedule domain_adapt_schedule(std::filesystem::path synthetic, std::filesystem::path in_domain,
                                       std::filesystem::path nli);
TrainingSchedule qa_only_schedule(std::filesystem::path qa, std::filesystem::path nli);
TrainingSchedule qa_plus_schedule(std::filesystem::path synthetic, std::filesystem::path qa,
                                  std::filesystem::path nli);

struct StageLogEntry {
  std::size_t stage = 0;  // 1-based
  std::size_t step = 0;
  double loss = 0.0;
};

using StageLogSink = std::function<void(const StageLogEntry&)>;
using WarningSink = std::function<void(const std::string&)>;

struct StageResult {
  std::vector<double> losses;  // one per optimizer step
  std::size_t dropped_per_epoch = 0;
  std::vector<std::string> warnings;
};

/// Trains `backbone` in place on one stage. Each epoch uses a seeded
/// permutation in batches of exactly batch_size (tail dropped). A Triplet
/// stage over a corpus without negatives is rejected; a Pair stage over
/// triplets ignores the negatives and warns.
StageResult run_stage(const StageConfig& stage, Seq2SeqBackbone& backbone, std::size_t stage_index = 1,
                      const StageLogSink& log = {});

/// <root>/<schedule>/<stage-index>-<corpus-tag>.ckpt, stage index 1-based.
std::filesystem::path stage_checkpoint_path(const std::filesystem::path& root, ScheduleName name,
                                            std::size_t stage_index, const StageConfig& stage);

struct ScheduleOptions {
  std::filesystem::path checkpoint_root;
  // Reuse existing leading stage checkpoints instead of retraining them.
  bool resume = false;
  StageLogSink log;
  WarningSink warn;
};

struct ScheduleResult {
  std::vector<std::filesystem::path> stage_checkpoints;
  std::filesystem::path final_checkpoint;
  std::vector<std::size_t> resumed_stages;
  std::vector<StageResult> stage_results;
};

/// Runs the stages in order, each starting from the previous stage's final
/// weights, saving a checkpoint after each stage and `final.ckpt` at the end.
/// A failing stage aborts the schedule; checkpoints of completed stages stay.
ScheduleResult run_schedule(const TrainingSchedule& schedule, Seq2SeqBackbone& backbone,
                            const ScheduleOptions& options);

}  // namespace gense
