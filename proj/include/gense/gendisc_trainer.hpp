#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gense/backbone.hpp"
#include "gense/data.hpp"

namespace gense {

struct GenDiscConfig {
  double learning_rate = 5e-5;
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  std::size_t eval_every_steps = 500;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
  static GenDiscConfig from_json(const nlohmann::json& j);
};

struct ValidationReport {
  double gen_ppl = 1.0;
  double disc_accuracy = 0.0;
  double selection_score = 0.0;

  /// selection_score = disc_accuracy - 10 * gen_ppl.
  static ValidationReport from_metrics(double gen_ppl, double disc_accuracy);
};

struct GenDiscLogEntry {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous evaluation
  ValidationReport report;

  nlohmann::json to_json() const;
};

/// Index of the highest selection_score; the earliest wins ties.
std::size_t select_best(std::span<const ValidationReport> reports);

/// Token-weighted perplexity over the Generation instances and label accuracy
/// (argmax over {"true","false"}) over the Discrimination instances. Throws
/// std::invalid_argument unless both kinds are present.
ValidationReport evaluate_dev(std::span<const TrainingInstance> dev, const Seq2SeqBackbone& backbone);

struct GenDiscResult {
  std::unique_ptr<Seq2SeqBackbone> best;
  std::size_t best_step = 0;
  std::size_t total_steps = 0;
  std::size_t dropped_per_epoch = 0;  // size of the discarded partial batch
  std::vector<GenDiscLogEntry> history;
};

using GenDiscLogSink = std::function<void(const GenDiscLogEntry&)>;

// Minimizes the mean conditional NLL over mixed generation/discrimination
// batches with AdamW at a constant learning rate. Each epoch visits a fresh
// seeded permutation in batches of exactly batch_size, dropping the tail.
// Evaluates every eval_every_steps steps and once more after the final step
// when that step is not already an evaluation point. `backbone` ends in its
// final state; the returned `best` is a copy taken at the best evaluation.
GenDiscResult train_gendisc(std::span<const TrainingInstance> train, std::span<const TrainingInstance> dev,
                            const GenDiscConfig& config, Seq2SeqBackbone& backbone,
                            const GenDiscLogSink& log = {});

}  // namespace gense
