#include "gense/gendisc_trainer.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gense/optimizer.hpp"
#include "gense/rng.hpp"

namespace gense {

void GenDiscConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size == 0 || epochs == 0 || eval_every_steps == 0)
    throw std::invalid_argument("gendisc learning_rate, batch_size, epochs and eval_every_steps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
}

nlohmann::json GenDiscConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size},
          {"epochs", epochs},               {"eval_every_steps", eval_every_steps},
          {"seed", seed},                   {"weight_decay", weight_decay}};
}

GenDiscConfig GenDiscConfig::from_json(const nlohmann::json& j) {
  GenDiscConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.eval_every_steps = j.value("eval_every_steps", c.eval_every_steps);
  c.seed = j.value("seed", c.seed);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.validate();
  return c;
}

ValidationReport ValidationReport::from_metrics(double gen_ppl, double disc_accuracy) {
  return {gen_ppl, disc_accuracy, disc_accuracy - 10.0 * gen_ppl};
}

nlohmann::json GenDiscLogEntry::to_json() const {
  return {{"step", step},
          {"train_loss", train_loss},
          {"gen_ppl", report.gen_ppl},
          {"disc_accuracy", report.disc_accuracy},
          {"selection_score", report.selection_score}};
}

std::size_t select_best(std::span<const ValidationReport> reports) {
  if (reports.empty()) throw std::invalid_argument("no validation reports to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i)
    if (reports[i].selection_score > reports[best].selection_score) best = i;
  return best;
}

ValidationReport evaluate_dev(std::span<const TrainingInstance> dev, const Seq2SeqBackbone& backbone) {
  static const std::array<std::string, 2> kLabels = {"true", "false"};
  double total_nll = 0.0;
  std::size_t total_tokens = 0;
  std::size_t disc_total = 0;
  std::size_t disc_correct = 0;
  for (const TrainingInstance& inst : dev) {
    if (inst.task == TaskKind::Generation) {
      const NllResult r = backbone.target_nll(inst.input_text, inst.target_text);
      total_nll += r.total;
      total_tokens += r.tokens;
    } else {
      const auto probs = backbone.label_probability(inst.input_text, kLabels);
      const std::string& predicted = probs[1] > probs[0] ? kLabels[1] : kLabels[0];
      ++disc_total;
      if (predicted == inst.target_text) ++disc_correct;
    }
  }
  if (total_tokens == 0 || disc_total == 0)
    throw std::invalid_argument("dev set must contain both generation and discrimination instances");
  return ValidationReport::from_metrics(std::exp(total_nll / static_cast<double>(total_tokens)),
                                        static_cast<double>(disc_correct) / static_cast<double>(disc_total));
}

GenDiscResult train_gendisc(std::span<const TrainingInstance> train, std::span<const TrainingInstance> dev,
                            const GenDiscConfig& config, Seq2SeqBackbone& backbone, const GenDiscLogSink& log) {
  config.validate();
  if (train.empty() || dev.empty()) throw std::invalid_argument("train and dev sets must be non-empty");
  bool has_gen = false;
  bool has_disc = false;
  for (const auto& inst : dev) (inst.task == TaskKind::Generation ? has_gen : has_disc) = true;
  if (!has_gen || !has_disc)
    throw std::invalid_argument("dev set is missing a task kind; the selection metric is undefined");
  const std::size_t steps_per_epoch = train.size() / config.batch_size;
  if (steps_per_epoch == 0) {
    throw std::invalid_argument("batch_size " + std::to_string(config.batch_size) + " exceeds the " +
                                std::to_string(train.size()) + " training instances");
  }

  GenDiscResult result;
  result.dropped_per_epoch = train.size() % config.batch_size;
  AdamW optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  auto params = backbone.parameters();
  std::vector<ValidationReport> reports;
  std::vector<Seq2SeqExample> batch(config.batch_size);
  double loss_since_eval = 0.0;
  std::size_t steps_since_eval = 0;
  std::size_t step = 0;
  const std::size_t final_step = steps_per_epoch * config.epochs;

  auto evaluate_now = [&] {
    GenDiscLogEntry entry{step, loss_since_eval / static_cast<double>(steps_since_eval), evaluate_dev(dev, backbone)};
    reports.push_back(entry.report);
    result.history.push_back(entry);
    if (log) log(entry);
    if (select_best(reports) == reports.size() - 1) {
      result.best = backbone.clone();
      result.best_step = step;
    }
    loss_since_eval = 0.0;
    steps_since_eval = 0;
  };

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, "gendisc-epoch-" + std::to_string(epoch)));
    shuffle_in_place(order, rng);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        const TrainingInstance& inst = train[order[b * config.batch_size + i]];
        batch[i] = {inst.input_text, inst.target_text};
      }
      backbone.zero_grad();
      loss_since_eval += backbone.accumulate_nll_gradients(batch);
      optimizer.step(params);
      ++step;
      ++steps_since_eval;
      if (step % config.eval_every_steps == 0 || step == final_step) evaluate_now();
    }
  }
  backbone.zero_grad();
  result.total_steps = step;
  return result;
}

}  // namespace gense
