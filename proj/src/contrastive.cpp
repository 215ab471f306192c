#include "gense/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gense/data.hpp"
#include "gense/embedding.hpp"
#include "gense/error.hpp"
#include "gense/optimizer.hpp"
#include "gense/rng.hpp"

namespace gense {
namespace {

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
  return s;
}

double norm(const EmbeddingVector& v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) throw std::invalid_argument("contrastive loss is undefined for a zero embedding");
  return n;
}

void check_shapes(std::span<const EmbeddingVector> anchors, std::span<const EmbeddingVector> positives,
                  std::span<const EmbeddingVector> negatives, bool with_negatives) {
  if (anchors.empty()) throw std::invalid_argument("contrastive batch is empty");
  if (positives.size() != anchors.size() || (with_negatives && negatives.size() != anchors.size()))
    throw std::invalid_argument("contrastive batch lists have different lengths");
  const std::size_t d = anchors.front().dim();
  auto same_dim = [d](const EmbeddingVector& v) { return v.dim() == d; };
  if (!std::all_of(anchors.begin(), anchors.end(), same_dim) ||
      !std::all_of(positives.begin(), positives.end(), same_dim) ||
      !std::all_of(negatives.begin(), negatives.end(), same_dim))
    throw std::invalid_argument("contrastive batch embeddings have different dimensions");
}

// Candidates for every anchor are [positives..., negatives...]; the target of
// anchor i is candidate i.
EmbeddingLoss softmax_contrastive(std::span<const EmbeddingVector> anchors,
                                  std::span<const EmbeddingVector> positives,
                                  std::span<const EmbeddingVector> negatives, double temperature,
                                  bool want_grad) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const std::size_t n = anchors.size();
  std::vector<const EmbeddingVector*> cands;
  for (const auto& p : positives) cands.push_back(&p);
  for (const auto& q : negatives) cands.push_back(&q);
  const std::size_t k = cands.size();
  const std::size_t d = anchors.front().dim();

  std::vector<double> anchor_norm(n);
  std::vector<double> cand_norm(k);
  for (std::size_t i = 0; i < n; ++i) anchor_norm[i] = norm(anchors[i]);
  for (std::size_t j = 0; j < k; ++j) cand_norm[j] = norm(*cands[j]);

  EmbeddingLoss out;
  if (want_grad) {
    out.anchor_grads.assign(n, EmbeddingVector{std::vector<double>(d, 0.0)});
    out.positive_grads.assign(n, EmbeddingVector{std::vector<double>(d, 0.0)});
    out.negative_grads.assign(negatives.size(), EmbeddingVector{std::vector<double>(d, 0.0)});
  }
  auto cand_grad = [&](std::size_t j) -> EmbeddingVector& {
    return j < n ? out.positive_grads[j] : out.negative_grads[j - n];
  };

  std::vector<double> cos(k);
  std::vector<double> logits(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      cos[j] = dot(anchors[i], *cands[j]) / (anchor_norm[i] * cand_norm[j]);
      logits[j] = cos[j] / temperature;
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - peak);
    out.loss += peak + std::log(z) - logits[i];
    if (!want_grad) continue;

    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(logits[j] - peak) / z;
      const double g = (p - (j == i ? 1.0 : 0.0)) / (static_cast<double>(n) * temperature);
      if (g == 0.0) continue;
      // d cos(a, b) / da = b / (|a||b|) - cos * a / |a|^2
      const EmbeddingVector& a = anchors[i];
      const EmbeddingVector& b = *cands[j];
      EmbeddingVector& ga = out.anchor_grads[i];
      EmbeddingVector& gb = cand_grad(j);
      const double ab = anchor_norm[i] * cand_norm[j];
      const double aa = anchor_norm[i] * anchor_norm[i];
      const double bb = cand_norm[j] * cand_norm[j];
      for (std::size_t t = 0; t < d; ++t) {
        ga.values[t] += g * (b.values[t] / ab - cos[j] * a.values[t] / aa);
        gb.values[t] += g * (a.values[t] / ab - cos[j] * b.values[t] / bb);
      }
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

std::vector<EmbeddingVector> embed_all(std::span<const std::string> sentences, const Seq2SeqBackbone& backbone) {
  std::vector<EmbeddingVector> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(embed(s, backbone).vector);
  return out;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  return kind == LossKind::Triplet ? "triplet" : "pair";
}

LossKind loss_kind_from_string(std::string_view name) {
  if (name == "triplet") return LossKind::Triplet;
  if (name == "pair") return LossKind::Pair;
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "' (expected triplet or pair)");
}

void ContrastiveBatch::validate() const {
  if (anchors.empty()) throw std::invalid_argument("contrastive batch is empty");
  if (positives.size() != anchors.size() || (negatives && negatives->size() != anchors.size()))
    throw std::invalid_argument("contrastive batch lists have different lengths");
}

double triplet_loss(std::span<const EmbeddingVector> anchors, std::span<const EmbeddingVector> positives,
                    std::span<const EmbeddingVector> negatives, double temperature) {
  check_shapes(anchors, positives, negatives, true);
  return softmax_contrastive(anchors, positives, negatives, temperature, false).loss;
}

double pair_loss(std::span<const EmbeddingVector> anchors, std::span<const EmbeddingVector> positives,
                 double temperature) {
  check_shapes(anchors, positives, {}, false);
  return softmax_contrastive(anchors, positives, {}, temperature, false).loss;
}

EmbeddingLoss triplet_loss_with_gradient(std::span<const EmbeddingVector> anchors,
                                         std::span<const EmbeddingVector> positives,
                                         std::span<const EmbeddingVector> negatives, double temperature) {
  check_shapes(anchors, positives, negatives, true);
  return softmax_contrastive(anchors, positives, negatives, temperature, true);
}

EmbeddingLoss pair_loss_with_gradient(std::span<const EmbeddingVector> anchors,
                                      std::span<const EmbeddingVector> positives, double temperature) {
  check_shapes(anchors, positives, {}, false);
  return softmax_contrastive(anchors, positives, {}, temperature, true);
}

double literal_ratio_triplet(std::span<const EmbeddingVector> anchors, std::span<const EmbeddingVector> positives,
                             std::span<const EmbeddingVector> negatives, double temperature) {
  check_shapes(anchors, positives, negatives, true);
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const double n = static_cast<double>(anchors.size());
  double total = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double pos = std::exp(cosine(anchors[i], positives[i]) / temperature);
    const double neg = std::exp(cosine(anchors[i], negatives[i]) / temperature);
    total += pos / (n * (pos + neg));
  }
  return total / n;
}

double triplet_loss(const ContrastiveBatch& batch, double temperature, const Seq2SeqBackbone& backbone) {
  batch.validate();
  if (!batch.negatives) throw std::invalid_argument("triplet_loss needs negatives; use pair_loss instead");
  const auto a = embed_all(batch.anchors, backbone);
  const auto p = embed_all(batch.positives, backbone);
  const auto n = embed_all(*batch.negatives, backbone);
  return triplet_loss(a, p, n, temperature);
}

double pair_loss(const ContrastiveBatch& batch, double temperature, const Seq2SeqBackbone& backbone) {
  batch.validate();
  const auto a = embed_all(batch.anchors, backbone);
  const auto p = embed_all(batch.positives, backbone);
  return pair_loss(a, p, temperature);
}

double accumulate_contrastive_gradients(const ContrastiveBatch& batch, LossKind kind, double temperature,
                                        Seq2SeqBackbone& backbone) {
  batch.validate();
  const bool triplet = kind == LossKind::Triplet;
  if (triplet && !batch.negatives) throw std::invalid_argument("triplet loss needs negatives");
  const std::size_t n = batch.size();
  std::vector<std::string> texts;
  texts.reserve((triplet ? 3 : 2) * n);
  for (const auto& s : batch.anchors) texts.push_back(embedding_prompt(s));
  for (const auto& s : batch.positives) texts.push_back(embedding_prompt(s));
  if (triplet)
    for (const auto& s : *batch.negatives) texts.push_back(embedding_prompt(s));

  auto objective = [&](std::span<const EmbeddingVector> embs, std::span<EmbeddingVector> grads) {
    const auto anchors = embs.subspan(0, n);
    const auto positives = embs.subspan(n, n);
    EmbeddingLoss r = triplet ? triplet_loss_with_gradient(anchors, positives, embs.subspan(2 * n, n), temperature)
                              : pair_loss_with_gradient(anchors, positives, temperature);
    for (std::size_t i = 0; i < n; ++i) {
      grads[i] = std::move(r.anchor_grads[i]);
      grads[n + i] = std::move(r.positive_grads[i]);
      if (triplet) grads[2 * n + i] = std::move(r.negative_grads[i]);
    }
    return r.loss;
  };
  return backbone.accumulate_embedding_gradients(texts, objective);
}

ContrastiveCorpus load_contrastive_corpus(const std::filesystem::path& path) {
  LineReader reader(path);
  ContrastiveCorpus corpus;
  std::size_t total = 0;
  auto text_field = [](const nlohmann::json& j, const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    std::string s = collapse_whitespace(it->get<std::string>());
    if (s.empty()) return std::nullopt;
    return s;
  };
  while (auto line = reader.next()) {
    if (collapse_whitespace(*line).empty()) continue;
    ++total;
    nlohmann::json j = nlohmann::json::parse(*line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++corpus.skipped;
      continue;
    }
    std::optional<ContrastiveExample> ex;
    if (j.contains("anchor")) {
      auto a = text_field(j, "anchor");
      auto p = text_field(j, "positive");
      if (a && p) ex = ContrastiveExample{*a, *p, j.contains("negative") ? text_field(j, "negative") : std::nullopt};
      if (ex && j.contains("negative") && !ex->negative) ex.reset();
    } else if (j.contains("premise")) {
      auto a = text_field(j, "premise");
      auto p = text_field(j, "entailment");
      auto c = text_field(j, "contradiction");
      if (a && p && c) ex = ContrastiveExample{*a, *p, *c};
    } else if (j.contains("question")) {
      auto q = text_field(j, "question");
      auto r = text_field(j, "answer");
      if (q && r) ex = ContrastiveExample{*q, *r, std::nullopt};
    }
    if (!ex) {
      ++corpus.skipped;
      continue;
    }
    if (ex->negative) ++corpus.with_negative;
    corpus.examples.push_back(std::move(*ex));
  }
  if (corpus.skipped * 10 > total)
    throw FormatError(path.string() + ": " + std::to_string(corpus.skipped) + " of " + std::to_string(total) +
                      " lines are malformed");
  return corpus;
}

void StageConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("stage temperature must be positive");
  if (!(learning_rate > 0.0) || batch_size == 0 || epochs == 0)
    throw std::invalid_argument("stage learning_rate, batch_size and epochs must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("stage weight_decay must be non-negative");
  if (corpus_tag.empty() || corpus_tag.find('/') != std::string::npos)
    throw std::invalid_argument("stage corpus_tag must be a non-empty name without '/'");
}

nlohmann::json StageConfig::to_json() const {
  return {{"corpus", corpus.string()},     {"corpus_tag", corpus_tag}, {"loss", to_string(loss)},
          {"temperature", temperature},    {"learning_rate", learning_rate},
          {"batch_size", batch_size},      {"epochs", epochs},         {"seed", seed},
          {"weight_decay", weight_decay}};
}

StageConfig StageConfig::from_json(const nlohmann::json& j, StageConfig base) {
  if (j.contains("corpus")) base.corpus = j.at("corpus").get<std::string>();
  base.corpus_tag = j.value("corpus_tag", base.corpus_tag);
  if (j.contains("loss")) base.loss = loss_kind_from_string(j.at("loss").get<std::string>());
  base.temperature = j.value("temperature", base.temperature);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.epochs = j.value("epochs", base.epochs);
  base.seed = j.value("seed", base.seed);
  base.weight_decay = j.value("weight_decay", base.weight_decay);
  base.validate();
  return base;
}

StageConfig StageConfig::from_json(const nlohmann::json& j) {
  return from_json(j, StageConfig{});
}

std::string_view to_string(ScheduleName name) {
  switch (name) {
    case ScheduleName::Universal: return "universal";
    case ScheduleName::DomainAdapt: return "domain-adapt";
    case ScheduleName::QaOnly: return "qa-only";
    case ScheduleName::QaPlus: return "qa-plus";
    case ScheduleName::Custom: return "custom";
  }
  return "custom";
}

ScheduleName schedule_name_from_string(std::string_view name) {
  for (auto n : {ScheduleName::Universal, ScheduleName::DomainAdapt, ScheduleName::QaOnly, ScheduleName::QaPlus,
                 ScheduleName::Custom})
    if (to_string(n) == name) return n;
  throw std::invalid_argument("unknown schedule '" + std::string(name) +
                              "' (expected universal, domain-adapt, qa-only, qa-plus or custom)");
}

StageConfig synthetic_stage(std::filesystem::path corpus) {
  StageConfig s;
  s.corpus = std::move(corpus);
  s.corpus_tag = "synthetic";
  s.batch_size = 1024;
  s.epochs = 1;
  return s;
}

StageConfig in_domain_stage(std::filesystem::path corpus) {
  StageConfig s = synthetic_stage(std::move(corpus));
  s.corpus_tag = "in-domain";
  return s;
}

StageConfig nli_stage(std::filesystem::path corpus) {
  StageConfig s;
  s.corpus = std::move(corpus);
  s.corpus_tag = "nli";
  s.batch_size = 512;
  s.epochs = 3;
  return s;
}

StageConfig qa_stage(std::filesystem::path corpus) {
  StageConfig s;
  s.corpus = std::move(corpus);
  s.corpus_tag = "qa";
  s.loss = LossKind::Pair;
  s.temperature = 0.01;
  s.batch_size = 1024;
  s.epochs = 1;
  return s;
}

TrainingSchedule universal_schedule(std::filesystem::path synthetic, std::filesystem::path nli) {
  return {ScheduleName::Universal, {synthetic_stage(std::move(synthetic)), nli_stage(std::move(nli))}};
}

TrainingSchedule domain_adapt_schedule(std::filesystem::path synthetic, std::filesystem::path in_domain,
                                       std::filesystem::path nli) {
  return {ScheduleName::DomainAdapt,
          {synthetic_stage(std::move(synthetic)), in_domain_stage(std::move(in_domain)), nli_stage(std::move(nli))}};
}

TrainingSchedule qa_only_schedule(std::filesystem::path qa, std::filesystem::path nli) {
  return {ScheduleName::QaOnly, {qa_stage(std::move(qa)), nli_stage(std::move(nli))}};
}

TrainingSchedule qa_plus_schedule(std::filesystem::path synthetic, std::filesystem::path qa,
                                  std::filesystem::path nli) {
  return {ScheduleName::QaPlus,
          {synthetic_stage(std::move(synthetic)), qa_stage(std::move(qa)), nli_stage(std::move(nli))}};
}

StageResult run_stage(const StageConfig& stage, Seq2SeqBackbone& backbone, std::size_t stage_index,
                      const StageLogSink& log) {
  stage.validate();
  ContrastiveCorpus corpus = load_contrastive_corpus(stage.corpus);
  const std::size_t n = corpus.examples.size();
  StageResult result;
  if (stage.loss == LossKind::Triplet && corpus.with_negative != n) {
    throw std::invalid_argument("stage " + std::to_string(stage_index) + ": triplet loss needs negatives but " +
                                std::to_string(n - corpus.with_negative) + " of " + std::to_string(n) +
                                " examples in " + stage.corpus.string() + " have none");
  }
  if (stage.loss == LossKind::Pair && corpus.with_negative > 0)
    result.warnings.push_back("stage " + std::to_string(stage_index) + ": pair loss ignores the negatives of " +
                              std::to_string(corpus.with_negative) + " examples in " + stage.corpus.string());
  if (stage.batch_size == 1)
    result.warnings.push_back("stage " + std::to_string(stage_index) +
                              ": batch size 1 leaves no in-batch negatives");
  const std::size_t steps_per_epoch = n / stage.batch_size;
  if (steps_per_epoch == 0) {
    throw std::invalid_argument("stage " + std::to_string(stage_index) + ": batch_size " +
                                std::to_string(stage.batch_size) + " exceeds the " + std::to_string(n) +
                                " examples in " + stage.corpus.string());
  }
  result.dropped_per_epoch = n % stage.batch_size;

  AdamW optimizer({stage.learning_rate, 0.9, 0.999, 1e-8, stage.weight_decay});
  auto params = backbone.parameters();
  std::vector<std::size_t> order(n);
  ContrastiveBatch batch;
  const bool triplet = stage.loss == LossKind::Triplet;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < stage.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(stage.seed, "stage-" + std::to_string(stage_index) + "-epoch-" + std::to_string(epoch)));
    shuffle_in_place(order, rng);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      batch.anchors.clear();
      batch.positives.clear();
      batch.negatives = triplet ? std::optional<std::vector<std::string>>(std::in_place) : std::nullopt;
      for (std::size_t i = 0; i < stage.batch_size; ++i) {
        const ContrastiveExample& ex = corpus.examples[order[b * stage.batch_size + i]];
        batch.anchors.push_back(ex.anchor);
        batch.positives.push_back(ex.positive);
        if (triplet) batch.negatives->push_back(*ex.negative);
      }
      backbone.zero_grad();
      const double loss = accumulate_contrastive_gradients(batch, stage.loss, stage.temperature, backbone);
      optimizer.step(params);
      ++step;
      result.losses.push_back(loss);
      if (log) log({stage_index, step, loss});
    }
  }
  backbone.zero_grad();
  return result;
}

std::filesystem::path stage_checkpoint_path(const std::filesystem::path& root, ScheduleName name,
                                            std::size_t stage_index, const StageConfig& stage) {
  return root / std::string(to_string(name)) / (std::to_string(stage_index) + "-" + stage.corpus_tag + ".ckpt");
}

namespace {

void save_atomically(const Seq2SeqBackbone& backbone, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  backbone.save(tmp);
  std::filesystem::rename(tmp, path);
}

}  // namespace

ScheduleResult run_schedule(const TrainingSchedule& schedule, Seq2SeqBackbone& backbone,
                            const ScheduleOptions& options) {
  if (schedule.stages.empty()) throw std::invalid_argument("training schedule has no stages");
  for (const auto& stage : schedule.stages) {
    stage.validate();
    if (!std::filesystem::exists(stage.corpus))
      throw IoError("stage corpus does not exist: " + stage.corpus.string());
  }
  ScheduleResult result;
  std::filesystem::create_directories(options.checkpoint_root / std::string(to_string(schedule.name)));
  bool resuming = options.resume;
  for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
    const StageConfig& stage = schedule.stages[i];
    const std::size_t index = i + 1;
    const auto path = stage_checkpoint_path(options.checkpoint_root, schedule.name, index, stage);
    if (resuming && std::filesystem::exists(path)) {
      backbone.load(path);
      result.resumed_stages.push_back(index);
      result.stage_checkpoints.push_back(path);
      result.stage_results.emplace_back();
      continue;
    }
    resuming = false;
    StageResult stage_result = run_stage(stage, backbone, index, options.log);
    if (options.warn)
      for (const auto& w : stage_result.warnings) options.warn(w);
    save_atomically(backbone, path);
    result.stage_checkpoints.push_back(path);
    result.stage_results.push_back(std::move(stage_result));
  }
  result.final_checkpoint = options.checkpoint_root / std::string(to_string(schedule.name)) / "final.ckpt";
  save_atomically(backbone, result.final_checkpoint);
  return result;
}

}  // namespace gense
