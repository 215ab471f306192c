#include "gense/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gense/data.hpp"
#include "gense/error.hpp"

namespace gense {
namespace {

double squared_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("correlation inputs have different lengths");
  if (x.size() < 2) throw std::invalid_argument("correlation needs at least 2 items");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("correlation is undefined for a constant list");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("correlation inputs have different lengths");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const int> relevance) {
  if (scores.size() != relevance.size()) throw std::invalid_argument("scores and relevance have different lengths");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (relevance[order[r]] == 0) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return total / static_cast<double>(hits);
}

StsDataset load_sts(const std::filesystem::path& path, double scale_min, double scale_max) {
  if (!(scale_min < scale_max)) throw std::invalid_argument("STS scale bounds must satisfy min < max");
  LineReader reader(path);
  StsDataset ds;
  ds.name = path.stem().string();
  ds.scale_min = scale_min;
  ds.scale_max = scale_max;
  while (auto line = reader.next()) {
    if (collapse_whitespace(*line).empty()) continue;
    const auto fields = split_tabs(*line);
    const std::string where = path.string() + ":" + std::to_string(reader.line_number());
    if (fields.size() != 3) throw FormatError(where + ": expected score<TAB>sentence_a<TAB>sentence_b");
    double score = 0.0;
    const std::string s = collapse_whitespace(fields[0]);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), score);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError(where + ": bad score '" + fields[0] + "'");
    if (score < scale_min || score > scale_max) throw FormatError(where + ": score outside the declared scale");
    StsExample ex{collapse_whitespace(fields[1]), collapse_whitespace(fields[2]), score};
    if (ex.sentence_a.empty() || ex.sentence_b.empty()) throw FormatError(where + ": empty sentence");
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

StsResult evaluate_sts(const SentenceEncoder& model, const StsDataset& dataset) {
  if (dataset.examples.empty()) throw std::invalid_argument("STS dataset is empty");
  std::vector<double> predicted;
  std::vector<double> gold;
  for (const auto& ex : dataset.examples) {
    predicted.push_back(cosine(model.encode(ex.sentence_a), model.encode(ex.sentence_b)));
    gold.push_back(ex.gold_score);
  }
  return {spearman(predicted, gold), dataset.examples.size()};
}

std::vector<RankingQuery> load_ranking(const std::filesystem::path& path) {
  LineReader reader(path);
  std::vector<RankingQuery> out;
  while (auto line = reader.next()) {
    if (collapse_whitespace(*line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(reader.line_number());
    nlohmann::json j = nlohmann::json::parse(*line, nullptr, false);
    try {
      if (j.is_discarded()) throw FormatError("not JSON");
      RankingQuery q{j.at("query").get<std::string>(), j.at("candidates").get<std::vector<std::string>>(),
                     j.at("relevance").get<std::vector<int>>()};
      if (q.candidates.size() != q.relevance.size()) throw FormatError("candidates and relevance differ in length");
      out.push_back(std::move(q));
    } catch (const std::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return out;
}

RankingResult evaluate_ranking(const SentenceEncoder& model, std::span<const RankingQuery> queries) {
  RankingResult r;
  double total = 0.0;
  for (const auto& q : queries) {
    if (q.candidates.size() != q.relevance.size())
      throw std::invalid_argument("ranking query candidates and relevance differ in length");
    const EmbeddingVector qv = model.encode(q.query);
    std::vector<double> scores;
    for (const auto& c : q.candidates) scores.push_back(cosine(qv, model.encode(c)));
    const auto ap = average_precision(scores, q.relevance);
    if (!ap) {
      ++r.skipped;
      continue;
    }
    total += *ap;
    ++r.evaluated;
  }
  if (r.evaluated > 0) r.mean_ap = total / static_cast<double>(r.evaluated);
  return r;
}

std::string_view to_string(FormulaMode mode) {
  return mode == FormulaMode::Standard ? "standard" : "literal";
}

FormulaMode formula_mode_from_string(std::string_view name) {
  if (name == "standard") return FormulaMode::Standard;
  if (name == "literal") return FormulaMode::LiteralForm;
  throw std::invalid_argument("unknown formula mode '" + std::string(name) + "' (expected standard or literal)");
}

nlohmann::json DiagnosticsConfig::to_json() const {
  return {{"align_threshold", align_threshold}, {"formula_mode", to_string(formula_mode)}};
}

DiagnosticsConfig DiagnosticsConfig::from_json(const nlohmann::json& j) {
  DiagnosticsConfig c;
  c.align_threshold = j.value("align_threshold", c.align_threshold);
  if (j.contains("formula_mode")) c.formula_mode = formula_mode_from_string(j.at("formula_mode").get<std::string>());
  return c;
}

double alignment_loss(std::span<const std::pair<EmbeddingVector, EmbeddingVector>> pairs, FormulaMode mode) {
  if (pairs.empty()) throw std::invalid_argument("alignment needs at least one pair");
  double total = 0.0;
  for (const auto& [a, b] : pairs) {
    const double d2 = squared_distance(unit_normalized(a), unit_normalized(b));
    total += mode == FormulaMode::Standard ? d2 : std::sqrt(d2);
  }
  const double mean = total / static_cast<double>(pairs.size());
  return mode == FormulaMode::Standard ? mean : -mean;
}

double uniformity_loss(std::span<const EmbeddingVector> embeddings, FormulaMode mode) {
  if (embeddings.size() < 2) throw std::invalid_argument("uniformity needs at least 2 sentences");
  std::vector<EmbeddingVector> unit;
  unit.reserve(embeddings.size());
  for (const auto& e : embeddings) unit.push_back(unit_normalized(e));
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < unit.size(); ++i) {
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      const double d2 = squared_distance(unit[i], unit[j]);
      total += std::exp(-2.0 * (mode == FormulaMode::Standard ? d2 : std::sqrt(d2)));
      ++count;
    }
  }
  return std::log(total / static_cast<double>(count));
}

double alignment_loss(std::span<const std::pair<std::string, std::string>> pairs, const SentenceEncoder& model,
                      const DiagnosticsConfig& config) {
  std::vector<std::pair<EmbeddingVector, EmbeddingVector>> embedded;
  embedded.reserve(pairs.size());
  for (const auto& [a, b] : pairs) embedded.emplace_back(model.encode(a), model.encode(b));
  return alignment_loss(embedded, config.formula_mode);
}

double uniformity_loss(std::span<const std::string> sentences, const SentenceEncoder& model,
                       const DiagnosticsConfig& config) {
  std::vector<EmbeddingVector> embedded;
  embedded.reserve(sentences.size());
  for (const auto& s : sentences) embedded.push_back(model.encode(s));
  return uniformity_loss(embedded, config.formula_mode);
}

AlignmentSelection select_alignment_pairs(const StsDataset& dataset, double threshold) {
  AlignmentSelection sel;
  for (const auto& ex : dataset.examples) {
    if (ex.gold_score > threshold)
      sel.pairs.emplace_back(ex.sentence_a, ex.sentence_b);
    else if (ex.gold_score == threshold)
      ++sel.at_threshold;
  }
  return sel;
}

std::vector<std::string> dataset_sentences(const StsDataset& dataset) {
  std::vector<std::string> out;
  out.reserve(2 * dataset.examples.size());
  for (const auto& ex : dataset.examples) {
    out.push_back(ex.sentence_a);
    out.push_back(ex.sentence_b);
  }
  return out;
}

Diagnostics compute_diagnostics(const SentenceEncoder& model, const StsDataset& dataset,
                                const DiagnosticsConfig& config) {
  const AlignmentSelection sel = select_alignment_pairs(dataset, config.align_threshold);
  if (sel.pairs.empty())
    throw std::invalid_argument("no STS pair in " + dataset.name + " has a gold score above " +
                                std::to_string(config.align_threshold));
  Diagnostics d;
  d.alignment = alignment_loss(sel.pairs, model, config);
  d.uniformity = uniformity_loss(dataset_sentences(dataset), model, config);
  d.alignment_pairs = sel.pairs.size();
  d.excluded_at_threshold = sel.at_threshold;
  d.formula_mode = config.formula_mode;
  return d;
}

double EvaluationReport::average_spearman() const {
  if (sts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [name, r] : sts) total += r.spearman;
  return total / static_cast<double>(sts.size());
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json j;
  j["checkpoint"] = checkpoint;
  j["sts"] = nlohmann::json::object();
  for (const auto& [name, r] : sts) j["sts"][name] = {{"spearman", r.spearman}, {"n", r.n}};
  if (!sts.empty()) j["average_spearman"] = average_spearman();
  j["ranking"] = nlohmann::json::object();
  for (const auto& [name, r] : ranking)
    j["ranking"][name] = {{"average_precision", r.mean_ap}, {"evaluated", r.evaluated}, {"skipped", r.skipped}};
  if (diagnostics) {
    j["alignment"] = diagnostics->alignment;
    j["uniformity"] = diagnostics->uniformity;
    j["alignment_pairs"] = diagnostics->alignment_pairs;
    j["excluded_at_threshold"] = diagnostics->excluded_at_threshold;
    j["formula_mode"] = to_string(diagnostics->formula_mode);
  }
  return j;
}

}  // namespace gense
