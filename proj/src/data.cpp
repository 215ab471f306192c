#include "gense/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "gense/error.hpp"
#include "gense/prompt_templates.hpp"

namespace gense {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::optional<std::string> string_field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  std::string trimmed = collapse_whitespace(it->get<std::string>());
  if (trimmed.empty()) return std::nullopt;
  return it->get<std::string>();
}

void check_malformed_rate(const std::filesystem::path& path, std::size_t bad, std::size_t total) {
  if (bad * 10 > total) {
    throw FormatError(path.string() + ": " + std::to_string(bad) + " of " + std::to_string(total) +
                      " lines malformed (more than 10%)");
  }
}

}  // namespace

std::string_view to_string(TaskKind task) {
  return task == TaskKind::Generation ? "generation" : "discrimination";
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string normalize_for_matching(std::string_view text) {
  std::string out = collapse_whitespace(text);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

LineReader::LineReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot read " + path.string());
}

std::optional<std::string> LineReader::next() {
  std::string line;
  if (!std::getline(in_, line)) {
    if (in_.bad()) throw IoError("read failure on " + path_.string());
    return std::nullopt;
  }
  ++line_number_;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

NliLoadResult load_nli(const std::filesystem::path& path) {
  LineReader reader(path);
  NliLoadResult out;
  std::size_t total = 0;
  while (auto line = reader.next()) {
    if (collapse_whitespace(*line).empty()) continue;
    ++total;
    nlohmann::json obj = nlohmann::json::parse(*line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      ++out.skipped;
      continue;
    }
    auto premise = string_field(obj, "premise");
    auto entailment = string_field(obj, "entailment");
    auto contradiction = string_field(obj, "contradiction");
    if (!premise || !entailment || !contradiction) {
      ++out.skipped;
      continue;
    }
    if (normalize_for_matching(*premise) == normalize_for_matching(*entailment)) {
      out.warnings.push_back(path.filename().string() + ":" + std::to_string(reader.line_number()) +
                             ": premise equals entailment");
    }
    out.triplets.push_back({std::move(*premise), std::move(*entailment), std::move(*contradiction)});
  }
  check_malformed_rate(path, out.skipped, total);
  return out;
}

std::vector<TrainingInstance> build_instances(const NliTriplet& t) {
  return {
      {render(PromptKind::EntailmentGen, t.premise).text, t.entailment, TaskKind::Generation},
      {render(PromptKind::ContradictionGen, t.premise).text, t.contradiction, TaskKind::Generation},
      {render(PromptKind::Discrimination, t.premise, t.entailment).text, "true", TaskKind::Discrimination},
      {render(PromptKind::Discrimination, t.premise, t.contradiction).text, "false",
       TaskKind::Discrimination},
  };
}

std::vector<TrainingInstance> build_instances(const std::vector<NliTriplet>& triplets) {
  std::vector<TrainingInstance> out;
  out.reserve(triplets.size() * 4);
  for (const auto& t : triplets) {
    auto four = build_instances(t);
    std::move(four.begin(), four.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<TrainingInstance> mix_instances(std::vector<TrainingInstance> instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mix-instances"));
  shuffle_in_place(instances, rng);
  return instances;
}

std::set<std::string> normalize_exclusions(const std::set<std::string>& raw) {
  std::set<std::string> out;
  for (const auto& s : raw) out.insert(normalize_for_matching(s));
  return out;
}

UnlabeledReader::UnlabeledReader(const std::filesystem::path& path, std::set<std::string> normalized_exclusions)
    : lines_(path), tag_(path.filename().string()), exclusions_(std::move(normalized_exclusions)) {}

std::optional<UnlabeledSentence> UnlabeledReader::next() {
  while (auto line = lines_.next()) {
    std::string text = collapse_whitespace(*line);
    if (text.empty()) {
      ++blank_;
      continue;
    }
    if (!exclusions_.empty() && exclusions_.count(normalize_for_matching(text)) != 0) {
      ++excluded_;
      continue;
    }
    return UnlabeledSentence{std::move(text), tag_ + ":" + std::to_string(lines_.line_number())};
  }
  return std::nullopt;
}

UnlabeledLoadResult load_unlabeled(const std::filesystem::path& path,
                                   const std::optional<std::set<std::string>>& exclusion_set) {
  UnlabeledReader reader(path, exclusion_set ? normalize_exclusions(*exclusion_set) : std::set<std::string>{});
  UnlabeledLoadResult out;
  while (auto s = reader.next()) out.sentences.push_back(std::move(*s));
  out.blank_lines = reader.blank_lines();
  out.excluded = reader.excluded();
  return out;
}

QaLoadResult load_qa(const std::filesystem::path& path) {
  LineReader reader(path);
  QaLoadResult out;
  std::size_t total = 0;
  while (auto line = reader.next()) {
    if (collapse_whitespace(*line).empty()) continue;
    ++total;
    nlohmann::json obj = nlohmann::json::parse(*line, nullptr, false);
    auto question = obj.is_object() ? string_field(obj, "question") : std::nullopt;
    auto answer = obj.is_object() ? string_field(obj, "answer") : std::nullopt;
    if (!question || !answer) {
      ++out.skipped;
      continue;
    }
    out.pairs.push_back({std::move(*question), std::move(*answer)});
  }
  check_malformed_rate(path, out.skipped, total);
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample fraction must be in (0, 1]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // One permutation per (seed, n); every fraction takes a prefix of it, which
  // is what makes nested fractions nest.
  Rng rng(derive_seed(seed, "subsample"));
  shuffle_in_place(order, rng);
  // The epsilon absorbs representation error (0.29 * 100 == 28.999...).
  const double scaled = fraction * static_cast<double>(n);
  const auto keep = std::min(n, static_cast<std::size_t>(std::floor(scaled + 1e-9 * std::max(1.0, scaled))));
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

PairGroupingResult group_pairs_into_triplets(const std::filesystem::path& path) {
  struct Group {
    std::optional<std::string> entailment;
    std::optional<std::string> contradiction;
  };
  LineReader reader(path);
  PairGroupingResult out;
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  std::size_t total = 0;
  while (auto line = reader.next()) {
    if (collapse_whitespace(*line).empty()) continue;
    ++total;
    nlohmann::json obj = nlohmann::json::parse(*line, nullptr, false);
    if (!obj.is_object()) {
      ++out.skipped_lines;
      continue;
    }
    auto premise = string_field(obj, "premise");
    if (!premise) premise = string_field(obj, "sentence1");
    auto hypothesis = string_field(obj, "hypothesis");
    if (!hypothesis) hypothesis = string_field(obj, "sentence2");
    auto label = string_field(obj, "label");
    if (!label) label = string_field(obj, "gold_label");
    if (!premise || !hypothesis || !label) {
      ++out.skipped_lines;
      continue;
    }
    auto [it, inserted] = groups.try_emplace(*premise);
    if (inserted) order.push_back(*premise);
    if (*label == "entailment" && !it->second.entailment) it->second.entailment = *hypothesis;
    if (*label == "contradiction" && !it->second.contradiction) it->second.contradiction = *hypothesis;
  }
  check_malformed_rate(path, out.skipped_lines, total);
  out.premises_seen = order.size();
  for (const auto& premise : order) {
    const Group& g = groups.at(premise);
    if (g.entailment && g.contradiction) {
      out.triplets.push_back({premise, *g.entailment, *g.contradiction});
    } else {
      ++out.premises_dropped;
    }
  }
  return out;
}

nlohmann::json triplet_json(const NliTriplet& t) {
  nlohmann::json j;
  j["premise"] = t.premise;
  j["entailment"] = t.entailment;
  j["contradiction"] = t.contradiction;
  return j;
}

}  // namespace gense
