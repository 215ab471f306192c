#include "gense/toy_corpus.hpp"

#include <array>
#include <fstream>
#include <set>
#include <span>
#include <string_view>

#include "gense/error.hpp"

namespace gense::toy {
namespace {

struct Concept {
  std::vector<std::string_view> words;
  int cls = 0;
};

const std::vector<Concept> kSubjects = {
    {{"man", "guy"}, 0},  {{"woman", "lady"}, 0},  {{"child", "kid"}, 0},  {{"boy", "lad"}, 0},
    {{"dog", "puppy"}, 1}, {{"cat", "kitten"}, 1}, {{"horse", "pony"}, 1},
};
const std::array<std::string_view, 2> kSubjectHypernyms = {"person", "animal"};

const std::vector<Concept> kActions = {
    {{"running", "jogging"}, 0}, {{"jumping", "leaping"}, 0}, {{"swimming", "paddling"}, 0},
    {{"sleeping", "napping"}, 1}, {{"sitting", "resting"}, 1}, {{"eating", "feeding"}, 2},
    {{"drinking", "sipping"}, 2},
};

const std::vector<Concept> kPlaces = {
    {{"park", "garden"}, 0}, {{"beach", "shore"}, 0}, {{"street", "road"}, 0},
    {{"kitchen", "house"}, 0}, {{"field", "meadow"}, 0},
};

const std::vector<std::string_view> kAdjectives = {"young", "old", "small", "tall", "happy", "tired"};

std::string_view pick(std::span<const std::string_view> words, Rng& rng) {
  return words[rng.below(words.size())];
}

std::string sentence(std::optional<std::string_view> adjective, std::string_view subject, std::string_view action,
                     std::optional<std::string_view> place) {
  std::string s = "a ";
  if (adjective) s += std::string(*adjective) + " ";
  s += std::string(subject) + " is " + std::string(action);
  if (place) s += " in the " + std::string(*place);
  return s + ".";
}

std::size_t other_with_class(const std::vector<Concept>& concepts, std::size_t current, bool same_class, Rng& rng) {
  std::vector<std::size_t> options;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (i == current) continue;
    if ((concepts[i].cls == concepts[current].cls) == same_class) options.push_back(i);
  }
  return options[rng.below(options.size())];
}

std::size_t other_index(std::size_t n, std::size_t current, Rng& rng) {
  const std::size_t k = rng.below(n - 1);
  return k >= current ? k + 1 : k;
}

// One random edit of a frame: subject, action or place.
Frame perturb(Frame f, Rng& rng) {
  switch (rng.below(3)) {
    case 0:
      f.subject = other_with_class(kSubjects, f.subject, rng.uniform() < 0.5, rng);
      break;
    case 1:
      f.action = other_with_class(kActions, f.action, rng.uniform() < 0.4, rng);
      break;
    default:
      if (f.place && rng.uniform() < 0.3)
        f.place.reset();
      else
        f.place = f.place ? other_index(kPlaces.size(), *f.place, rng) : rng.below(kPlaces.size());
      break;
  }
  return f;
}

std::string fresh_sentence(Rng& rng, const std::set<std::string>& held_out, Frame* frame_out = nullptr) {
  while (true) {
    const Frame f = random_frame(rng);
    std::string s = realize(f, rng);
    if (held_out.count(s)) continue;
    if (frame_out) *frame_out = f;
    return s;
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::size_t subject_count() { return kSubjects.size(); }
std::size_t action_count() { return kActions.size(); }
std::size_t place_count() { return kPlaces.size(); }
std::size_t adjective_count() { return kAdjectives.size(); }

Frame random_frame(Rng& rng) {
  Frame f;
  f.subject = rng.below(kSubjects.size());
  if (rng.uniform() < 0.5) f.adjective = rng.below(kAdjectives.size());
  f.action = rng.below(kActions.size());
  if (rng.uniform() < 0.7) f.place = rng.below(kPlaces.size());
  return f;
}

std::string realize(const Frame& frame, Rng& rng) {
  std::optional<std::string_view> adjective;
  if (frame.adjective) adjective = kAdjectives[*frame.adjective];
  const std::string_view subject = pick(kSubjects[frame.subject].words, rng);
  const std::string_view action = pick(kActions[frame.action].words, rng);
  std::optional<std::string_view> place;
  if (frame.place) place = pick(kPlaces[*frame.place].words, rng);
  return sentence(adjective, subject, action, place);
}

double gold_similarity(const Frame& a, const Frame& b) {
  double s = 0.0;
  if (a.subject == b.subject)
    s += 0.35;
  else if (kSubjects[a.subject].cls == kSubjects[b.subject].cls)
    s += 0.35 * 0.5;
  if (a.action == b.action)
    s += 0.4;
  else if (kActions[a.action].cls == kActions[b.action].cls)
    s += 0.4 * 0.25;
  if (a.place == b.place) s += 0.25;
  return 5.0 * s;
}

NliTriplet make_triplet(Rng& rng) {
  const Frame f = random_frame(rng);
  NliTriplet t;
  t.premise = realize(f, rng);

  // Entailment: fresh synonyms, and with some probability a hypernym subject
  // and dropped modifiers. At least the surface or the structure changes.
  const bool hypernym = rng.uniform() < 0.4;
  const bool drop_adjective = f.adjective && rng.uniform() < 0.6;
  const bool drop_place = f.place && rng.uniform() < 0.4;
  std::optional<std::string_view> adjective;
  if (f.adjective && !drop_adjective) adjective = kAdjectives[*f.adjective];
  const std::string_view subject =
      hypernym ? kSubjectHypernyms[kSubjects[f.subject].cls] : pick(kSubjects[f.subject].words, rng);
  std::optional<std::string_view> place;
  if (f.place && !drop_place) place = pick(kPlaces[*f.place].words, rng);
  t.entailment = sentence(adjective, subject, pick(kActions[f.action].words, rng), place);
  if (t.entailment == t.premise) t.entailment = sentence(std::nullopt, kSubjectHypernyms[kSubjects[f.subject].cls],
                                                         pick(kActions[f.action].words, rng), place);

  // Contradiction: an action of another class, or a subject of another class.
  Frame c = f;
  if (rng.uniform() < 0.7)
    c.action = other_with_class(kActions, f.action, false, rng);
  else
    c.subject = other_with_class(kSubjects, f.subject, false, rng);
  t.contradiction = realize(c, rng);
  return t;
}

Corpora generate(const CorpusConfig& config) {
  Corpora out;
  std::set<std::string> held_out;

  Rng sts_rng(derive_seed(config.seed, "toy-sts"));
  out.sts.name = "toy-sts";
  while (out.sts.examples.size() < config.sts_pairs) {
    const Frame a = random_frame(sts_rng);
    Frame b = a;
    const std::size_t edits = sts_rng.below(4);
    for (std::size_t e = 0; e < edits; ++e) b = perturb(b, sts_rng);
    if (sts_rng.uniform() < 0.5) b.adjective = sts_rng.uniform() < 0.5 ? std::nullopt
                                                                       : std::optional(sts_rng.below(kAdjectives.size()));
    StsExample ex{realize(a, sts_rng), realize(b, sts_rng), gold_similarity(a, b)};
    held_out.insert(ex.sentence_a);
    held_out.insert(ex.sentence_b);
    out.sts.examples.push_back(std::move(ex));
  }

  Rng rank_rng(derive_seed(config.seed, "toy-ranking"));
  for (std::size_t q = 0; q < config.ranking_queries; ++q) {
    const Frame f = random_frame(rank_rng);
    RankingQuery query{realize(f, rank_rng), {}, {}};
    for (std::size_t c = 0; c < 8; ++c) {
      Frame g = f;
      const bool relevant = c < 2;
      if (!relevant) g = perturb(perturb(g, rank_rng), rank_rng);
      if (!relevant && g.subject == f.subject && g.action == f.action && g.place == f.place) g = perturb(g, rank_rng);
      query.candidates.push_back(realize(g, rank_rng));
      query.relevance.push_back(relevant ? 1 : 0);
    }
    // Deterministic interleaving so relevant items are not always first.
    std::vector<std::size_t> order(query.candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, rank_rng);
    RankingQuery shuffled{query.query, {}, {}};
    for (std::size_t i : order) {
      shuffled.candidates.push_back(query.candidates[i]);
      shuffled.relevance.push_back(query.relevance[i]);
      held_out.insert(query.candidates[i]);
    }
    held_out.insert(query.query);
    out.ranking.push_back(std::move(shuffled));
  }

  auto triplets = [&](std::string_view tag, std::size_t count) {
    Rng rng(derive_seed(config.seed, tag));
    std::vector<NliTriplet> v;
    while (v.size() < count) {
      NliTriplet t = make_triplet(rng);
      if (held_out.count(t.premise) || held_out.count(t.entailment) || held_out.count(t.contradiction)) continue;
      v.push_back(std::move(t));
    }
    return v;
  };
  out.nli = triplets("toy-nli", config.nli_triplets);
  out.nli_dev = triplets("toy-nli-dev", config.dev_triplets);

  Rng unlabeled_rng(derive_seed(config.seed, "toy-unlabeled"));
  for (std::size_t i = 0; i < config.unlabeled; ++i) out.unlabeled.push_back(fresh_sentence(unlabeled_rng, held_out));

  Rng qa_rng(derive_seed(config.seed, "toy-qa"));
  for (std::size_t i = 0; i < config.qa_pairs; ++i) {
    Frame f;
    std::string answer = fresh_sentence(qa_rng, held_out, &f);
    const std::string_view subject = pick(kSubjects[f.subject].words, qa_rng);
    std::string question = "what is a " + std::string(subject) + " doing";
    if (f.place) question += " in the " + std::string(pick(kPlaces[*f.place].words, qa_rng));
    out.qa.push_back({question + "?", std::move(answer)});
  }
  return out;
}

CorpusFiles write(const Corpora& corpora, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CorpusFiles files{dir / "nli.jsonl",  dir / "nli_dev.jsonl", dir / "unlabeled.txt",
                    dir / "sts.tsv",    dir / "ranking.jsonl", dir / "qa.jsonl"};
  auto jsonl = [](const std::vector<NliTriplet>& v) {
    std::vector<std::string> lines;
    for (const auto& t : v) lines.push_back(triplet_json(t).dump());
    return lines;
  };
  write_lines(files.nli, jsonl(corpora.nli));
  write_lines(files.nli_dev, jsonl(corpora.nli_dev));
  write_lines(files.unlabeled, corpora.unlabeled);

  std::vector<std::string> sts;
  for (const auto& ex : corpora.sts.examples) {
    nlohmann::json score = ex.gold_score;
    sts.push_back(score.dump() + "\t" + ex.sentence_a + "\t" + ex.sentence_b);
  }
  write_lines(files.sts, sts);

  std::vector<std::string> ranking;
  for (const auto& q : corpora.ranking)
    ranking.push_back(nlohmann::json{{"query", q.query}, {"candidates", q.candidates}, {"relevance", q.relevance}}.dump());
  write_lines(files.ranking, ranking);

  std::vector<std::string> qa;
  for (const auto& p : corpora.qa) qa.push_back(nlohmann::json{{"question", p.question}, {"answer", p.answer}}.dump());
  write_lines(files.qa, qa);
  return files;
}

}  // namespace gense::toy
