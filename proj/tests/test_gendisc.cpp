#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "gense/data.hpp"
#include "gense/gendisc_trainer.hpp"
#include "gense/tiny_seq2seq.hpp"
#include "gense/toy_corpus.hpp"
#include "support.hpp"

namespace gense {
namespace {

TEST(ValidationReport, SelectionScoreFormula) {
  EXPECT_NEAR(ValidationReport::from_metrics(1.0, 1.0).selection_score, -9.0, 1e-12);
  EXPECT_NEAR(ValidationReport::from_metrics(2.0, 0.8).selection_score, -19.2, 1e-12);
}

TEST(SelectBest, ArgmaxWithEarliestTie) {
  const std::vector<ValidationReport> r = {{0, 0, -30.2}, {0, 0, -12.1}, {0, 0, -15.0}};
  EXPECT_EQ(select_best(r), 1u);
  const std::vector<ValidationReport> tie = {{0, 0, -5.0}, {0, 0, -5.0}};
  EXPECT_EQ(select_best(tie), 0u);
  EXPECT_THROW(select_best(std::span<const ValidationReport>{}), std::invalid_argument);
}

// Dev-set stub: every generation target has per-token NLL `token_nll`; the
// discrimination answer is looked up by input text.
test::StubBackbone dev_stub(double token_nll, std::map<std::string, std::string> answers, double scale = 1.0) {
  test::StubBackbone b({"[PAD]", "[EOS]", "[UNK]", "true", "false", "w"});
  b.nll = [=](std::string_view input, std::string_view target) {
    const std::string t(target);
    if (t == "true" || t == "false") {
      const auto it = answers.find(std::string(input));
      if (it == answers.end()) return NllResult{-std::log(0.5 * scale), 1};
      return NllResult{-std::log((it->second == t ? 0.7 : 0.3) * scale), 1};
    }
    const std::size_t tokens = b.tokenize(target).size() + 1;
    return NllResult{token_nll * static_cast<double>(tokens), tokens};
  };
  return b;
}

std::vector<TrainingInstance> dev_set(std::size_t disc) {
  std::vector<TrainingInstance> dev = {{"g1", "w w", TaskKind::Generation}, {"g2", "w", TaskKind::Generation}};
  for (std::size_t i = 0; i < disc; ++i)
    dev.push_back({"d" + std::to_string(i), i % 2 ? "false" : "true", TaskKind::Discrimination});
  return dev;
}

TEST(EvaluateDev, PerfectModelScoresMinusNine) {
  const auto dev = dev_set(4);
  std::map<std::string, std::string> answers;
  for (const auto& i : dev) answers[i.input_text] = i.target_text;
  const auto r = evaluate_dev(dev, dev_stub(0.0, answers));
  EXPECT_NEAR(r.gen_ppl, 1.0, 1e-12);
  EXPECT_NEAR(r.disc_accuracy, 1.0, 1e-12);
  EXPECT_NEAR(r.selection_score, -9.0, 1e-12);
}

TEST(EvaluateDev, PplTwoAccuracyPointEight) {
  const auto dev = dev_set(5);
  std::map<std::string, std::string> answers;
  for (const auto& i : dev) answers[i.input_text] = i.target_text;
  answers["d4"] = "false";  // d4's target is "true"; one of five is wrong
  const auto r = evaluate_dev(dev, dev_stub(std::log(2.0), answers));
  EXPECT_NEAR(r.gen_ppl, 2.0, 1e-12);
  EXPECT_NEAR(r.disc_accuracy, 0.8, 1e-12);
  EXPECT_NEAR(r.selection_score, -19.2, 1e-12);
}

TEST(EvaluateDev, MajorityLabelOnBalancedSetGivesHalf) {
  const auto dev = dev_set(10);
  std::map<std::string, std::string> answers;
  for (const auto& i : dev)
    if (i.task == TaskKind::Discrimination) answers[i.input_text] = "true";
  EXPECT_DOUBLE_EQ(evaluate_dev(dev, dev_stub(0.1, answers)).disc_accuracy, 0.5);
}

TEST(EvaluateDev, AccuracyInvariantToCommonLabelScale) {
  const auto dev = dev_set(6);
  std::map<std::string, std::string> answers = {{"d0", "true"}, {"d1", "true"}, {"d2", "false"}};
  const double a = evaluate_dev(dev, dev_stub(0.1, answers, 1.0)).disc_accuracy;
  const double b = evaluate_dev(dev, dev_stub(0.1, answers, 1e-3)).disc_accuracy;
  EXPECT_EQ(a, b);
}

TEST(EvaluateDev, TaskIsolation) {
  auto dev = dev_set(4);
  std::map<std::string, std::string> answers = {{"d0", "true"}};
  const auto base = evaluate_dev(dev, dev_stub(0.3, answers));
  // Extra discrimination items leave perplexity alone.
  dev.push_back({"d99", "false", TaskKind::Discrimination});
  EXPECT_DOUBLE_EQ(evaluate_dev(dev, dev_stub(0.3, answers)).gen_ppl, base.gen_ppl);
  // A different generation NLL leaves accuracy alone.
  EXPECT_DOUBLE_EQ(evaluate_dev(dev_set(4), dev_stub(0.9, answers)).disc_accuracy, base.disc_accuracy);
}

TEST(EvaluateDev, TokenWeightedPerplexity) {
  // Two generation items with 3 and 2 tokens at NLL 0.2 and 0.6 per token.
  test::StubBackbone b({"[PAD]", "[EOS]", "[UNK]", "true", "false", "w"});
  b.nll = [](std::string_view input, std::string_view target) {
    if (target == "true" || target == "false") return NllResult{std::log(2.0), 1};
    return input == "g1" ? NllResult{0.6, 3} : NllResult{1.2, 2};
  };
  const auto r = evaluate_dev(dev_set(2), b);
  EXPECT_NEAR(r.gen_ppl, std::exp(1.8 / 5.0), 1e-12);
}

TEST(EvaluateDev, MissingTaskKindRejected) {
  std::vector<TrainingInstance> gen_only = {{"g", "w", TaskKind::Generation}};
  const auto b = dev_stub(0.1, {});
  EXPECT_THROW(evaluate_dev(gen_only, b), std::invalid_argument);
}

struct ToyGenDisc {
  std::vector<TrainingInstance> train;
  std::vector<TrainingInstance> dev;
  std::unique_ptr<TinySeq2Seq> model;
};

ToyGenDisc toy_setup(std::size_t train_triplets, std::size_t extra_instances = 0) {
  Rng rng(31);
  std::vector<NliTriplet> t, d;
  for (std::size_t i = 0; i < train_triplets; ++i) t.push_back(toy::make_triplet(rng));
  for (int i = 0; i < 3; ++i) d.push_back(toy::make_triplet(rng));
  ToyGenDisc s;
  s.train = build_instances(t);
  s.train.resize(s.train.size() + extra_instances, s.train.front());
  s.dev = build_instances(d);
  std::vector<std::string> texts;
  for (const auto& i : s.train) texts.push_back(i.input_text + " " + i.target_text);
  auto cfg = test::tiny_config(2);
  cfg.max_positions = 48;
  s.model = std::make_unique<TinySeq2Seq>(cfg, WordTokenizer::build(texts, 300));
  return s;
}

double mean_train_nll(const std::vector<TrainingInstance>& train, const Seq2SeqBackbone& m) {
  double total = 0.0;
  for (const auto& i : train) total += m.conditional_nll(i.input_text, i.target_text);
  return total / static_cast<double>(train.size());
}

TEST(TrainGenDisc, LossDecreasesOnToyInstances) {
  auto s = toy_setup(13);
  s.train.resize(50);
  GenDiscConfig c;
  c.learning_rate = 3e-3;
  c.batch_size = 5;
  c.epochs = 20;  // 10 steps per epoch, 200 steps
  c.eval_every_steps = 50;
  c.seed = 1;
  const double before = mean_train_nll(s.train, *s.model);
  const auto r = train_gendisc(s.train, s.dev, c, *s.model);
  EXPECT_EQ(r.total_steps, 200u);
  EXPECT_LT(mean_train_nll(s.train, *s.model), before);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST(TrainGenDisc, SelectionReproducibleAndLogged) {
  GenDiscConfig c;
  c.learning_rate = 3e-3;
  c.batch_size = 8;
  c.epochs = 3;
  c.eval_every_steps = 4;
  c.seed = 5;
  auto a = toy_setup(8, 3);  // 35 instances: 4 steps per epoch, 3 dropped
  auto b = toy_setup(8, 3);
  std::vector<nlohmann::json> log_a, log_b;
  const auto ra = train_gendisc(a.train, a.dev, c, *a.model, [&](const GenDiscLogEntry& e) { log_a.push_back(e.to_json()); });
  const auto rb = train_gendisc(b.train, b.dev, c, *b.model, [&](const GenDiscLogEntry& e) { log_b.push_back(e.to_json()); });
  EXPECT_EQ(ra.best_step, rb.best_step);
  EXPECT_EQ(log_a, log_b);
  EXPECT_EQ(ra.dropped_per_epoch, 3u);
  EXPECT_EQ(ra.total_steps, 12u);
  ASSERT_EQ(log_a.size(), 3u);
  for (const char* key : {"step", "train_loss", "gen_ppl", "disc_accuracy", "selection_score"})
    EXPECT_TRUE(log_a[0].contains(key)) << key;
  // The returned best model scores what its history entry says.
  std::size_t best_index = 0;
  for (std::size_t i = 0; i < ra.history.size(); ++i)
    if (ra.history[i].step == ra.best_step) best_index = i;
  EXPECT_NEAR(evaluate_dev(a.dev, *ra.best).selection_score, ra.history[best_index].report.selection_score, 1e-12);
}

TEST(TrainGenDisc, FinalStepAlwaysEvaluated) {
  auto s = toy_setup(5);  // 20 instances
  GenDiscConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 4;
  c.epochs = 2;  // 10 steps
  c.eval_every_steps = 4;
  const auto r = train_gendisc(s.train, s.dev, c, *s.model);
  std::vector<std::size_t> steps;
  for (const auto& h : r.history) steps.push_back(h.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{4, 8, 10}));
}

TEST(TrainGenDisc, RejectsBadInputs) {
  auto s = toy_setup(2);
  GenDiscConfig c;
  c.batch_size = 4;
  std::vector<TrainingInstance> gen_dev = {s.dev[0]};
  EXPECT_THROW(train_gendisc(s.train, gen_dev, c, *s.model), std::invalid_argument);
  c.batch_size = 100;
  EXPECT_THROW(train_gendisc(s.train, s.dev, c, *s.model), std::invalid_argument);
  c.batch_size = 0;
  EXPECT_THROW(train_gendisc(s.train, s.dev, c, *s.model), std::invalid_argument);
}

TEST(GenDiscConfig, PublishedDefaults) {
  const GenDiscConfig c;
  EXPECT_DOUBLE_EQ(c.learning_rate, 5e-5);
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(c.epochs, 10u);
  EXPECT_EQ(c.eval_every_steps, 500u);
  EXPECT_EQ(GenDiscConfig::from_json(c.to_json()).to_json(), c.to_json());
}

}  // namespace
}  // namespace gense
