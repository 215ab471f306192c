// Command-line front end: gense <command> [options]. Exit codes: 0 success,
// 1 usage or configuration error, 2 runtime failure.
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gense/data.hpp"
#include "gense/embedding.hpp"
#include "gense/error.hpp"
#include "gense/pipeline.hpp"
#include "gense/tiny_seq2seq.hpp"
#include "gense/toy_corpus.hpp"

namespace {

namespace fs = std::filesystem;
using namespace gense;

struct CommonOptions {
  std::string config;
  std::optional<std::string> workspace;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "pipeline config file (JSON)")->required();
  cmd->add_option("-w,--workspace", o.workspace, "workspace directory (overrides $GENSE_WORKSPACE and the config)");
  cmd->add_option("--set", o.overrides, "config override, e.g. --set gendisc.epochs=3")->take_all();
}

pipeline::Context make_context(const CommonOptions& o) {
  pipeline::PipelineConfig config = pipeline::PipelineConfig::from_file(o.config, o.overrides);
  std::optional<fs::path> flag;
  if (o.workspace) flag = fs::path(*o.workspace);
  pipeline::Workspace ws(pipeline::resolve_workspace(config, flag));
  return {std::move(config), std::move(ws), std::cout, std::cerr};
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw pipeline::ConfigError("--alpha-sweep expects comma-separated numbers, got '" + item + "'");
    }
  }
  if (out.empty()) throw pipeline::ConfigError("--alpha-sweep is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate-discriminate-contrast pipeline for sentence embeddings"};
  app.require_subcommand(1);

  CommonOptions gendisc_opts;
  auto* gendisc = app.add_subcommand("train-gendisc", "train the unified generator/discriminator");
  add_common(gendisc, gendisc_opts);

  CommonOptions synth_opts;
  std::string alpha_sweep;
  std::string source = "unlabeled";
  auto* synth = app.add_subcommand("synthesize", "generate and filter synthetic triplets");
  add_common(synth, synth_opts);
  synth->add_option("--alpha-sweep", alpha_sweep, "comma-separated thresholds, one output per value");
  synth->add_option("--source", source, "unlabeled or in-domain")->check(CLI::IsMember({"unlabeled", "in-domain"}));

  CommonOptions embed_opts;
  bool resume = false;
  std::string schedule;
  auto* train_embed = app.add_subcommand("train-embed", "run the contrastive training schedule");
  add_common(train_embed, embed_opts);
  train_embed->add_flag("--resume", resume, "reuse completed stage checkpoints");
  train_embed->add_option("--schedule", schedule, "universal, domain-adapt, qa-only, qa-plus or custom");

  CommonOptions eval_opts;
  std::string checkpoint;
  std::string output;
  bool diagnostics = false;
  std::optional<std::uint64_t> random_seed;
  auto* evaluate = app.add_subcommand("evaluate", "score an embedding checkpoint");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint to evaluate (default: the schedule's final one)");
  evaluate->add_flag("--diagnostics", diagnostics, "add alignment and uniformity");
  evaluate->add_option("--random-baseline", random_seed, "score seeded random vectors instead of a model");
  evaluate->add_option("-o,--output", output, "report path");

  std::string inspect_file;
  std::size_t limit = 20;
  auto* inspect = app.add_subcommand("inspect", "pretty-print synthetic triplets with confidences");
  inspect->add_option("file", inspect_file, "triplet or pair JSON-lines file")->required();
  inspect->add_option("-n,--limit", limit, "records to show (0 = all)");

  std::string pairs_in;
  std::string triplets_out;
  auto* make_triplets = app.add_subcommand("make-triplets", "group labeled NLI pairs into triplets by premise");
  make_triplets->add_option("pairs", pairs_in, "JSON-lines premise/hypothesis/label")->required();
  make_triplets->add_option("output", triplets_out, "triplet JSON-lines")->required();

  std::string toy_dir;
  toy::CorpusConfig toy_config;
  auto* make_toy = app.add_subcommand("make-toy", "write the toy-grammar corpora");
  make_toy->add_option("dir", toy_dir, "output directory")->required();
  make_toy->add_option("--seed", toy_config.seed);
  make_toy->add_option("--nli", toy_config.nli_triplets);
  make_toy->add_option("--dev", toy_config.dev_triplets);
  make_toy->add_option("--unlabeled", toy_config.unlabeled);
  make_toy->add_option("--sts", toy_config.sts_pairs);

  std::string embed_ckpt;
  std::string sentences_in;
  std::string matrix_out;
  std::string index_out;
  auto* embed = app.add_subcommand("embed", "export embeddings for a sentence file");
  embed->add_option("--checkpoint", embed_ckpt)->required();
  embed->add_option("--sentences", sentences_in, "one sentence per line")->required();
  embed->add_option("-o,--output", matrix_out, "binary matrix file")->required();
  embed->add_option("--index", index_out, "sentence index file (default: <output>.index.txt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gendisc) {
      pipeline::train_gendisc(make_context(gendisc_opts));
    } else if (*synth) {
      pipeline::SynthesizeOptions o;
      o.source = source == "in-domain" ? pipeline::SynthesisSource::InDomain : pipeline::SynthesisSource::Unlabeled;
      if (!alpha_sweep.empty()) o.alpha_sweep = parse_alphas(alpha_sweep);
      pipeline::synthesize(make_context(synth_opts), o);
    } else if (*train_embed) {
      pipeline::TrainEmbedOptions o;
      o.resume = resume;
      if (!schedule.empty()) {
        try {
          o.schedule = schedule_name_from_string(schedule);
        } catch (const std::invalid_argument& e) {
          throw pipeline::ConfigError(e.what());
        }
      }
      pipeline::train_embed(make_context(embed_opts), o);
    } else if (*evaluate) {
      pipeline::EvaluateOptions o;
      if (!checkpoint.empty()) o.checkpoint = fs::path(checkpoint);
      if (!output.empty()) o.output = fs::path(output);
      o.diagnostics = diagnostics;
      o.random_baseline_seed = random_seed;
      pipeline::evaluate(make_context(eval_opts), o);
    } else if (*inspect) {
      if (!fs::is_regular_file(inspect_file)) throw pipeline::ConfigError("file not found: " + inspect_file);
      pipeline::inspect(inspect_file, limit, std::cout);
    } else if (*make_triplets) {
      if (!fs::is_regular_file(pairs_in)) throw pipeline::ConfigError("file not found: " + pairs_in);
      const PairGroupingResult r = group_pairs_into_triplets(pairs_in);
      std::ofstream out(triplets_out, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + triplets_out);
      for (const auto& t : r.triplets) out << triplet_json(t).dump() << '\n';
      std::cerr << "make-triplets: " << r.premises_seen << " premises, " << r.triplets.size() << " triplets, "
                << r.premises_dropped << " premises dropped, " << r.skipped_lines << " lines skipped\n";
    } else if (*make_toy) {
      const toy::CorpusFiles files = toy::write(toy::generate(toy_config), toy_dir);
      for (const auto& p : {files.nli, files.nli_dev, files.unlabeled, files.sts, files.ranking, files.qa})
        std::cout << p.string() << "\n";
    } else if (*embed) {
      if (!fs::is_regular_file(embed_ckpt)) throw pipeline::ConfigError("checkpoint not found: " + embed_ckpt);
      if (!fs::is_regular_file(sentences_in)) throw pipeline::ConfigError("file not found: " + sentences_in);
      const auto model = TinySeq2Seq::from_checkpoint(embed_ckpt);
      LineReader reader(sentences_in);
      std::vector<std::string> sentences;
      while (auto line = reader.next()) {
        std::string s = collapse_whitespace(*line);
        if (!s.empty()) sentences.push_back(std::move(s));
      }
      const auto embeddings = embed_batch(sentences, *model);
      export_embeddings(matrix_out, index_out.empty() ? matrix_out + ".index.txt" : index_out, embeddings);
      std::cout << matrix_out << "\n";
    }
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
