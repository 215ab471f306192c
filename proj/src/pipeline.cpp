#include "gense/pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "gense/data.hpp"
#include "gense/embedding.hpp"
#include "gense/error.hpp"
#include "gense/rng.hpp"

namespace gense::pipeline {
namespace fs = std::filesystem;
namespace {

const std::set<std::string> kTopLevelKeys = {
    "workspace", "corpora",      "backbone",     "gendisc",           "synthesis", "schedule",
    "diagnostics", "dev_fraction", "nli_fraction", "synthetic_fraction"};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::optional<fs::path> optional_path(const nlohmann::json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return resolve(base, j.at(key).get<std::string>());
}

const fs::path& require_file(const std::optional<fs::path>& path, const std::string& what) {
  if (!path) throw ConfigError("config does not name a " + what + " corpus");
  if (!fs::is_regular_file(*path)) throw ConfigError(what + " corpus not found: " + path->string());
  return *path;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a64(buf.str()));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_triplets(const fs::path& path, const std::vector<NliTriplet>& triplets) {
  std::string text;
  for (const auto& t : triplets) text += triplet_json(t).dump() + "\n";
  write_text(path, text);
}

std::vector<std::string> read_lines(const fs::path& path) {
  LineReader reader(path);
  std::vector<std::string> out;
  while (auto line = reader.next()) out.push_back(std::move(*line));
  return out;
}

std::string alpha_tag(double alpha) {
  return nlohmann::json(alpha).dump();
}

std::string_view source_tag(SynthesisSource s) {
  return s == SynthesisSource::Unlabeled ? "synthetic" : "in-domain";
}

struct NliSplit {
  std::vector<NliTriplet> train;
  std::vector<NliTriplet> dev;
};

// Loads the NLI corpus, splits off a dev set when none is configured, applies
// nli_fraction and writes the training triplets into the workspace.
NliSplit prepare_nli(const Context& ctx) {
  const auto& c = ctx.config;
  const fs::path& nli_path = require_file(c.corpora.nli, "nli");
  NliLoadResult loaded = load_nli(nli_path);
  for (const auto& w : loaded.warnings) ctx.err << "warning: " << w << "\n";
  if (loaded.skipped) ctx.err << "warning: skipped " << loaded.skipped << " malformed lines in " << nli_path << "\n";

  NliSplit split;
  std::vector<NliTriplet> train;
  if (c.corpora.nli_dev) {
    NliLoadResult dev = load_nli(require_file(c.corpora.nli_dev, "nli_dev"));
    split.dev = std::move(dev.triplets);
    train = std::move(loaded.triplets);
  } else {
    const auto dev_idx = subsample_indices(loaded.triplets.size(), c.dev_fraction, derive_seed(c.gendisc.seed, "dev-split"));
    std::vector<bool> is_dev(loaded.triplets.size(), false);
    for (std::size_t i : dev_idx) is_dev[i] = true;
    for (std::size_t i = 0; i < loaded.triplets.size(); ++i)
      (is_dev[i] ? split.dev : train).push_back(loaded.triplets[i]);
  }
  split.train = c.nli_fraction < 1.0 ? subsample(train, c.nli_fraction, derive_seed(c.gendisc.seed, "nli-fraction"))
                                     : std::move(train);
  if (split.train.empty()) throw ConfigError("no NLI training triplets remain after the dev split and nli_fraction");
  if (split.dev.empty()) throw ConfigError("the NLI dev set is empty; set corpora.nli_dev or raise dev_fraction");
  write_triplets(ctx.workspace.nli_train_file(), split.train);
  return split;
}

std::set<std::string> held_out_sentences(const Context& ctx) {
  const auto& c = ctx.config.corpora;
  std::set<std::string> raw;
  for (const auto& sts : c.sts) {
    const StsDataset ds = load_sts(require_file(sts, "sts"), c.sts_scale_min, c.sts_scale_max);
    for (const auto& s : dataset_sentences(ds)) raw.insert(s);
  }
  if (c.ranking) {
    for (const auto& q : load_ranking(require_file(c.ranking, "ranking"))) {
      raw.insert(q.query);
      raw.insert(q.candidates.begin(), q.candidates.end());
    }
  }
  if (c.exclusions)
    for (auto& line : read_lines(require_file(c.exclusions, "exclusions"))) raw.insert(std::move(line));
  return normalize_exclusions(raw);
}

std::unique_ptr<TinySeq2Seq> load_checkpoint(const fs::path& path, const std::string& hint) {
  if (!fs::is_regular_file(path)) throw ConfigError("checkpoint not found: " + path.string() + hint);
  return TinySeq2Seq::from_checkpoint(path);
}

fs::path relative_to(const fs::path& root, const fs::path& p) {
  return p.lexically_relative(root).empty() ? p : p.lexically_relative(root);
}

}  // namespace

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("empty key segment in override: " + assignment);
    if (node->is_null()) *node = nlohmann::json::object();
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + assignment);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kTopLevelKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  PipelineConfig c;
  c.source = j;
  c.base_dir = base_dir;
  try {
    c.workspace = resolve(base_dir, j.value("workspace", std::string("workspace")));
    const nlohmann::json corpora = j.value("corpora", nlohmann::json::object());
    c.corpora.nli = optional_path(corpora, "nli", base_dir);
    c.corpora.nli_dev = optional_path(corpora, "nli_dev", base_dir);
    c.corpora.unlabeled = optional_path(corpora, "unlabeled", base_dir);
    c.corpora.in_domain = optional_path(corpora, "in_domain", base_dir);
    c.corpora.qa = optional_path(corpora, "qa", base_dir);
    c.corpora.ranking = optional_path(corpora, "ranking", base_dir);
    c.corpora.exclusions = optional_path(corpora, "exclusions", base_dir);
    if (corpora.contains("sts")) {
      const auto& sts = corpora.at("sts");
      if (sts.is_string()) {
        c.corpora.sts.push_back(resolve(base_dir, sts.get<std::string>()));
      } else {
        for (const auto& s : sts) c.corpora.sts.push_back(resolve(base_dir, s.get<std::string>()));
      }
    }
    if (corpora.contains("sts_scale")) {
      const auto scale = corpora.at("sts_scale").get<std::vector<double>>();
      if (scale.size() != 2 || !(scale[0] < scale[1])) throw ConfigError("corpora.sts_scale must be [min, max]");
      c.corpora.sts_scale_min = scale[0];
      c.corpora.sts_scale_max = scale[1];
    }

    const nlohmann::json backbone = j.value("backbone", nlohmann::json::object());
    c.backbone = TinySeq2SeqConfig::from_json(backbone);
    c.max_vocab = backbone.value("max_vocab", c.max_vocab);
    c.gendisc = GenDiscConfig::from_json(j.value("gendisc", nlohmann::json::object()));
    c.synthesis = SynthesisConfig::from_json(j.value("synthesis", nlohmann::json::object()));
    c.diagnostics = DiagnosticsConfig::from_json(j.value("diagnostics", nlohmann::json::object()));

    const nlohmann::json schedule = j.value("schedule", nlohmann::json::object());
    c.schedule.name = schedule_name_from_string(schedule.value("name", std::string("universal")));
    if (schedule.contains("stages"))
      for (const auto& s : schedule.at("stages")) c.schedule.stages.push_back(s);

    c.dev_fraction = j.value("dev_fraction", c.dev_fraction);
    c.nli_fraction = j.value("nli_fraction", c.nli_fraction);
    c.synthetic_fraction = j.value("synthetic_fraction", c.synthetic_fraction);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  for (double f : {c.dev_fraction, c.nli_fraction, c.synthetic_fraction})
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("dev_fraction, nli_fraction and synthetic_fraction must be in (0, 1]");
  return c;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  for (const auto& o : overrides) apply_override(j, o);
  return from_json(j, fs::absolute(path).parent_path());
}

std::string PipelineConfig::hash() const {
  return hex64(fnv1a64(source.dump()));
}

fs::path resolve_workspace(const PipelineConfig& config, const std::optional<fs::path>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kWorkspaceEnv); env && *env) return fs::path(env);
  return config.workspace;
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec || !fs::is_directory(root_)) throw ConfigError("workspace is not writable: " + root_.string());
}

nlohmann::json Workspace::manifest() const {
  const fs::path path = root_ / "manifest.json";
  if (!fs::exists(path)) return {{"artifacts", nlohmann::json::object()}};
  std::ifstream in(path, std::ios::binary);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError("workspace manifest is corrupt: " + path.string());
  return j;
}

void Workspace::record(const fs::path& artifact, const std::string& command, const std::string& config_hash) const {
  nlohmann::json m = manifest();
  m["artifacts"][relative_to(root_, artifact).generic_string()] = {{"command", command},
                                                                   {"config_hash", config_hash}};
  write_text(root_ / "manifest.json", m.dump(2) + "\n");
}

WorkspaceLock::WorkspaceLock(const fs::path& workspace) : path_(workspace / ".lock") {
  fs::create_directories(workspace);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw IoError("workspace " + workspace.string() + " is locked by another command (remove " + path_.string() +
                  " if no command is running)");
  std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
  std::fclose(f);
}

WorkspaceLock::~WorkspaceLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::unique_ptr<TinySeq2Seq> initial_model(const Context& ctx) {
  const auto& c = ctx.config.corpora;
  std::vector<std::string> texts;
  for (const auto& path : {c.nli, c.nli_dev}) {
    if (!path || !fs::exists(*path)) continue;
    for (const auto& t : load_nli(*path).triplets) {
      texts.push_back(t.premise);
      texts.push_back(t.entailment);
      texts.push_back(t.contradiction);
    }
  }
  for (const auto& path : {c.unlabeled, c.in_domain}) {
    if (!path || !fs::exists(*path)) continue;
    for (auto& line : read_lines(*path)) texts.push_back(std::move(line));
  }
  if (c.qa && fs::exists(*c.qa)) {
    for (const auto& p : load_qa(*c.qa).pairs) {
      texts.push_back(p.question);
      texts.push_back(p.answer);
    }
  }
  return std::make_unique<TinySeq2Seq>(ctx.config.backbone, WordTokenizer::build(texts, ctx.config.max_vocab));
}

GenDiscOutputs train_gendisc(const Context& ctx) {
  WorkspaceLock lock(ctx.workspace.root());
  const auto& cfg = ctx.config;
  const NliSplit split = prepare_nli(ctx);
  const auto train = mix_instances(build_instances(split.train), derive_seed(cfg.gendisc.seed, "mix"));
  const auto dev = build_instances(split.dev);

  fs::create_directories(ctx.workspace.gendisc_dir());
  GenDiscOutputs out;
  out.log = ctx.workspace.gendisc_dir() / "train_log.jsonl";
  out.checkpoint = ctx.workspace.gendisc_checkpoint();
  std::ofstream log(out.log, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write " + out.log.string());

  auto model = initial_model(ctx);
  ctx.err << "train-gendisc: " << train.size() << " instances, " << dev.size() << " dev instances, "
          << model->parameter_count() << " parameters\n";
  GenDiscResult result = gense::train_gendisc(train, dev, cfg.gendisc, *model, [&](const GenDiscLogEntry& e) {
    log << e.to_json().dump() << "\n";
    log.flush();
    ctx.err << "train-gendisc: step " << e.step << " loss " << e.train_loss << " ppl " << e.report.gen_ppl
            << " acc " << e.report.disc_accuracy << "\n";
  });
  if (result.dropped_per_epoch)
    ctx.err << "train-gendisc: dropped " << result.dropped_per_epoch << " instances per epoch (partial batch)\n";
  log.close();
  result.best->save(out.checkpoint);
  out.best_step = result.best_step;
  ctx.workspace.record(out.checkpoint, "train-gendisc", cfg.hash());
  ctx.workspace.record(out.log, "train-gendisc", cfg.hash());
  ctx.out << out.checkpoint.string() << "\n";
  return out;
}

fs::path synthetic_corpus_path(const Workspace& ws, SynthesisSource source) {
  return ws.synth_dir() / (std::string(source_tag(source)) + ".jsonl");
}

SynthesizeOutputs synthesize(const Context& ctx, const SynthesizeOptions& options) {
  WorkspaceLock lock(ctx.workspace.root());
  const auto& cfg = ctx.config;
  const bool in_domain = options.source == SynthesisSource::InDomain;
  const fs::path& input = require_file(in_domain ? cfg.corpora.in_domain : cfg.corpora.unlabeled,
                                       in_domain ? "in_domain" : "unlabeled");
  auto model = load_checkpoint(ctx.workspace.gendisc_checkpoint(), " (run train-gendisc first)");

  UnlabeledLoadResult loaded = load_unlabeled(input, std::nullopt);
  {
    // load_unlabeled normalizes raw exclusions itself; pass them raw.
    const auto held_out = held_out_sentences(ctx);
    std::vector<UnlabeledSentence> kept;
    for (auto& s : loaded.sentences) {
      if (held_out.count(normalize_for_matching(s.text)))
        ++loaded.excluded;
      else
        kept.push_back(std::move(s));
    }
    loaded.sentences = std::move(kept);
  }
  std::vector<UnlabeledSentence> sentences =
      cfg.synthetic_fraction < 1.0
          ? subsample(loaded.sentences, cfg.synthetic_fraction, derive_seed(cfg.synthesis.seed, "synthetic-fraction"))
          : std::move(loaded.sentences);
  ctx.err << "synthesize: " << sentences.size() << " sentences from " << input << " (" << loaded.blank_lines
          << " blank, " << loaded.excluded << " held out)\n";

  const std::string tag(source_tag(options.source));
  const fs::path dir = ctx.workspace.synth_dir();
  fs::create_directories(dir);
  std::vector<double> alphas = options.alpha_sweep;
  const bool sweep = !alphas.empty();
  if (!sweep) alphas.push_back(cfg.synthesis.alpha);

  SynthesizeOutputs out;
  std::vector<std::unique_ptr<JsonlSynthesisSink>> sinks;
  std::vector<SynthesisSink*> sink_ptrs;
  for (double a : alphas) {
    const std::string stem = sweep ? tag + "-alpha-" + alpha_tag(a) : tag;
    out.triplets.push_back(dir / (stem + ".jsonl"));
    out.stats.push_back(dir / (stem + ".stats.json"));
    std::optional<fs::path> pairs;
    if (cfg.synthesis.keep_positive_only) pairs = dir / (stem + ".pairs.jsonl");
    sinks.push_back(std::make_unique<JsonlSynthesisSink>(out.triplets.back(), pairs));
    sink_ptrs.push_back(sinks.back().get());
  }
  out.counts = run_alpha_sweep(sentence_source(sentences), *model, cfg.synthesis, alphas, sink_ptrs);

  for (std::size_t i = 0; i < alphas.size(); ++i) {
    nlohmann::json stats = out.counts[i].to_json();
    stats["alpha"] = alphas[i];
    stats["nucleus_p"] = cfg.synthesis.nucleus_p;
    stats["seed"] = cfg.synthesis.seed;
    stats["source"] = input.string();
    stats["blank_lines"] = loaded.blank_lines;
    stats["held_out"] = loaded.excluded;
    write_text(out.stats[i], stats.dump(2) + "\n");
    ctx.workspace.record(out.triplets[i], "synthesize", cfg.hash());
    ctx.workspace.record(out.stats[i], "synthesize", cfg.hash());
    ctx.err << "synthesize: alpha " << alphas[i] << ": read " << out.counts[i].read << ", kept "
            << out.counts[i].kept_triplets << " triplets, " << out.counts[i].kept_pairs << " pairs, dropped "
            << out.counts[i].dropped << "\n";
    ctx.out << out.triplets[i].string() << "\n";
  }
  return out;
}

TrainingSchedule resolve_schedule(const Context& ctx, std::optional<ScheduleName> override_name) {
  const auto& cfg = ctx.config;
  const ScheduleName name = override_name.value_or(cfg.schedule.name);
  const fs::path synthetic = synthetic_corpus_path(ctx.workspace, SynthesisSource::Unlabeled);
  const fs::path in_domain = synthetic_corpus_path(ctx.workspace, SynthesisSource::InDomain);
  const fs::path nli = ctx.workspace.nli_train_file();
  const fs::path qa = cfg.corpora.qa.value_or(fs::path("qa.jsonl"));

  TrainingSchedule schedule;
  switch (name) {
    case ScheduleName::Universal: schedule = universal_schedule(synthetic, nli); break;
    case ScheduleName::DomainAdapt: schedule = domain_adapt_schedule(synthetic, in_domain, nli); break;
    case ScheduleName::QaOnly: schedule = qa_only_schedule(qa, nli); break;
    case ScheduleName::QaPlus: schedule = qa_plus_schedule(synthetic, qa, nli); break;
    case ScheduleName::Custom: schedule.name = ScheduleName::Custom; break;
  }
  if (name == ScheduleName::Custom && cfg.schedule.stages.empty())
    throw ConfigError("the custom schedule needs schedule.stages");
  if (name != ScheduleName::Custom && cfg.schedule.stages.size() > schedule.stages.size())
    throw ConfigError("schedule.stages has more entries than the " + std::string(to_string(name)) + " schedule");

  for (std::size_t i = 0; i < cfg.schedule.stages.size(); ++i) {
    nlohmann::json o = cfg.schedule.stages[i];
    StageConfig base = name == ScheduleName::Custom ? StageConfig{} : schedule.stages[i];
    if (o.contains("corpus")) {
      const std::string corpus = o.at("corpus").get<std::string>();
      if (corpus == "synthetic" || corpus == "in-domain" || corpus == "nli" || corpus == "qa") {
        StageConfig preset = corpus == "synthetic"   ? synthetic_stage(synthetic)
                             : corpus == "in-domain" ? in_domain_stage(in_domain)
                             : corpus == "nli"       ? nli_stage(nli)
                                                     : qa_stage(qa);
        if (name == ScheduleName::Custom) base = preset;
        o["corpus"] = preset.corpus.string();
        if (!o.contains("corpus_tag")) o["corpus_tag"] = preset.corpus_tag;
      } else {
        o["corpus"] = resolve(cfg.base_dir, corpus).string();
        if (!o.contains("corpus_tag")) o["corpus_tag"] = fs::path(corpus).stem().string();
      }
    }
    try {
      StageConfig stage = StageConfig::from_json(o, base);
      if (name == ScheduleName::Custom)
        schedule.stages.push_back(std::move(stage));
      else
        schedule.stages[i] = std::move(stage);
    } catch (const std::exception& e) {
      throw ConfigError("schedule.stages[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return schedule;
}

TrainEmbedOutputs train_embed(const Context& ctx, const TrainEmbedOptions& options) {
  WorkspaceLock lock(ctx.workspace.root());
  const auto& cfg = ctx.config;
  if (cfg.corpora.nli) prepare_nli(ctx);
  const TrainingSchedule schedule = resolve_schedule(ctx, options.schedule);
  for (const auto& stage : schedule.stages)
    if (!fs::is_regular_file(stage.corpus))
      throw ConfigError("stage corpus not found: " + stage.corpus.string() +
                        (stage.corpus.parent_path() == ctx.workspace.synth_dir() ? " (run synthesize first)" : ""));

  const std::string name(to_string(schedule.name));
  const fs::path dir = ctx.workspace.embed_dir() / name;
  fs::create_directories(dir);
  auto model = initial_model(ctx);

  std::ofstream stage_log;
  std::size_t open_stage = 0;
  ScheduleOptions so;
  so.checkpoint_root = ctx.workspace.embed_dir();
  so.resume = options.resume;
  so.log = [&](const StageLogEntry& e) {
    if (e.stage != open_stage) {
      stage_log.close();
      const auto& stage = schedule.stages[e.stage - 1];
      stage_log.open(dir / (std::to_string(e.stage) + "-" + stage.corpus_tag + ".log.jsonl"),
                     std::ios::binary | std::ios::trunc);
      if (!stage_log) throw IoError("cannot write the stage log in " + dir.string());
      open_stage = e.stage;
    }
    stage_log << nlohmann::json{{"schedule", name}, {"stage", e.stage}, {"step", e.step}, {"loss", e.loss}}.dump()
              << "\n";
    stage_log.flush();
    ctx.err << "[" << name << "] stage " << e.stage << " step " << e.step << " loss " << e.loss << "\n";
  };
  so.warn = [&](const std::string& w) { ctx.err << "[" << name << "] warning: " << w << "\n"; };

  const ScheduleResult result = run_schedule(schedule, *model, so);
  stage_log.close();
  for (std::size_t s : result.resumed_stages) ctx.err << "[" << name << "] stage " << s << " resumed from checkpoint\n";

  TrainEmbedOutputs out;
  out.final_checkpoint = result.final_checkpoint;
  out.stage_checkpoints = result.stage_checkpoints;
  out.resumed_stages = result.resumed_stages;
  out.log = dir;
  for (const auto& p : result.stage_checkpoints) ctx.workspace.record(p, "train-embed", cfg.hash());
  ctx.workspace.record(out.final_checkpoint, "train-embed", cfg.hash());
  ctx.out << out.final_checkpoint.string() << "\n";
  return out;
}

EvaluateOutputs evaluate(const Context& ctx, const EvaluateOptions& options) {
  WorkspaceLock lock(ctx.workspace.root());
  const auto& cfg = ctx.config;
  if (cfg.corpora.sts.empty() && !cfg.corpora.ranking) throw ConfigError("config names no sts or ranking corpus");
  std::vector<StsDataset> sts;
  for (const auto& p : cfg.corpora.sts)
    sts.push_back(load_sts(require_file(p, "sts"), cfg.corpora.sts_scale_min, cfg.corpora.sts_scale_max));
  std::vector<RankingQuery> ranking;
  if (cfg.corpora.ranking) ranking = load_ranking(require_file(cfg.corpora.ranking, "ranking"));

  std::unique_ptr<TinySeq2Seq> model;
  std::unique_ptr<SentenceEncoder> encoder;
  EvaluateOutputs out;
  std::string report_stem;
  if (options.random_baseline_seed) {
    encoder = std::make_unique<RandomEncoder>(cfg.backbone.hidden_size, *options.random_baseline_seed);
    out.report.checkpoint = "random:" + std::to_string(*options.random_baseline_seed);
    report_stem = "random-" + std::to_string(*options.random_baseline_seed);
  } else {
    const fs::path ckpt = options.checkpoint.value_or(ctx.workspace.embed_dir() /
                                                      std::string(to_string(cfg.schedule.name)) / "final.ckpt");
    model = load_checkpoint(ckpt, options.checkpoint ? "" : " (run train-embed first)");
    encoder = std::make_unique<PromptedEncoder>(*model);
    out.report.checkpoint = ckpt.string() + "#" + file_hash(ckpt);
    report_stem = ckpt.parent_path().filename().string() + "-" + ckpt.stem().string();
  }

  for (const auto& ds : sts) out.report.sts.emplace_back(ds.name, evaluate_sts(*encoder, ds));
  if (!ranking.empty()) out.report.ranking.emplace_back(cfg.corpora.ranking->stem().string(),
                                                        evaluate_ranking(*encoder, ranking));
  if (options.diagnostics) {
    if (sts.empty()) throw ConfigError("--diagnostics needs an sts corpus");
    out.report.diagnostics = compute_diagnostics(*encoder, sts.front(), cfg.diagnostics);
  }
  out.report_path = options.output.value_or(ctx.workspace.reports_dir() / (report_stem + ".json"));
  write_text(out.report_path, out.report.to_json().dump(2) + "\n");
  ctx.workspace.record(out.report_path, "evaluate", cfg.hash());
  ctx.out << out.report_path.string() << "\n";
  return out;
}

void inspect(const fs::path& corpus, std::size_t limit, std::ostream& out) {
  LineReader reader(corpus);
  std::size_t shown = 0;
  std::size_t total = 0;
  auto conf = [](const nlohmann::json& j, const char* key) {
    std::ostringstream s;
    if (j.contains(key) && j.at(key).is_number())
      s << std::fixed << std::setprecision(3) << j.at(key).get<double>();
    else
      s << "  -  ";
    return s.str();
  };
  while (auto line = reader.next()) {
    if (collapse_whitespace(*line).empty()) continue;
    ++total;
    if (limit && shown >= limit) continue;
    const nlohmann::json j = nlohmann::json::parse(*line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      out << "line " << reader.line_number() << ": not a JSON object\n";
      continue;
    }
    const std::string anchor = j.value("anchor", j.value("premise", j.value("question", std::string())));
    const std::string positive = j.value("positive", j.value("entailment", j.value("answer", std::string())));
    const std::string negative = j.value("negative", j.value("contradiction", std::string()));
    out << "#" << total << "  " << anchor << (j.value("positive_is_anchor", false) ? "   [positive = anchor]" : "")
        << "\n";
    out << "  + " << conf(j, "pos_confidence") << "  " << positive << "\n";
    if (!negative.empty()) out << "  - " << conf(j, "neg_confidence") << "  " << negative << "\n";
    ++shown;
  }
  out << shown << " of " << total << " records shown\n";
}

}  // namespace gense::pipeline
