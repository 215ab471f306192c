#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gense/contrastive.hpp"
#include "gense/evaluation.hpp"
#include "gense/gendisc_trainer.hpp"
#include "gense/synthesis.hpp"
#include "gense/tiny_seq2seq.hpp"

namespace gense::pipeline {

/// Bad configuration or usage; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kWorkspaceEnv = "GENSE_WORKSPACE";

struct CorpusPaths {
  std::optional<std::filesystem::path> nli;
  std::optional<std::filesystem::path> nli_dev;
  std::optional<std::filesystem::path> unlabeled;
  std::optional<std::filesystem::path> in_domain;
  std::optional<std::filesystem::path> qa;
  std::vector<std::filesystem::path> sts;
  std::optional<std::filesystem::path> ranking;
  // Extra sentences, one per line, removed from the unlabeled corpora.
  std::optional<std::filesystem::path> exclusions;
  double sts_scale_min = 0.0;
  double sts_scale_max = 5.0;
};

struct ScheduleSpec {
  ScheduleName name = ScheduleName::Universal;
  // Per-stage field overrides merged onto the preset stages by position. For
  // the custom schedule they define the stages; "corpus" may be a path or one
  // of synthetic, in-domain, nli, qa.
  std::vector<nlohmann::json> stages;
};

struct PipelineConfig {
  std::filesystem::path workspace;
  CorpusPaths corpora;
  TinySeq2SeqConfig backbone;
  std::size_t max_vocab = 1000;
  GenDiscConfig gendisc;
  SynthesisConfig synthesis;
  ScheduleSpec schedule;
  DiagnosticsConfig diagnostics;
  double dev_fraction = 0.1;
  // Ablations: fraction of NLI training triplets and of unlabeled sentences used.
  double nli_fraction = 1.0;
  double synthetic_fraction = 1.0;
  nlohmann::json source;  // the parsed config document
  std::filesystem::path base_dir;

  /// Relative paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig from_file(const std::filesystem::path& path,
                                  const std::vector<std::string>& overrides = {});
  /// FNV-1a of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

/// Applies "a.b.c=value" overrides; the value parses as JSON, else as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Explicit flag, then $GENSE_WORKSPACE, then the config value.
std::filesystem::path resolve_workspace(const PipelineConfig& config,
                                        const std::optional<std::filesystem::path>& flag);

// workspace/{gendisc, synth, embed/<schedule>, reports}/ plus manifest.json,
// which maps each artifact to the command and config hash that produced it.
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path gendisc_dir() const { return root_ / "gendisc"; }
  std::filesystem::path synth_dir() const { return root_ / "synth"; }
  std::filesystem::path embed_dir() const { return root_ / "embed"; }
  std::filesystem::path reports_dir() const { return root_ / "reports"; }
  std::filesystem::path data_dir() const { return root_ / "data"; }
  std::filesystem::path gendisc_checkpoint() const { return gendisc_dir() / "model.ckpt"; }
  std::filesystem::path nli_train_file() const { return data_dir() / "nli_train.jsonl"; }

  void record(const std::filesystem::path& artifact, const std::string& command, const std::string& config_hash) const;
  nlohmann::json manifest() const;

 private:
  std::filesystem::path root_;
};

// Exclusive lock on a workspace; a second holder fails with an IoError.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const std::filesystem::path& workspace);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct Context {
  PipelineConfig config;
  Workspace workspace;
  std::ostream& out;  // primary command output
  std::ostream& err;  // progress and warnings
};

/// The untrained model every trained model starts from; rebuilt
/// deterministically from the config and corpora.
std::unique_ptr<TinySeq2Seq> initial_model(const Context& ctx);

struct GenDiscOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::size_t best_step = 0;
};
GenDiscOutputs train_gendisc(const Context& ctx);

enum class SynthesisSource { Unlabeled, InDomain };

struct SynthesizeOptions {
  SynthesisSource source = SynthesisSource::Unlabeled;
  std::vector<double> alpha_sweep;  // empty: a single run at config alpha
};

struct SynthesizeOutputs {
  std::vector<std::filesystem::path> triplets;
  std::vector<std::filesystem::path> stats;
  std::vector<SynthesisStats> counts;
};
SynthesizeOutputs synthesize(const Context& ctx, const SynthesizeOptions& options);

/// Synthesis output for a source at the configured alpha.
std::filesystem::path synthetic_corpus_path(const Workspace& ws, SynthesisSource source);

struct TrainEmbedOptions {
  bool resume = false;
  std::optional<ScheduleName> schedule;  // overrides the config
};

struct TrainEmbedOutputs {
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> stage_checkpoints;
  std::vector<std::size_t> resumed_stages;
  std::filesystem::path log;
};
TrainEmbedOutputs train_embed(const Context& ctx, const TrainEmbedOptions& options);

/// The configured schedule with stage corpora resolved to files.
TrainingSchedule resolve_schedule(const Context& ctx, std::optional<ScheduleName> override_name = std::nullopt);

struct EvaluateOptions {
  std::optional<std::filesystem::path> checkpoint;  // default: the schedule's final checkpoint
  bool diagnostics = false;
  // Score seeded random vectors instead of a checkpoint.
  std::optional<std::uint64_t> random_baseline_seed;
  std::optional<std::filesystem::path> output;
};

struct EvaluateOutputs {
  std::filesystem::path report_path;
  EvaluationReport report;
};
EvaluateOutputs evaluate(const Context& ctx, const EvaluateOptions& options);

/// Pretty-prints triplets (or pairs) with their confidences.
void inspect(const std::filesystem::path& corpus, std::size_t limit, std::ostream& out);

}  // namespace gense::pipeline
