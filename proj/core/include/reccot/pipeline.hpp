#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "reccot/config.hpp"

// Stage runner for the full cascade. Every stage reads its upstream
// artifacts, writes its own into a stage directory and records a manifest
// with the configuration fingerprint and input/output hashes.
//
//   ingest -> stats -> grpo-train -> cot-generate -> encoder-train -> embed
//          -> rec-train -> rec-eval -> analyze
//   embed -> cache-inspect
//   reward-compare runs the chain from grpo-train for both reward policies.
//
// Without CoT (no_cot, no_cot_item) grpo-train and cot-generate are skipped
// and the encoder sees an empty CoT.
namespace reccot::pipeline {

enum class Stage {
  kIngest,
  kStats,
  kGrpoTrain,
  kCotGenerate,
  kEncoderTrain,
  kEmbed,
  kCacheInspect,
  kRecTrain,
  kRecEval,
  kRewardCompare,
  kAnalyze,
};

std::string to_string(Stage s);
Stage stage_from_string(std::string_view s);
const std::vector<Stage>& all_stages();
// Human-readable dependency graph for --help.
std::string stage_graph();

// An input file and the stage that produces it (none for user-supplied data).
struct Artifact {
  std::filesystem::path path;
  std::optional<Stage> producer;
};

struct RunOptions {
  bool force = false;
  std::optional<std::filesystem::path> encoder_checkpoint;
  std::ostream* log = nullptr;
};

class Pipeline {
 public:
  Pipeline(config::ExperimentConfig cfg, RunOptions opts = {});

  const config::ExperimentConfig& config() const { return cfg_; }

  void run(Stage stage);
  // Runs the chain for the configured variant and returns the metrics path.
  std::filesystem::path run_all();

  std::filesystem::path stage_dir(Stage stage) const;
  std::filesystem::path metrics_path() const;
  std::filesystem::path cache_path() const;
  std::filesystem::path comparison_path() const;

 private:
  void ingest();
  void stats();
  void grpo_train();
  void cot_generate();
  void encoder_train();
  void embed();
  void cache_inspect();
  void rec_train();
  void rec_eval();
  void reward_compare();
  void analyze();

  std::string fingerprint(Stage stage) const;
  std::vector<Artifact> inputs(Stage stage) const;
  void check_overwrite(Stage stage) const;
  void require(Stage stage) const;
  void write_manifest(Stage stage, const std::vector<std::filesystem::path>& outputs) const;
  std::filesystem::path encoder_checkpoint_path() const;
  void log(const std::string& line) const;

  config::ExperimentConfig cfg_;
  RunOptions opts_;
};

// Stages executed by run_all for a variant, in order.
std::vector<Stage> chain_for(config::Variant variant);

}  // namespace reccot::pipeline
