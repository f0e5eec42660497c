#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "reccot/config.hpp"
#include "reccot/error.hpp"
#include "reccot/pipeline.hpp"
#include "reccot/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using reccot::pipeline::Stage;

const std::map<Stage, const char*>& descriptions() {
  static const std::map<Stage, const char*> d = {
      {Stage::kIngest, "Parse raw reviews, clean text, k-core filter and split"},
      {Stage::kStats, "Rating distribution and frequency weights of the train split"},
      {Stage::kGrpoTrain, "Train one CoT generator per train fold with GRPO"},
      {Stage::kCotGenerate, "Write CoT for every review using the opposite-fold generator"},
      {Stage::kEncoderTrain, "Fine-tune the text encoder on CoT + review"},
      {Stage::kEmbed, "Embed train reviews into the per-user/per-item cache"},
      {Stage::kCacheInspect, "Print a summary of the embedding cache"},
      {Stage::kRecTrain, "Train the cross-attention recommender"},
      {Stage::kRecEval, "Score the test split and write the metrics report"},
      {Stage::kRewardCompare, "Run the chain under both reward policies and write a comparison CSV"},
      {Stage::kAnalyze, "Test error by user engagement and review length"},
  };
  return d;
}

struct SynthOptions {
  std::string kind = "planted";
  std::string out = ".";
  std::optional<std::size_t> users;
  std::optional<std::size_t> items;
  std::optional<std::size_t> reviews;
  std::optional<double> negation_rate;
};

int write_synthetic(const SynthOptions& o, std::optional<std::uint64_t> seed) {
  const std::string& kind = o.kind;
  const fs::path out = o.out;
  reccot::synthetic::SyntheticCorpus corpus;
  if (kind == "planted") {
    reccot::synthetic::PlantedConfig cfg;
    if (seed) cfg.seed = *seed;
    if (o.users) cfg.users = *o.users;
    if (o.items) cfg.items = *o.items;
    if (o.negation_rate) cfg.style.negation_rate = *o.negation_rate;
    corpus = reccot::synthetic::generate_planted(cfg);
  } else if (kind == "long-tail") {
    reccot::synthetic::LongTailConfig cfg;
    if (seed) cfg.seed = *seed;
    if (o.users) cfg.users = *o.users;
    if (o.items) cfg.items = *o.items;
    if (o.reviews) cfg.reviews = *o.reviews;
    if (o.negation_rate) cfg.style.negation_rate = *o.negation_rate;
    corpus = reccot::synthetic::generate_long_tail(cfg);
  } else {
    throw reccot::Error("unknown synthetic corpus kind '" + kind + "' (expected planted or long-tail)");
  }
  fs::create_directories(out);
  reccot::synthetic::write_raw_jsonl(out / "raw.jsonl", corpus);
  reccot::synthetic::write_item_metadata(out / "items.jsonl", corpus);
  std::cout << "wrote " << corpus.records.size() << " reviews to " << (out / "raw.jsonl").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reccot: chain-of-thought enhanced review rating prediction"};
  app.footer(reccot::pipeline::stage_graph() +
             "\nRelative paths in the config resolve against RECCOT_DATA_DIR when set,\n"
             "otherwise against the config file's directory.");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string variant;
  bool force = false;
  std::string encoder_checkpoint;
  app.add_option("--config", config_path, "Experiment config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override experiment.seed");
  app.add_option("--variant", variant, "Override experiment.variant")
      ->check(CLI::IsMember({"full", "no_cot", "no_cot_item", "linear_reward"}));
  app.add_flag("--force", force, "Overwrite artifacts written under a different config");
  app.add_option("--encoder-checkpoint", encoder_checkpoint, "Use this encoder checkpoint in `embed`")
      ->check(CLI::ExistingFile);

  std::map<CLI::App*, Stage> stage_commands;
  for (Stage s : reccot::pipeline::all_stages()) {
    stage_commands[app.add_subcommand(reccot::pipeline::to_string(s), descriptions().at(s))] = s;
  }
  CLI::App* run_all = app.add_subcommand("run-all", "Run every stage of the configured variant in order");
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic review corpus (raw.jsonl, items.jsonl)");
  SynthOptions synth_opts;
  synth->add_option("--kind", synth_opts.kind, "planted or long-tail")->capture_default_str();
  synth->add_option("--out", synth_opts.out, "Output directory")->capture_default_str();
  synth->add_option("--users", synth_opts.users, "Number of users");
  synth->add_option("--items", synth_opts.items, "Number of items");
  synth->add_option("--reviews", synth_opts.reviews, "Number of reviews (long-tail only)");
  synth->add_option("--negation-rate", synth_opts.negation_rate, "Share of sentiment cues written in negated form")
      ->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return write_synthetic(synth_opts, seed);
    if (config_path.empty()) throw reccot::Error("--config is required");

    auto cfg = reccot::config::load_config(config_path);
    if (seed) cfg.set_seed(*seed);
    if (!variant.empty()) cfg.variant = reccot::config::variant_from_string(variant);
    cfg.validate();

    reccot::pipeline::RunOptions opts;
    opts.force = force;
    opts.log = &std::cerr;
    if (!encoder_checkpoint.empty()) opts.encoder_checkpoint = fs::absolute(encoder_checkpoint);
    reccot::pipeline::Pipeline pipe(cfg, opts);

    if (run_all->parsed()) {
      const auto metrics = pipe.run_all();
      std::cout << std::ifstream(metrics).rdbuf();
      return 0;
    }
    for (const auto& [cmd, stage] : stage_commands) {
      if (cmd->parsed()) pipe.run(stage);
    }
    return 0;
  } catch (const reccot::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
