#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "reccot/corpus.hpp"
#include "reccot/encoder.hpp"
#include "reccot/grpo.hpp"
#include "reccot/recsys.hpp"
#include "reccot/reward.hpp"

// Experiment configuration: one INI/TOML-style file of [sections] holding
// `key = value` lines. Blank lines and lines starting with '#' or ';' are
// ignored; string values may be wrapped in double quotes. Unknown sections
// or keys are rejected so typos cannot silently fall back to defaults.
namespace reccot::config {

enum class Variant { kFull, kNoCot, kNoCotItem, kLinearReward };

std::string to_string(Variant v);
Variant variant_from_string(std::string_view s);
// Column label used in reports.
std::string report_label(Variant v);
bool uses_cot(Variant v);
bool uses_item_text(Variant v);
reward::RewardPolicy reward_policy(Variant v);

struct PathConfig {
  std::filesystem::path raw;
  std::filesystem::path item_metadata;  // empty when absent
  std::filesystem::path work_dir;
};

struct CorpusConfig {
  corpus::FieldSchema schema;
  std::size_t k_core = 5;
  std::size_t min_text_length = corpus::kMinCleanLength;
  corpus::SplitRatios ratios;
  std::optional<std::uint64_t> seed;  // defaults to the experiment seed
  corpus::FrequencyMode frequency_mode = corpus::FrequencyMode::kInverse;
};

struct ExperimentConfig {
  std::string dataset = "dataset";
  Variant variant = Variant::kFull;
  std::uint64_t seed = 1;
  bool item_side_text = false;

  PathConfig paths;
  CorpusConfig corpus;
  reward::RewardConfig reward;
  grpo::GrpoConfig grpo;
  std::size_t cot_target_length = 180;
  encoder::EncoderConfig encoder;
  recsys::RecConfig recsys;

  // Sets the experiment seed and the per-module seeds derived from it.
  void set_seed(std::uint64_t s);
  std::uint64_t split_seed() const { return corpus.seed.value_or(seed); }
  // Item metadata is appended to encoder input for the +item variant or when
  // requested explicitly.
  bool append_item_text() const { return item_side_text || uses_item_text(variant); }

  // Throws reccot::Error naming the offending key.
  void validate() const;

  // Canonical JSON of one section ("experiment", "paths", "corpus", "reward",
  // "grpo", "encoder", "cache", "recsys"), used for stage fingerprints.
  std::string section_json(std::string_view section) const;
};

// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);

// Relative paths resolve against RECCOT_DATA_DIR when it is set, otherwise
// against the directory holding the config file.
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace reccot::config
