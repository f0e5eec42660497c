#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "reccot/corpus.hpp"

// Synthetic review corpora with a planted rating signal, used by tests, the
// acceptance suite and the `synth` CLI command.
namespace reccot::synthetic {

struct ReviewStyle {
  std::size_t min_cues = 2;
  std::size_t max_cues = 6;
  std::size_t min_filler = 8;
  std::size_t max_filler = 30;
  // Probability that a cue is written as a negated word of the opposite
  // polarity ("not great" for a negative cue).
  double negation_rate = 0.3;
  double intensifier_rate = 0.2;
};

// Probability that a single sentiment cue in a review with this rating is
// positive.
double positive_cue_probability(int rating);

std::string render_review(int rating, const ReviewStyle& style, std::mt19937_64& rng);

// Ratings from latent user/item factors:
//   round(global_mean + b_u + b_i + <p_u, q_i> + noise) clamped to [1, 5]
// with review text generated from the rating. Each latent dimension is a
// product aspect: p_u >= 0 is how much the user cares about it and q_i is the
// item's signed quality on it. A review mentions aspect k with probability
// aspect_rate * p_uk / max_j p_uj, praising it when q_ik > 0 and criticizing
// it otherwise. aspect_rate = 0 yields text that carries only the rating.
struct PlantedConfig {
  std::size_t users = 300;
  std::size_t items = 150;
  std::size_t min_per_user = 6;
  std::size_t max_per_user = 16;
  std::size_t latent_dim = 4;
  double global_mean = 3.3;
  double user_bias_sd = 0.8;
  double item_bias_sd = 0.8;
  double factor_sd = 0.5;
  double noise_sd = 0.3;
  double aspect_rate = 0.9;
  ReviewStyle style;
  std::uint64_t seed = 7;
};

// Ratings drawn from a fixed category distribution (index 0 = rating 1).
struct LongTailConfig {
  std::size_t reviews = 4000;
  std::size_t users = 400;
  std::size_t items = 200;
  std::array<double, 5> distribution{0.03, 0.025, 0.025, 0.02, 0.90};
  ReviewStyle style;
  std::uint64_t seed = 11;
};

struct SyntheticCorpus {
  std::vector<corpus::ReviewRecord> records;
  // Short descriptive text per item (item-side metadata).
  std::map<std::string, std::string> item_text;
};

SyntheticCorpus generate_planted(const PlantedConfig& cfg);
SyntheticCorpus generate_long_tail(const LongTailConfig& cfg);

// Raw-schema JSONL ({"user","item","rating","text","timestamp"}) plus an item
// metadata JSONL ({"item_id","text"}).
void write_raw_jsonl(const std::filesystem::path& path, const SyntheticCorpus& corpus);
void write_item_metadata(const std::filesystem::path& path, const SyntheticCorpus& corpus);

}  // namespace reccot::synthetic
