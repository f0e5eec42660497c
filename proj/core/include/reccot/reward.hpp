#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "reccot/corpus.hpp"

namespace reccot::reward {

struct RewardWeights {
  double format = 1.0;
  double predict = 1.0;
  double quality = 1.0;
};

struct RewardConfig {
  // Underestimation penalty: -lambda * (exp(mu * |e|) - 1) for e < 0.
  double lambda_under = 0.5;
  double mu_under = 1.0;
  // Overestimation penalty: -gamma * (1 - exp(-kappa * e) / (1 + e)) for e >= 0.
  double gamma_over = 0.5;
  double kappa_over = 1.0;
  std::size_t len_min = 100;
  std::size_t len_max = 200;
  RewardWeights weights;
  // Predict reward assigned when no finite rating can be read.
  double floor_reward = -1.0;

  // Throws reccot::Error on a violated invariant.
  void validate() const;
};

struct RewardBreakdown {
  double format = 0.0;
  double predict = 0.0;
  double quality = 0.0;
  double total = 0.0;
  // Set when the predict part fell back to the floor.
  bool flagged = false;
};

// Keys a chain-of-thought JSON object must carry.
struct CotSchema {
  std::string analysis_key = "analysis";
  std::string rating_key = "rating";
};

struct ParsedCot {
  std::string analysis;
  double rating = 0.0;
};

// Parses the whole text as a JSON object with a string analysis and a numeric
// rating. Anything else is nullopt.
std::optional<ParsedCot> parse_cot(std::string_view cot_text, const CotSchema& schema = {});

double format_reward(std::string_view cot_text, const CotSchema& schema = {});

double base_reward(double error);
double penalty(double error, const RewardConfig& cfg);

// f * (Base(e) + Penalty(e)) with e = pred - truth. A non-finite prediction
// yields cfg.floor_reward and sets *flagged.
double predict_reward(double pred, double truth, double weight_f, const RewardConfig& cfg,
                      bool* flagged = nullptr);

double quality_from_length(std::size_t length, const RewardConfig& cfg);
// Character (code point) length of the text through quality_from_length.
double quality_reward(std::string_view cot_text, const RewardConfig& cfg);

// max(0, 1 - |pred - truth| / 4)
double linear_reward_baseline(double pred, double truth);

enum class RewardPolicy { kFrequencyAware, kLinear };

std::string to_string(RewardPolicy p);
RewardPolicy reward_policy_from_string(std::string_view s);

// Scores one generated output against the ground-truth rating.
//   format  - JSON shape check
//   predict - frequency-aware piecewise reward (or the linear baseline),
//             floor when the rating cannot be parsed
//   quality - length reward on the analysis field (whole text if unparseable)
// Throws when `truth` has no weight in `table`.
RewardBreakdown composite_reward(std::string_view cot_text, double truth,
                                 const corpus::RatingFrequencyTable& table,
                                 const RewardConfig& cfg,
                                 RewardPolicy policy = RewardPolicy::kFrequencyAware,
                                 const CotSchema& schema = {});

}  // namespace reccot::reward
