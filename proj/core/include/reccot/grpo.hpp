#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reccot/corpus.hpp"
#include "reccot/reward.hpp"

namespace reccot::grpo {

struct GeneratedOutput {
  std::string text;
  // Sequence-level log-probability under the sampling parameters.
  double logp = 0.0;
};

// A stochastic text generator with a flat parameter vector.
class Policy {
 public:
  virtual ~Policy() = default;

  // Draws `count` outputs; identical seeds give identical draws.
  virtual std::vector<GeneratedOutput> sample(std::string_view prompt, std::size_t count,
                                              std::uint64_t seed) const = 0;
  virtual double log_prob(std::string_view prompt, std::string_view output) const = 0;

  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> params) = 0;
  // params += delta
  virtual void apply_gradient(std::span<const double> delta);

  // d log_prob / d params when available analytically.
  virtual std::optional<std::vector<double>> log_prob_gradient(std::string_view prompt,
                                                               std::string_view output) const {
    (void)prompt;
    (void)output;
    return std::nullopt;
  }

  // One output for downstream use; defaults to a single seeded sample.
  virtual std::string generate(std::string_view prompt, std::uint64_t seed) const;

  virtual std::unique_ptr<Policy> clone() const = 0;
};

struct CoTSample {
  std::string prompt;
  std::string output_text;
  std::optional<double> parsed_rating;
  double truth_rating = 0.0;
  double logp_old = 0.0;
  double logp_ref = 0.0;
  reward::RewardBreakdown reward;
  double advantage = 0.0;
};

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.04;
  double learning_rate = 0.05;
  std::size_t steps = 500;
  std::size_t prompts_per_step = 1;
  std::uint64_t seed = 1;
  // Central-difference step for policies without analytic gradients.
  double fd_step = 1e-4;
  // Saturation value for exp(logp_ref - logp_cur).
  double kl_ratio_cap = 1e8;

  void validate() const;
};

inline constexpr double kStdFloor = 1e-8;

// (r_i - mean) / max(std, 1e-8) with population std; all zeros when the
// group has (numerically) no spread.
std::vector<double> normalize_advantages(std::span<const double> rewards);

// x - log(x) - 1 with x = exp(logp_ref - logp_cur). When x overflows or
// exceeds `ratio_cap` it is saturated at the cap and *saturated is set.
double kl_estimate(double logp_ref, double logp_cur, double ratio_cap = 1e8,
                   bool* saturated = nullptr);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A), ratio = exp(cur - old).
double surrogate_term(double logp_cur, double logp_old, double advantage, double eps);

// Mean over the group of surrogate - beta * KL at the policy's current
// parameters. Samples carry logp_old, logp_ref and advantages.
double grpo_objective(std::span<const CoTSample> group, const Policy& policy, const GrpoConfig& cfg);

// Gradient of grpo_objective w.r.t. the policy parameters: analytic when the
// policy exposes log-prob gradients, central differences otherwise.
std::vector<double> grpo_objective_gradient(std::span<const CoTSample> group, const Policy& policy,
                                            const GrpoConfig& cfg);

struct Prompt {
  std::string text;
  double truth = 0.0;
};

using RewardFn = std::function<reward::RewardBreakdown(std::string_view output, double truth)>;

struct StepStats {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

struct TrainingReport {
  std::vector<StepStats> steps;

  std::vector<double> reward_trace() const;
  std::string to_csv() const;
};

// GRPO loop: each step draws prompts, samples a group per prompt from a
// frozen copy of the current policy, scores the outputs, normalizes rewards
// into advantages and takes one Adam ascent step on the objective. `ref` is
// the fixed KL anchor. Throws NumericError on a non-finite gradient.
TrainingReport train(Policy& policy, const Policy& ref, std::span<const Prompt> prompts,
                     const RewardFn& reward_fn, const GrpoConfig& cfg);

// Builds a reward function over the composite reward.
RewardFn make_reward_fn(const corpus::RatingFrequencyTable& table, const reward::RewardConfig& cfg,
                        reward::RewardPolicy policy = reward::RewardPolicy::kFrequencyAware);

// One CoT per review with cross-fold provenance.
struct CoTRecord {
  corpus::ReviewRecord review;
  std::string split;  // "train", "validation" or "test"
  std::string cot_text;
  std::optional<double> predicted_rating;
  char generator_fold = 'A';
  reward::RewardBreakdown rewards;
};

// Train reviews in fold A are written by `policy_b` and vice versa. Held-out
// reviews (validation/test) are written by `policy_a`, which never saw them.
// Throws when a fold is empty or a train record lacks a fold.
std::vector<CoTRecord> generate_cot_two_fold(const Policy& policy_a, const Policy& policy_b,
                                             const corpus::CorpusSplit& split,
                                             const corpus::RatingFrequencyTable& table,
                                             const reward::RewardConfig& reward_cfg,
                                             std::uint64_t seed, bool include_held_out = true);

void write_cot_jsonl(const std::filesystem::path& path, const std::vector<CoTRecord>& records);
std::vector<CoTRecord> read_cot_jsonl(const std::filesystem::path& path);

}  // namespace reccot::grpo
