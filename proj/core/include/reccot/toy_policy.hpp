#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "reccot/container.hpp"
#include "reccot/grpo.hpp"

namespace reccot::grpo {

// Desk-scale CoT generator: a softmax over the rating grid {1.0, 1.5, ..., 5.0}
// whose logits are linear in a small feature vector read from the prompt, and
// a template bank that renders the chosen rating as a JSON chain of thought.
class ToyTemplatePolicy final : public Policy {
 public:
  static constexpr std::size_t kCells = 9;
  static constexpr std::size_t kFeatures = 3;
  static constexpr std::size_t kParams = kCells * kFeatures;

  struct Options {
    // Approximate character length of the rendered analysis text.
    std::size_t target_length = 180;
    // generate() returns the most probable cell instead of sampling.
    bool greedy_generation = true;
  };

  ToyTemplatePolicy() : ToyTemplatePolicy(Options{}) {}
  explicit ToyTemplatePolicy(Options opts);

  static double cell_value(std::size_t cell) { return 1.0 + 0.5 * static_cast<double>(cell); }
  // Grid cell of a rating value, or kCells when it is not on the grid.
  static std::size_t cell_of(double rating);

  // [1, balance, balance^2] of the prompt's lexicon evidence.
  static std::array<double, kFeatures> features(std::string_view prompt);

  std::array<double, kCells> probabilities(std::string_view prompt) const;
  std::string render(std::size_t cell, std::string_view prompt) const;

  std::vector<GeneratedOutput> sample(std::string_view prompt, std::size_t count,
                                      std::uint64_t seed) const override;
  double log_prob(std::string_view prompt, std::string_view output) const override;
  std::vector<double> parameters() const override;
  void set_parameters(std::span<const double> params) override;
  std::optional<std::vector<double>> log_prob_gradient(std::string_view prompt,
                                                       std::string_view output) const override;
  std::string generate(std::string_view prompt, std::uint64_t seed) const override;
  std::unique_ptr<Policy> clone() const override;

  const Options& options() const { return opts_; }

  io::Checkpoint to_checkpoint() const;
  static ToyTemplatePolicy from_checkpoint(const io::Checkpoint& ckpt);

 private:
  std::array<double, kCells> logits(std::string_view prompt) const;

  Options opts_;
  std::array<double, kParams> weights_{};
};

}  // namespace reccot::grpo
