#include "reccot/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "reccot/error.hpp"
#include "reccot/text.hpp"

namespace reccot::grpo {

namespace {

constexpr std::array<const char*, ToyTemplatePolicy::kCells> kTone{
    "harshly negative", "very negative",       "negative",
    "mostly negative",  "mixed",               "cautiously positive",
    "positive",         "very positive",       "enthusiastic"};

constexpr std::array<const char*, 4> kPadding{
    "The comments stay focused on how the product performs in everyday use.",
    "Details about delivery and packaging carry little weight in this judgement.",
    "The wording is direct, so the stated feelings can be taken at face value.",
    "No unusual circumstances are mentioned that would change the assessment."};

std::string count_words(double n) {
  static constexpr std::array<const char*, 9> kWords{"no",   "one",   "two",   "three", "four",
                                                      "five", "six",   "seven", "eight"};
  const auto k = static_cast<std::size_t>(std::lround(n));
  return k < kWords.size() ? kWords[k] : "many";
}

std::string format_rating(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) s += i + 1 == names.size() ? " and " : ", ";
    s += names[i];
  }
  return s;
}

// Which aspects the review praises or criticizes, as one or two sentences.
std::string aspect_rationale(std::string_view prompt) {
  const auto opinions = text::read_aspect_opinions(prompt);
  std::vector<std::string> praised;
  std::vector<std::string> criticized;
  for (std::size_t k = 0; k < opinions.size(); ++k) {
    if (opinions[k] > 0.0) praised.push_back(text::aspects()[k].name);
    if (opinions[k] < 0.0) criticized.push_back(text::aspects()[k].name);
  }
  std::string s;
  if (!praised.empty()) s += " They praise the " + join_names(praised) + ".";
  if (!criticized.empty()) s += " They criticize the " + join_names(criticized) + ".";
  return s;
}

}  // namespace

ToyTemplatePolicy::ToyTemplatePolicy(Options opts) : opts_(opts) {}

std::size_t ToyTemplatePolicy::cell_of(double rating) {
  for (std::size_t k = 0; k < kCells; ++k) {
    if (std::abs(cell_value(k) - rating) < 1e-9) return k;
  }
  return kCells;
}

std::array<double, ToyTemplatePolicy::kFeatures> ToyTemplatePolicy::features(std::string_view prompt) {
  const double b = text::read_sentiment(prompt).balance();
  return {1.0, b, b * b};
}

std::array<double, ToyTemplatePolicy::kCells> ToyTemplatePolicy::logits(std::string_view prompt) const {
  const auto f = features(prompt);
  std::array<double, kCells> z{};
  for (std::size_t k = 0; k < kCells; ++k) {
    for (std::size_t j = 0; j < kFeatures; ++j) z[k] += weights_[k * kFeatures + j] * f[j];
  }
  return z;
}

std::array<double, ToyTemplatePolicy::kCells> ToyTemplatePolicy::probabilities(std::string_view prompt) const {
  auto z = logits(prompt);
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

std::string ToyTemplatePolicy::render(std::size_t cell, std::string_view prompt) const {
  const auto ev = text::read_sentiment(prompt);
  const std::string tone = kTone.at(cell);
  const std::string rating = format_rating(cell_value(cell));
  std::string analysis = "This review reads as " + tone + ". The reviewer makes " +
                         count_words(ev.positive) + " positive remarks and " +
                         count_words(ev.negative) + " complaints." + aspect_rationale(prompt);
  const std::string closing = " Overall the sentiment is " + tone + ", pointing to a rating of " + rating + ".";
  for (std::size_t i = 0; analysis.size() + closing.size() < opts_.target_length && i < kPadding.size(); ++i) {
    analysis += " ";
    analysis += kPadding[i];
  }
  analysis += closing;
  nlohmann::json j{{"analysis", analysis}, {"rating", cell_value(cell)}};
  return j.dump();
}

std::vector<GeneratedOutput> ToyTemplatePolicy::sample(std::string_view prompt, std::size_t count,
                                                       std::uint64_t seed) const {
  const auto p = probabilities(prompt);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  std::vector<GeneratedOutput> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cell = dist(rng);
    out.push_back({render(cell, prompt), std::log(p[cell])});
  }
  return out;
}

double ToyTemplatePolicy::log_prob(std::string_view prompt, std::string_view output) const {
  const auto parsed = reward::parse_cot(output);
  if (!parsed) return -std::numeric_limits<double>::infinity();
  const std::size_t cell = cell_of(parsed->rating);
  if (cell == kCells) return -std::numeric_limits<double>::infinity();
  const auto z = logits(prompt);
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return z[cell] - mx - std::log(sum);
}

std::vector<double> ToyTemplatePolicy::parameters() const {
  return {weights_.begin(), weights_.end()};
}

void ToyTemplatePolicy::set_parameters(std::span<const double> params) {
  if (params.size() != kParams) throw ShapeError("ToyTemplatePolicy expects " + std::to_string(kParams) + " parameters");
  std::copy(params.begin(), params.end(), weights_.begin());
}

std::optional<std::vector<double>> ToyTemplatePolicy::log_prob_gradient(std::string_view prompt,
                                                                        std::string_view output) const {
  const auto parsed = reward::parse_cot(output);
  std::vector<double> g(kParams, 0.0);
  if (!parsed) return g;
  const std::size_t cell = cell_of(parsed->rating);
  if (cell == kCells) return g;
  const auto p = probabilities(prompt);
  const auto f = features(prompt);
  for (std::size_t k = 0; k < kCells; ++k) {
    const double coeff = (k == cell ? 1.0 : 0.0) - p[k];
    for (std::size_t j = 0; j < kFeatures; ++j) g[k * kFeatures + j] = coeff * f[j];
  }
  return g;
}

std::string ToyTemplatePolicy::generate(std::string_view prompt, std::uint64_t seed) const {
  if (!opts_.greedy_generation) return Policy::generate(prompt, seed);
  const auto p = probabilities(prompt);
  const auto cell = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return render(cell, prompt);
}

std::unique_ptr<Policy> ToyTemplatePolicy::clone() const {
  return std::make_unique<ToyTemplatePolicy>(*this);
}

io::Checkpoint ToyTemplatePolicy::to_checkpoint() const {
  io::Checkpoint c;
  c.dim = kParams;
  c.tensors["policy.weights"] = nn::Tensor2D(kCells, kFeatures, parameters());
  c.blobs["policy.options"] = nlohmann::json{{"target_length", opts_.target_length},
                                             {"greedy_generation", opts_.greedy_generation}}
                                  .dump();
  return c;
}

ToyTemplatePolicy ToyTemplatePolicy::from_checkpoint(const io::Checkpoint& ckpt) {
  const auto opts_json = nlohmann::json::parse(ckpt.blob("policy.options"));
  Options opts;
  opts.target_length = opts_json.at("target_length").get<std::size_t>();
  opts.greedy_generation = opts_json.at("greedy_generation").get<bool>();
  ToyTemplatePolicy p(opts);
  const auto& w = ckpt.tensor("policy.weights");
  p.set_parameters(w.values());
  return p;
}

}  // namespace reccot::grpo
