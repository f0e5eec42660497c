#include "reccot/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "reccot/error.hpp"
#include "reccot/nn/adam.hpp"

namespace reccot::grpo {

void Policy::apply_gradient(std::span<const double> delta) {
  auto p = parameters();
  if (p.size() != delta.size()) throw ShapeError("apply_gradient: length mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += delta[i];
  set_parameters(p);
}

std::string Policy::generate(std::string_view prompt, std::uint64_t seed) const {
  return sample(prompt, 1, seed).front().text;
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw Error("group_size must be at least 2");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw Error("clip_eps must lie in (0, 1)");
  if (kl_beta < 0.0) throw Error("kl_beta must be non-negative");
  if (learning_rate < 0.0) throw Error("learning_rate must be non-negative");
  if (prompts_per_step == 0) throw Error("prompts_per_step must be positive");
}

std::vector<double> normalize_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error("normalize_advantages needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (std_dev < kStdFloor) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / std_dev;
  return adv;
}

namespace {

double kl_ratio(double logp_ref, double logp_cur, double cap, bool* saturated) {
  double x = std::exp(logp_ref - logp_cur);
  if (!std::isfinite(x) || x > cap) {
    x = cap;
    if (saturated) *saturated = true;
  }
  return x;
}

}  // namespace

double kl_estimate(double logp_ref, double logp_cur, double ratio_cap, bool* saturated) {
  if (!std::isfinite(logp_ref) || !std::isfinite(logp_cur)) {
    throw NumericError("kl_estimate: log-probabilities must be finite");
  }
  const double x = kl_ratio(logp_ref, logp_cur, ratio_cap, saturated);
  if (x == 0.0) {
    // exp underflow: x - log(x) - 1 ~ -log(x) = logp_cur - logp_ref
    return logp_cur - logp_ref - 1.0;
  }
  return x - std::log(x) - 1.0;
}

double surrogate_term(double logp_cur, double logp_old, double advantage, double eps) {
  const double ratio = std::exp(logp_cur - logp_old);
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double grpo_objective(std::span<const CoTSample> group, const Policy& policy, const GrpoConfig& cfg) {
  if (group.empty()) throw Error("grpo_objective: empty group");
  double total = 0.0;
  for (const auto& s : group) {
    const double cur = policy.log_prob(s.prompt, s.output_text);
    total += surrogate_term(cur, s.logp_old, s.advantage, cfg.clip_eps) -
             cfg.kl_beta * kl_estimate(s.logp_ref, cur, cfg.kl_ratio_cap);
  }
  return total / static_cast<double>(group.size());
}

std::vector<double> grpo_objective_gradient(std::span<const CoTSample> group, const Policy& policy,
                                            const GrpoConfig& cfg) {
  if (group.empty()) throw Error("grpo_objective_gradient: empty group");
  const auto params = policy.parameters();
  std::vector<double> grad(params.size(), 0.0);

  if (policy.log_prob_gradient(group.front().prompt, group.front().output_text)) {
    for (const auto& s : group) {
      const double cur = policy.log_prob(s.prompt, s.output_text);
      const double ratio = std::exp(cur - s.logp_old);
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
      // The unclipped branch carries the gradient whenever it attains the min.
      const double d_surrogate = ratio * s.advantage <= clipped * s.advantage ? ratio * s.advantage : 0.0;
      const double x = kl_ratio(s.logp_ref, cur, cfg.kl_ratio_cap, nullptr);
      const double d_kl = 1.0 - x;  // d/dcur of x - log x - 1
      const double coeff = d_surrogate - cfg.kl_beta * d_kl;
      const auto g = *policy.log_prob_gradient(s.prompt, s.output_text);
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += coeff * g[j];
    }
    for (double& g : grad) g /= static_cast<double>(group.size());
    return grad;
  }

  auto probe = policy.clone();
  std::vector<double> x = params;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double orig = x[j];
    x[j] = orig + cfg.fd_step;
    probe->set_parameters(x);
    const double up = grpo_objective(group, *probe, cfg);
    x[j] = orig - cfg.fd_step;
    probe->set_parameters(x);
    const double down = grpo_objective(group, *probe, cfg);
    x[j] = orig;
    grad[j] = (up - down) / (2.0 * cfg.fd_step);
  }
  return grad;
}

std::vector<double> TrainingReport::reward_trace() const {
  std::vector<double> t;
  t.reserve(steps.size());
  for (const auto& s : steps) t.push_back(s.mean_reward);
  return t;
}

std::string TrainingReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "step,mean_reward,mean_kl,mean_clip_fraction\n";
  for (const auto& s : steps) {
    out << s.step << ',' << s.mean_reward << ',' << s.mean_kl << ',' << s.clip_fraction << '\n';
  }
  return out.str();
}


TrainingReport train(Policy& policy, const Policy& ref, std::span<const Prompt> prompts,
                     const RewardFn& reward_fn, const GrpoConfig& cfg) {
  cfg.validate();
  if (prompts.empty()) throw Error("grpo train: no prompts");
  if (policy.parameters().size() != ref.parameters().size()) {
    throw Error("grpo train: policy and reference have different parameter spaces");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, prompts.size() - 1);
  nn::FlatAdam adam(nn::AdamConfig{.learning_rate = cfg.learning_rate});

  TrainingReport report;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto old = policy.clone();
    std::vector<double> grad(policy.parameters().size(), 0.0);
    StepStats stats{step, 0.0, 0.0, 0.0};
    std::size_t n_samples = 0;

    for (std::size_t p = 0; p < cfg.prompts_per_step; ++p) {
      const Prompt& prompt = prompts[pick(rng)];
      const auto outputs = old->sample(prompt.text, cfg.group_size, nn::derive_seed(cfg.seed, step * cfg.prompts_per_step + p));
      std::vector<CoTSample> group;
      std::vector<double> rewards;
      for (const auto& o : outputs) {
        CoTSample s;
        s.prompt = prompt.text;
        s.output_text = o.text;
        s.truth_rating = prompt.truth;
        s.logp_old = o.logp;
        s.logp_ref = ref.log_prob(prompt.text, o.text);
        s.reward = reward_fn(o.text, prompt.truth);
        if (s.reward.format == 1.0) {
          if (auto parsed = reward::parse_cot(o.text)) s.parsed_rating = parsed->rating;
        }
        rewards.push_back(s.reward.total);
        group.push_back(std::move(s));
      }
      const auto adv = normalize_advantages(rewards);
      for (std::size_t i = 0; i < group.size(); ++i) group[i].advantage = adv[i];

      for (const auto& s : group) {
        const double cur = policy.log_prob(s.prompt, s.output_text);
        const double ratio = std::exp(cur - s.logp_old);
        stats.mean_reward += s.reward.total;
        stats.mean_kl += kl_estimate(s.logp_ref, cur, cfg.kl_ratio_cap);
        if (ratio < 1.0 - cfg.clip_eps || ratio > 1.0 + cfg.clip_eps) stats.clip_fraction += 1.0;
        ++n_samples;
      }
      const auto g = grpo_objective_gradient(group, policy, cfg);
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += g[j] / static_cast<double>(cfg.prompts_per_step);
    }

    for (std::size_t j = 0; j < grad.size(); ++j) {
      if (!std::isfinite(grad[j])) {
        throw NumericError("grpo train: non-finite gradient at step " + std::to_string(step) +
                           ", parameter " + std::to_string(j));
      }
    }
    const auto before = policy.parameters();
    auto after = before;
    adam.step(after, grad, +1.0);
    std::vector<double> delta(before.size());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = after[j] - before[j];
    policy.apply_gradient(delta);

    const double n = static_cast<double>(n_samples);
    stats.mean_reward /= n;
    stats.mean_kl /= n;
    stats.clip_fraction /= n;
    report.steps.push_back(stats);
  }
  return report;
}

RewardFn make_reward_fn(const corpus::RatingFrequencyTable& table, const reward::RewardConfig& cfg,
                        reward::RewardPolicy policy) {
  return [table, cfg, policy](std::string_view output, double truth) {
    return reward::composite_reward(output, truth, table, cfg, policy);
  };
}

std::vector<CoTRecord> generate_cot_two_fold(const Policy& policy_a, const Policy& policy_b,
                                             const corpus::CorpusSplit& split,
                                             const corpus::RatingFrequencyTable& table,
                                             const reward::RewardConfig& reward_cfg,
                                             std::uint64_t seed, bool include_held_out) {
  if (split.train_folds.size() != split.train.size()) {
    throw Error("generate_cot_two_fold: train record without fold assignment");
  }
  const auto n_a = static_cast<std::size_t>(
      std::count(split.train_folds.begin(), split.train_folds.end(), corpus::Fold::kA));
  if (n_a == 0 || n_a == split.train.size()) {
    throw Error("generate_cot_two_fold: both folds must be non-empty");
  }

  std::vector<CoTRecord> out;
  auto emit = [&](const corpus::ReviewRecord& r, const std::string& part, const Policy& gen,
                  char gen_fold) {
    CoTRecord c;
    c.review = r;
    c.split = part;
    c.generator_fold = gen_fold;
    c.cot_text = gen.generate(r.review_text, nn::derive_seed(seed, r.ordinal));
    if (auto parsed = reward::parse_cot(c.cot_text)) c.predicted_rating = parsed->rating;
    if (table.has(r.rating)) {
      c.rewards = reward::composite_reward(c.cot_text, r.rating, table, reward_cfg);
    }
    out.push_back(std::move(c));
  };
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    if (split.train_folds[i] == corpus::Fold::kA) {
      emit(split.train[i], "train", policy_b, 'B');
    } else {
      emit(split.train[i], "train", policy_a, 'A');
    }
  }
  if (include_held_out) {
    for (const auto& r : split.validation) emit(r, "validation", policy_a, 'A');
    for (const auto& r : split.test) emit(r, "test", policy_a, 'A');
  }
  return out;
}

void write_cot_jsonl(const std::filesystem::path& path, const std::vector<CoTRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& c : records) {
    nlohmann::json j;
    j["user_id"] = c.review.user_id;
    j["item_id"] = c.review.item_id;
    j["rating"] = c.review.rating;
    j["ordinal"] = c.review.ordinal;
    j["split"] = c.split;
    j["review_text"] = c.review.review_text;
    j["cot_text"] = c.cot_text;
    j["predicted_rating"] = c.predicted_rating ? nlohmann::json(*c.predicted_rating) : nlohmann::json(nullptr);
    j["generator_fold"] = std::string(1, c.generator_fold);
    j["rewards"] = {{"format", c.rewards.format},
                    {"predict", c.rewards.predict},
                    {"quality", c.rewards.quality},
                    {"total", c.rewards.total}};
    if (c.review.timestamp) j["timestamp"] = *c.review.timestamp;
    out << j.dump() << '\n';
  }
}

std::vector<CoTRecord> read_cot_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<CoTRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON");
    CoTRecord c;
    c.review.user_id = j.at("user_id").get<std::string>();
    c.review.item_id = j.at("item_id").get<std::string>();
    c.review.rating = j.at("rating").get<double>();
    c.review.ordinal = j.at("ordinal").get<std::uint32_t>();
    c.review.review_text = j.at("review_text").get<std::string>();
    if (j.contains("timestamp")) c.review.timestamp = j["timestamp"].get<std::int64_t>();
    c.split = j.at("split").get<std::string>();
    c.cot_text = j.at("cot_text").get<std::string>();
    if (!j.at("predicted_rating").is_null()) c.predicted_rating = j["predicted_rating"].get<double>();
    c.generator_fold = j.at("generator_fold").get<std::string>().at(0);
    const auto& rw = j.at("rewards");
    c.rewards.format = rw.at("format").get<double>();
    c.rewards.predict = rw.at("predict").get<double>();
    c.rewards.quality = rw.at("quality").get<double>();
    c.rewards.total = rw.at("total").get<double>();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace reccot::grpo
