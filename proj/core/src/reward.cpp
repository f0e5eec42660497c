#include "reccot/reward.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "reccot/error.hpp"
#include "reccot/text.hpp"

namespace reccot::reward {

void RewardConfig::validate() const {
  if (!(lambda_under > 0 && mu_under > 0 && gamma_over > 0 && kappa_over > 0)) {
    throw Error("reward penalty constants must be strictly positive");
  }
  if (len_min == 0 || len_min >= len_max) throw Error("reward requires 0 < len_min < len_max");
  if (weights.format < 0 || weights.predict < 0 || weights.quality < 0) {
    throw Error("reward weights must be non-negative");
  }
}

std::optional<ParsedCot> parse_cot(std::string_view cot_text, const CotSchema& schema) {
  const auto j = nlohmann::json::parse(cot_text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto a = j.find(schema.analysis_key);
  auto r = j.find(schema.rating_key);
  if (a == j.end() || r == j.end() || !a->is_string() || !r->is_number()) return std::nullopt;
  return ParsedCot{a->get<std::string>(), r->get<double>()};
}

double format_reward(std::string_view cot_text, const CotSchema& schema) {
  return parse_cot(cot_text, schema) ? 1.0 : 0.0;
}

double base_reward(double error) { return std::exp(-error * error); }

double penalty(double error, const RewardConfig& cfg) {
  if (error < 0) return -cfg.lambda_under * (std::exp(cfg.mu_under * std::abs(error)) - 1.0);
  return -cfg.gamma_over * (1.0 - std::exp(-cfg.kappa_over * error) / (1.0 + error));
}

double predict_reward(double pred, double truth, double weight_f, const RewardConfig& cfg,
                      bool* flagged) {
  if (!std::isfinite(pred)) {
    if (flagged) *flagged = true;
    return cfg.floor_reward;
  }
  const double e = pred - truth;
  return weight_f * (base_reward(e) + penalty(e, cfg));
}

double quality_from_length(std::size_t length, const RewardConfig& cfg) {
  const double span = static_cast<double>(cfg.len_max) - static_cast<double>(cfg.len_min);
  const double q = (static_cast<double>(length) - static_cast<double>(cfg.len_min)) / span;
  return std::clamp(q, 0.0, 1.0);
}

double quality_reward(std::string_view cot_text, const RewardConfig& cfg) {
  return quality_from_length(text::code_point_count(cot_text), cfg);
}

double linear_reward_baseline(double pred, double truth) {
  return std::max(0.0, 1.0 - std::abs(pred - truth) / 4.0);
}

std::string to_string(RewardPolicy p) {
  return p == RewardPolicy::kFrequencyAware ? "frequency" : "linear";
}

RewardPolicy reward_policy_from_string(std::string_view s) {
  if (s == "frequency" || s == "reward") return RewardPolicy::kFrequencyAware;
  if (s == "linear" || s == "reward-linear") return RewardPolicy::kLinear;
  throw Error("unknown reward policy '" + std::string(s) + "'");
}

RewardBreakdown composite_reward(std::string_view cot_text, double truth,
                                 const corpus::RatingFrequencyTable& table,
                                 const RewardConfig& cfg, RewardPolicy policy,
                                 const CotSchema& schema) {
  const double weight_f = table.weight(truth);
  RewardBreakdown b;
  const auto parsed = parse_cot(cot_text, schema);
  b.format = parsed ? 1.0 : 0.0;
  if (!parsed) {
    b.predict = cfg.floor_reward;
    b.flagged = true;
    b.quality = quality_reward(cot_text, cfg);
  } else {
    if (policy == RewardPolicy::kLinear) {
      if (std::isfinite(parsed->rating)) {
        b.predict = linear_reward_baseline(parsed->rating, truth);
      } else {
        b.predict = cfg.floor_reward;
        b.flagged = true;
      }
    } else {
      b.predict = predict_reward(parsed->rating, truth, weight_f, cfg, &b.flagged);
    }
    b.quality = quality_reward(parsed->analysis, cfg);
  }
  b.total = cfg.weights.format * b.format + cfg.weights.predict * b.predict +
            cfg.weights.quality * b.quality;
  return b;
}

}  // namespace reccot::reward
