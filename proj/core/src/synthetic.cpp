#include "reccot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "reccot/error.hpp"
#include "reccot/text.hpp"

namespace reccot::synthetic {

namespace {

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

std::size_t uniform_count(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(lo, std::max(lo, hi));
  return d(rng);
}

std::string cue_phrase(bool positive, const ReviewStyle& style, std::mt19937_64& rng) {
  std::bernoulli_distribution negate(style.negation_rate);
  std::bernoulli_distribution intensify(style.intensifier_rate);
  if (negate(rng)) {
    const auto& opposite = positive ? text::negative_words() : text::positive_words();
    return pick(text::negators(), rng) + " " + pick(opposite, rng);
  }
  const auto& words = positive ? text::positive_words() : text::negative_words();
  if (intensify(rng)) return pick(text::intensifiers(), rng) + " " + pick(words, rng);
  return pick(words, rng);
}

std::string item_description(double quality, std::mt19937_64& rng) {
  static const std::vector<std::string> high{"premium", "handcrafted", "flagship", "professional",
                                             "deluxe"};
  static const std::vector<std::string> mid{"standard", "everyday", "classic", "regular",
                                            "basic"};
  static const std::vector<std::string> low{"budget", "generic", "knockoff", "bargain",
                                            "clearance"};
  const auto& tier = quality > 0.4 ? high : (quality < -0.4 ? low : mid);
  std::string s = "a " + pick(tier, rng) + " " + pick(text::filler_words(), rng) + " listed as " +
                  pick(tier, rng) + " grade";
  return s;
}

std::vector<corpus::ReviewRecord> assign_timestamps(std::vector<corpus::ReviewRecord> records,
                                                    std::mt19937_64& rng) {
  std::shuffle(records.begin(), records.end(), rng);
  std::int64_t t = 1'400'000'000;
  std::uniform_int_distribution<std::int64_t> gap(60, 86'400);
  for (std::size_t i = 0; i < records.size(); ++i) {
    t += gap(rng);
    records[i].timestamp = t;
    records[i].ordinal = static_cast<std::uint32_t>(i);
  }
  return records;
}

std::string aspect_sentence(const std::vector<double>& importance, const std::vector<double>& quality,
                            const PlantedConfig& cfg, std::mt19937_64& rng) {
  const double top = *std::max_element(importance.begin(), importance.end());
  if (top <= 0.0) return {};
  std::string s;
  for (std::size_t k = 0; k < importance.size(); ++k) {
    std::bernoulli_distribution mention(cfg.aspect_rate * importance[k] / top);
    if (!mention(rng)) continue;
    s += " " + cue_phrase(quality[k] > 0.0, cfg.style, rng) + " " + pick(text::aspects()[k].terms, rng) + ".";
  }
  return s;
}

}  // namespace

double positive_cue_probability(int rating) {
  static constexpr std::array<double, 5> kProb{0.08, 0.3, 0.5, 0.7, 0.92};
  if (rating < 1 || rating > 5) throw Error("rating out of range");
  return kProb[static_cast<std::size_t>(rating - 1)];
}

std::string render_review(int rating, const ReviewStyle& style, std::mt19937_64& rng) {
  std::bernoulli_distribution positive(positive_cue_probability(rating));
  const std::size_t n_cues = uniform_count(style.min_cues, style.max_cues, rng);
  const std::size_t n_filler = uniform_count(style.min_filler, style.max_filler, rng);

  std::vector<std::string> chunks;
  for (std::size_t i = 0; i < n_cues; ++i) chunks.push_back(cue_phrase(positive(rng), style, rng));
  for (std::size_t i = 0; i < n_filler; ++i) chunks.push_back(pick(text::filler_words(), rng));
  std::shuffle(chunks.begin(), chunks.end(), rng);

  std::string out;
  std::bernoulli_distribution period(0.12);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (i > 0) out += period(rng) ? ". " : " ";
    out += chunks[i];
  }
  out += ".";
  return out;
}

SyntheticCorpus generate_planted(const PlantedConfig& cfg) {
  if (cfg.users == 0 || cfg.items == 0 || cfg.min_per_user == 0 || cfg.max_per_user > cfg.items) {
    throw Error("planted corpus config is degenerate");
  }
  if (cfg.aspect_rate < 0.0 || cfg.aspect_rate > 1.0) throw Error("aspect_rate must lie in [0, 1]");
  if (cfg.aspect_rate > 0.0 && cfg.latent_dim > text::aspects().size()) {
    throw Error("planted corpus has more latent dimensions than named aspects");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<double> user_bias(cfg.users), item_bias(cfg.items);
  std::vector<std::vector<double>> user_f(cfg.users, std::vector<double>(cfg.latent_dim));
  std::vector<std::vector<double>> item_f(cfg.items, std::vector<double>(cfg.latent_dim));
  const double per_dim = cfg.latent_dim > 0 ? std::sqrt(cfg.factor_sd / std::sqrt(static_cast<double>(cfg.latent_dim))) : 0.0;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    user_bias[u] = cfg.user_bias_sd * unit(rng);
    for (double& x : user_f[u]) x = per_dim * std::abs(unit(rng));
  }
  SyntheticCorpus out;
  for (std::size_t i = 0; i < cfg.items; ++i) {
    item_bias[i] = cfg.item_bias_sd * unit(rng);
    for (double& x : item_f[i]) x = per_dim * unit(rng);
    out.item_text["i" + std::to_string(i)] = item_description(item_bias[i], rng);
  }

  std::vector<std::size_t> all_items(cfg.items);
  std::iota(all_items.begin(), all_items.end(), 0);
  std::vector<corpus::ReviewRecord> records;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const std::size_t n = uniform_count(cfg.min_per_user, cfg.max_per_user, rng);
    std::shuffle(all_items.begin(), all_items.end(), rng);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = all_items[k];
      double affinity = 0.0;
      for (std::size_t f = 0; f < cfg.latent_dim; ++f) affinity += user_f[u][f] * item_f[i][f];
      const double latent = cfg.global_mean + user_bias[u] + item_bias[i] + affinity +
                            cfg.noise_sd * unit(rng);
      const int rating = static_cast<int>(std::clamp(std::round(latent), 1.0, 5.0));
      corpus::ReviewRecord r;
      r.user_id = "u" + std::to_string(u);
      r.item_id = "i" + std::to_string(i);
      r.rating = rating;
      r.review_text = render_review(rating, cfg.style, rng);
      if (cfg.aspect_rate > 0.0) r.review_text += aspect_sentence(user_f[u], item_f[i], cfg, rng);
      records.push_back(std::move(r));
    }
  }
  out.records = assign_timestamps(std::move(records), rng);
  return out;
}

SyntheticCorpus generate_long_tail(const LongTailConfig& cfg) {
  if (cfg.reviews == 0 || cfg.users == 0 || cfg.items == 0) throw Error("long-tail config is degenerate");
  std::mt19937_64 rng(cfg.seed);
  std::discrete_distribution<int> category(cfg.distribution.begin(), cfg.distribution.end());
  std::uniform_int_distribution<std::size_t> user(0, cfg.users - 1), item(0, cfg.items - 1);
  SyntheticCorpus out;
  std::vector<corpus::ReviewRecord> records;
  for (std::size_t n = 0; n < cfg.reviews; ++n) {
    const int rating = category(rng) + 1;
    corpus::ReviewRecord r;
    r.user_id = "u" + std::to_string(user(rng));
    r.item_id = "i" + std::to_string(item(rng));
    r.rating = rating;
    r.review_text = render_review(rating, cfg.style, rng);
    records.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < cfg.items; ++i) out.item_text["i" + std::to_string(i)] = item_description(0.0, rng);
  out.records = assign_timestamps(std::move(records), rng);
  return out;
}

void write_raw_jsonl(const std::filesystem::path& path, const SyntheticCorpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : corpus.records) {
    nlohmann::json j{{"user", r.user_id},
                     {"item", r.item_id},
                     {"rating", r.rating},
                     {"text", r.review_text},
                     {"timestamp", r.timestamp.value_or(0)}};
    out << j.dump() << '\n';
  }
}

void write_item_metadata(const std::filesystem::path& path, const SyntheticCorpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [item, text] : corpus.item_text) {
    out << nlohmann::json{{"item_id", item}, {"text", text}}.dump() << '\n';
  }
}

}  // namespace reccot::synthetic
