#include "reccot/config.hpp"

#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "reccot/container.hpp"
#include "reccot/error.hpp"

namespace reccot::config {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoCot: return "no_cot";
    case Variant::kNoCotItem: return "no_cot_item";
    case Variant::kLinearReward: return "linear_reward";
  }
  return "full";
}

Variant variant_from_string(std::string_view s) {
  if (s == "full") return Variant::kFull;
  if (s == "no_cot") return Variant::kNoCot;
  if (s == "no_cot_item") return Variant::kNoCotItem;
  if (s == "linear_reward") return Variant::kLinearReward;
  throw Error("unknown variant '" + std::string(s) + "' (expected full, no_cot, no_cot_item or linear_reward)");
}

std::string report_label(Variant v) {
  switch (v) {
    case Variant::kFull: return "RecCoT";
    case Variant::kNoCot: return "RecCoT(w/o CoT)";
    case Variant::kNoCotItem: return "RecCoT(w/o CoT)+item";
    case Variant::kLinearReward: return "RecCoT(reward-linear)";
  }
  return "RecCoT";
}

bool uses_cot(Variant v) { return v == Variant::kFull || v == Variant::kLinearReward; }
bool uses_item_text(Variant v) { return v == Variant::kNoCotItem; }

reward::RewardPolicy reward_policy(Variant v) {
  return v == Variant::kLinearReward ? reward::RewardPolicy::kLinear : reward::RewardPolicy::kFrequencyAware;
}

namespace {

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::filesystem::path&)>;

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw Error("config key '" + key + "': cannot parse '" + v + "' as a number");
  if constexpr (std::is_unsigned_v<T>) {
    if (v.find('-') != std::string::npos) throw Error("config key '" + key + "' must be non-negative");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base) {
  if (v.empty()) return {};
  std::filesystem::path p(v);
  return p.is_absolute() ? p : base / p;
}

#define RECCOT_NUM(key, field, T) \
  {key, [](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) { c.field = parse_number<T>(key, v); }}
#define RECCOT_BOOL(key, field) \
  {key, [](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) { c.field = parse_bool(key, v); }}
#define RECCOT_STR(key, field) \
  {key, [](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) { c.field = v; }}
#define RECCOT_PATH(key, field) \
  {key, [](ExperimentConfig& c, const std::string& v, const std::filesystem::path& b) { c.field = resolve(v, b); }}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      RECCOT_STR("experiment.dataset", dataset),
      {"experiment.variant",
       [](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) { c.variant = variant_from_string(v); }},
      RECCOT_NUM("experiment.seed", seed, std::uint64_t),
      RECCOT_BOOL("experiment.item_side_text", item_side_text),

      RECCOT_PATH("paths.raw", paths.raw),
      RECCOT_PATH("paths.item_metadata", paths.item_metadata),
      RECCOT_PATH("paths.work_dir", paths.work_dir),

      RECCOT_STR("corpus.field_user", corpus.schema.user),
      RECCOT_STR("corpus.field_item", corpus.schema.item),
      RECCOT_STR("corpus.field_rating", corpus.schema.rating),
      RECCOT_STR("corpus.field_text", corpus.schema.text),
      RECCOT_STR("corpus.field_timestamp", corpus.schema.timestamp),
      RECCOT_NUM("corpus.k_core", corpus.k_core, std::size_t),
      RECCOT_NUM("corpus.min_text_length", corpus.min_text_length, std::size_t),
      RECCOT_NUM("corpus.train_ratio", corpus.ratios.train, double),
      RECCOT_NUM("corpus.validation_ratio", corpus.ratios.validation, double),
      RECCOT_NUM("corpus.test_ratio", corpus.ratios.test, double),
      {"corpus.seed", [](ExperimentConfig& c, const std::string& v,
                         const std::filesystem::path&) { c.corpus.seed = parse_number<std::uint64_t>("corpus.seed", v); }},
      {"corpus.frequency_mode", [](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) {
         c.corpus.frequency_mode = corpus::frequency_mode_from_string(v);
       }},

      RECCOT_NUM("reward.lambda", reward.lambda_under, double),
      RECCOT_NUM("reward.mu", reward.mu_under, double),
      RECCOT_NUM("reward.gamma", reward.gamma_over, double),
      RECCOT_NUM("reward.kappa", reward.kappa_over, double),
      RECCOT_NUM("reward.len_min", reward.len_min, std::size_t),
      RECCOT_NUM("reward.len_max", reward.len_max, std::size_t),
      RECCOT_NUM("reward.weight_format", reward.weights.format, double),
      RECCOT_NUM("reward.weight_predict", reward.weights.predict, double),
      RECCOT_NUM("reward.weight_quality", reward.weights.quality, double),
      RECCOT_NUM("reward.floor", reward.floor_reward, double),

      RECCOT_NUM("grpo.group_size", grpo.group_size, std::size_t),
      RECCOT_NUM("grpo.clip_eps", grpo.clip_eps, double),
      RECCOT_NUM("grpo.kl_beta", grpo.kl_beta, double),
      RECCOT_NUM("grpo.learning_rate", grpo.learning_rate, double),
      RECCOT_NUM("grpo.steps", grpo.steps, std::size_t),
      RECCOT_NUM("grpo.prompts_per_step", grpo.prompts_per_step, std::size_t),
      RECCOT_NUM("grpo.target_length", cot_target_length, std::size_t),

      RECCOT_NUM("encoder.dim", encoder.dim, std::size_t),
      RECCOT_NUM("encoder.hidden", encoder.hidden, std::size_t),
      RECCOT_NUM("encoder.buckets", encoder.buckets, std::uint32_t),
      RECCOT_NUM("encoder.dropout", encoder.dropout, double),
      RECCOT_NUM("encoder.learning_rate", encoder.learning_rate, double),
      RECCOT_NUM("encoder.batch_size", encoder.batch_size, std::size_t),
      RECCOT_NUM("encoder.epochs", encoder.epochs, std::size_t),
      RECCOT_NUM("encoder.init_scale", encoder.init_scale, double),

      RECCOT_NUM("cache.k_max", recsys.k_max, std::size_t),

      RECCOT_NUM("recsys.layers", recsys.layers, std::size_t),
      RECCOT_NUM("recsys.hidden", recsys.hidden, std::size_t),
      RECCOT_NUM("recsys.learning_rate", recsys.learning_rate, double),
      RECCOT_NUM("recsys.batch_size", recsys.batch_size, std::size_t),
      RECCOT_NUM("recsys.epochs", recsys.epochs, std::size_t),
      RECCOT_NUM("recsys.margin", recsys.margin, double),
      RECCOT_NUM("recsys.contrastive_weight", recsys.contrastive_weight, double),
      RECCOT_NUM("recsys.dropout", recsys.dropout, double),
      RECCOT_BOOL("recsys.reject_accidental_positives", recsys.reject_accidental_positives),
      RECCOT_NUM("recsys.init_scale", recsys.init_scale, double),
  };
  return table;
}

#undef RECCOT_NUM
#undef RECCOT_BOOL
#undef RECCOT_STR
#undef RECCOT_PATH

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  grpo.seed = nn::derive_seed(s, 1);
  encoder.seed = nn::derive_seed(s, 2);
  recsys.seed = nn::derive_seed(s, 3);
}

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw Error("experiment.dataset must not be empty");
  if (paths.raw.empty()) throw Error("paths.raw must be set");
  if (paths.work_dir.empty()) throw Error("paths.work_dir must be set");
  if (corpus.k_core == 0) throw Error("corpus.k_core must be positive");
  const auto& r = corpus.ratios;
  if (r.train <= 0.0 || r.validation < 0.0 || r.test <= 0.0 ||
      std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    throw Error("corpus split ratios must be non-negative, with positive train and test, and sum to 1");
  }
  reward.validate();
  grpo.validate();
  encoder.validate();
  recsys.validate();
}

std::string ExperimentConfig::section_json(std::string_view section) const {
  nlohmann::ordered_json j;
  if (section == "experiment") {
    j = {{"dataset", dataset}, {"variant", to_string(variant)}, {"seed", seed}, {"item_side_text", item_side_text}};
  } else if (section == "paths") {
    j = {{"raw", paths.raw.string()}, {"item_metadata", paths.item_metadata.string()},
         {"work_dir", paths.work_dir.string()}};
  } else if (section == "corpus") {
    const auto& s = corpus.schema;
    j = {{"fields", {s.user, s.item, s.rating, s.text, s.timestamp}},
         {"k_core", corpus.k_core},
         {"min_text_length", corpus.min_text_length},
         {"ratios", {corpus.ratios.train, corpus.ratios.validation, corpus.ratios.test}},
         {"seed", split_seed()},
         {"frequency_mode", corpus::to_string(corpus.frequency_mode)}};
  } else if (section == "reward") {
    j = {{"lambda", reward.lambda_under},  {"mu", reward.mu_under},
         {"gamma", reward.gamma_over},     {"kappa", reward.kappa_over},
         {"len_min", reward.len_min},      {"len_max", reward.len_max},
         {"weights", {reward.weights.format, reward.weights.predict, reward.weights.quality}},
         {"floor", reward.floor_reward},   {"policy", reward::to_string(reward_policy(variant))}};
  } else if (section == "grpo") {
    j = {{"group_size", grpo.group_size}, {"clip_eps", grpo.clip_eps},   {"kl_beta", grpo.kl_beta},
         {"learning_rate", grpo.learning_rate}, {"steps", grpo.steps}, {"prompts_per_step", grpo.prompts_per_step},
         {"fd_step", grpo.fd_step},       {"kl_ratio_cap", grpo.kl_ratio_cap}, {"target_length", cot_target_length}};
  } else if (section == "encoder") {
    j = {{"dim", encoder.dim},         {"hidden", encoder.hidden},
         {"buckets", encoder.buckets}, {"dropout", encoder.dropout},
         {"learning_rate", encoder.learning_rate}, {"batch_size", encoder.batch_size},
         {"epochs", encoder.epochs},   {"init_scale", encoder.init_scale},
         {"uses_cot", uses_cot(variant)}, {"item_text", append_item_text()}};
  } else if (section == "cache") {
    j = {{"k_max", recsys.k_max}};
  } else if (section == "recsys") {
    j = {{"layers", recsys.layers},
         {"hidden", recsys.hidden},
         {"learning_rate", recsys.learning_rate},
         {"batch_size", recsys.batch_size},
         {"epochs", recsys.epochs},
         {"margin", recsys.margin},
         {"contrastive_weight", recsys.contrastive_weight},
         {"dropout", recsys.dropout},
         {"reject_accidental_positives", recsys.reject_accidental_positives},
         {"init_scale", recsys.init_scale}};
  } else {
    throw Error("unknown config section '" + std::string(section) + "'");
  }
  return j.dump();
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.paths.work_dir = base_dir / "work";
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error("config key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw Error("unknown config key '" + full + "'");
      it->second(cfg, unquote(value.data()), base_dir);
    }
  }
  cfg.set_seed(cfg.seed);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  std::filesystem::path base = std::filesystem::absolute(path).parent_path();
  if (const char* root = std::getenv("RECCOT_DATA_DIR"); root && *root) base = root;
  return parse_config(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()), base);
}

}  // namespace reccot::config
