#include "reccot/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "reccot/cache.hpp"
#include "reccot/container.hpp"
#include "reccot/encoder.hpp"
#include "reccot/error.hpp"
#include "reccot/grpo.hpp"
#include "reccot/recsys.hpp"
#include "reccot/text.hpp"
#include "reccot/toy_policy.hpp"

namespace reccot::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

const std::vector<std::pair<Stage, const char*>>& stage_names() {
  static const std::vector<std::pair<Stage, const char*>> names = {
      {Stage::kIngest, "ingest"},
      {Stage::kStats, "stats"},
      {Stage::kGrpoTrain, "grpo-train"},
      {Stage::kCotGenerate, "cot-generate"},
      {Stage::kEncoderTrain, "encoder-train"},
      {Stage::kEmbed, "embed"},
      {Stage::kCacheInspect, "cache-inspect"},
      {Stage::kRecTrain, "rec-train"},
      {Stage::kRecEval, "rec-eval"},
      {Stage::kRewardCompare, "reward-compare"},
      {Stage::kAnalyze, "analyze"},
  };
  return names;
}

std::string read_text(const fs::path& p) {
  const auto bytes = io::read_file(p);
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

void write_text(const fs::path& p, const std::string& s) {
  io::write_file_atomic(p, std::as_bytes(std::span(s.data(), s.size())));
}

std::string file_hash(const fs::path& p) { return io::hex64(io::fnv1a64(io::read_file(p))); }

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<recsys::Interaction> interactions(const std::vector<corpus::ReviewRecord>& records) {
  std::vector<recsys::Interaction> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.user_id, r.item_id, r.rating, r.ordinal});
  return out;
}

ojson metrics_json(const recsys::Metrics& m) { return {{"MSE", m.mse}, {"MAE", m.mae}, {"count", m.count}}; }

ojson buckets_json(const std::vector<recsys::BucketMetrics>& buckets) {
  auto arr = ojson::array();
  for (const auto& b : buckets) {
    ojson j = {{"bucket", b.label}, {"interactions", b.interactions}, {"users", b.users}};
    if (b.interactions > 0) {
      j["MSE"] = b.mse;
      j["MAE"] = b.mae;
    } else {
      j["MSE"] = nullptr;
      j["MAE"] = nullptr;
    }
    arr.push_back(j);
  }
  return arr;
}

ojson engagement_json(const recsys::EngagementReport& rep) {
  return {{"user_count_edges", rep.count_edges},
          {"review_length_edges", rep.length_edges},
          {"by_user_count", buckets_json(rep.by_user_count)},
          {"by_review_length", buckets_json(rep.by_review_length)}};
}

std::string engagement_table(const recsys::EngagementReport& rep) {
  std::ostringstream out;
  auto block = [&](const char* title, const std::vector<recsys::BucketMetrics>& rows) {
    out << title << '\n';
    for (const auto& b : rows) {
      char line[160];
      std::snprintf(line, sizeof line, "  %-12s n=%-6zu users=%-6zu MSE=%s\n", b.label.c_str(), b.interactions,
                    b.users, b.interactions ? fixed(b.mse, 4).c_str() : "-");
      out << line;
    }
  };
  block("by user interaction count:", rep.by_user_count);
  block("by review length (characters):", rep.by_review_length);
  return out.str();
}

// Texts fed to the encoder for each review under the configured variant.
struct EncoderTexts {
  std::map<std::uint32_t, std::string> cot;
  std::map<std::string, std::string> item_text;
  bool use_cot = false;
  bool use_item = false;

  std::string first(const corpus::ReviewRecord& r) const {
    if (!use_cot) return {};
    const auto it = cot.find(r.ordinal);
    if (it == cot.end()) throw Error("no CoT for review ordinal " + std::to_string(r.ordinal));
    return it->second;
  }
  std::string second(const corpus::ReviewRecord& r) const {
    if (!use_item) return r.review_text;
    const auto it = item_text.find(r.item_id);
    return it == item_text.end() ? r.review_text : r.review_text + " " + it->second;
  }
};

}  // namespace

std::string to_string(Stage s) {
  for (const auto& [st, name] : stage_names()) {
    if (st == s) return name;
  }
  return "unknown";
}

Stage stage_from_string(std::string_view s) {
  for (const auto& [st, name] : stage_names()) {
    if (s == name) return st;
  }
  throw Error("unknown stage '" + std::string(s) + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = [] {
    std::vector<Stage> v;
    for (const auto& [st, name] : stage_names()) v.push_back(st);
    return v;
  }();
  return stages;
}

std::string stage_graph() {
  return "Stage graph:\n"
         "  ingest -> stats -> grpo-train -> cot-generate -> encoder-train -> embed\n"
         "         -> rec-train -> rec-eval -> analyze\n"
         "  embed -> cache-inspect\n"
         "  reward-compare: grpo-train .. rec-eval for both reward policies\n"
         "  Variants no_cot and no_cot_item skip grpo-train and cot-generate.\n";
}

std::vector<Stage> chain_for(config::Variant variant) {
  if (config::uses_cot(variant)) {
    return {Stage::kIngest,       Stage::kStats, Stage::kGrpoTrain, Stage::kCotGenerate, Stage::kEncoderTrain,
            Stage::kEmbed,        Stage::kRecTrain, Stage::kRecEval, Stage::kAnalyze};
  }
  return {Stage::kIngest, Stage::kStats,   Stage::kEncoderTrain, Stage::kEmbed,
          Stage::kRecTrain, Stage::kRecEval, Stage::kAnalyze};
}

Pipeline::Pipeline(config::ExperimentConfig cfg, RunOptions opts) : cfg_(std::move(cfg)), opts_(std::move(opts)) {
  cfg_.validate();
}

fs::path Pipeline::stage_dir(Stage stage) const {
  const fs::path& work = cfg_.paths.work_dir;
  switch (stage) {
    case Stage::kIngest:
    case Stage::kStats:
    case Stage::kRewardCompare:
      return work / to_string(stage);
    default:
      return work / config::to_string(cfg_.variant) / to_string(stage);
  }
}

fs::path Pipeline::metrics_path() const { return stage_dir(Stage::kRecEval) / "metrics.json"; }
fs::path Pipeline::cache_path() const { return stage_dir(Stage::kEmbed) / "cache.rcct"; }
fs::path Pipeline::comparison_path() const { return stage_dir(Stage::kRewardCompare) / "reward_comparison.csv"; }

fs::path Pipeline::encoder_checkpoint_path() const {
  return opts_.encoder_checkpoint ? *opts_.encoder_checkpoint : stage_dir(Stage::kEncoderTrain) / "encoder.ckpt";
}

void Pipeline::log(const std::string& line) const {
  if (opts_.log) *opts_.log << "[" << config::to_string(cfg_.variant) << "] " << line << '\n';
}

std::string Pipeline::fingerprint(Stage stage) const {
  std::vector<std::string> sections;
  switch (stage) {
    case Stage::kIngest:
    case Stage::kStats:
      sections = {"corpus"};
      break;
    case Stage::kGrpoTrain:
    case Stage::kCotGenerate:
      sections = {"experiment", "reward", "grpo"};
      break;
    case Stage::kEncoderTrain:
    case Stage::kEmbed:
      sections = {"experiment", "encoder"};
      break;
    case Stage::kCacheInspect:
      sections = {"experiment"};
      break;
    case Stage::kRecTrain:
    case Stage::kRecEval:
    case Stage::kAnalyze:
      sections = {"experiment", "encoder", "cache", "recsys"};
      break;
    case Stage::kRewardCompare:
      sections = {"experiment", "corpus", "reward", "grpo", "encoder", "cache", "recsys"};
      break;
  }
  std::string canon = to_string(stage);
  for (const auto& s : sections) canon += "|" + cfg_.section_json(s);
  if (stage == Stage::kIngest) canon += "|" + cfg_.paths.raw.string();
  if (stage == Stage::kEmbed && opts_.encoder_checkpoint) canon += "|" + opts_.encoder_checkpoint->string();
  if (cfg_.append_item_text() && (stage == Stage::kEncoderTrain || stage == Stage::kEmbed)) {
    canon += "|" + cfg_.paths.item_metadata.string();
  }
  return io::hex64(io::fnv1a64(canon));
}

std::vector<Artifact> Pipeline::inputs(Stage stage) const {
  const fs::path split = stage_dir(Stage::kIngest) / "split.jsonl";
  const fs::path freq = stage_dir(Stage::kStats) / "frequency.json";
  const fs::path cot = stage_dir(Stage::kCotGenerate) / "cot.jsonl";
  const fs::path model = stage_dir(Stage::kRecTrain) / "model.ckpt";
  std::vector<Artifact> in;
  auto encoder_texts = [&] {
    if (config::uses_cot(cfg_.variant)) in.push_back({cot, Stage::kCotGenerate});
    if (cfg_.append_item_text()) in.push_back({cfg_.paths.item_metadata, std::nullopt});
  };
  switch (stage) {
    case Stage::kIngest:
      in.push_back({cfg_.paths.raw, std::nullopt});
      break;
    case Stage::kStats:
      in.push_back({split, Stage::kIngest});
      break;
    case Stage::kGrpoTrain:
    case Stage::kRewardCompare:
      in = {{split, Stage::kIngest}, {freq, Stage::kStats}};
      break;
    case Stage::kCotGenerate:
      in = {{split, Stage::kIngest},
            {freq, Stage::kStats},
            {stage_dir(Stage::kGrpoTrain) / "policy_A.ckpt", Stage::kGrpoTrain},
            {stage_dir(Stage::kGrpoTrain) / "policy_B.ckpt", Stage::kGrpoTrain}};
      break;
    case Stage::kEncoderTrain:
      in.push_back({split, Stage::kIngest});
      encoder_texts();
      break;
    case Stage::kEmbed:
      in.push_back({split, Stage::kIngest});
      in.push_back({encoder_checkpoint_path(), Stage::kEncoderTrain});
      encoder_texts();
      break;
    case Stage::kCacheInspect:
      in.push_back({cache_path(), Stage::kEmbed});
      break;
    case Stage::kRecTrain:
      in = {{split, Stage::kIngest}, {cache_path(), Stage::kEmbed}};
      break;
    case Stage::kRecEval:
    case Stage::kAnalyze:
      in = {{split, Stage::kIngest}, {cache_path(), Stage::kEmbed}, {model, Stage::kRecTrain}};
      break;
  }
  return in;
}

void Pipeline::require(Stage stage) const {
  for (const auto& a : inputs(stage)) {
    if (a.path.empty()) {
      throw Error(to_string(stage) + ": a required input path is not configured" +
                  (cfg_.append_item_text() ? " (item-side text needs paths.item_metadata)" : ""));
    }
    if (!fs::exists(a.path)) {
      std::string msg = to_string(stage) + ": missing upstream artifact " + a.path.string();
      if (a.producer) msg += " (run `" + to_string(*a.producer) + "` first)";
      throw Error(msg);
    }
  }
}

void Pipeline::check_overwrite(Stage stage) const {
  const fs::path manifest = stage_dir(stage) / "manifest.json";
  if (!fs::exists(manifest) || opts_.force) return;
  const auto j = nlohmann::json::parse(read_text(manifest));
  const std::string previous = j.value("config_hash", "");
  if (previous != fingerprint(stage)) {
    throw Error(to_string(stage) + ": configuration changed since the artifacts in " + stage_dir(stage).string() +
                " were written; pass --force to overwrite them");
  }
}

void Pipeline::write_manifest(Stage stage, const std::vector<fs::path>& outputs) const {
  const fs::path& work = cfg_.paths.work_dir;
  ojson j;
  j["stage"] = to_string(stage);
  j["variant"] = config::to_string(cfg_.variant);
  j["config_hash"] = fingerprint(stage);
  ojson in = ojson::object();
  for (const auto& a : inputs(stage)) in[fs::proximate(a.path, work).generic_string()] = file_hash(a.path);
  j["inputs"] = in;
  ojson out = ojson::object();
  for (const auto& p : outputs) out[fs::proximate(p, work).generic_string()] = file_hash(p);
  j["outputs"] = out;
  write_text(stage_dir(stage) / "manifest.json", j.dump(2) + "\n");
}

void Pipeline::run(Stage stage) {
  check_overwrite(stage);
  require(stage);
  const fs::path dir = stage_dir(stage);
  fs::create_directories(dir);
  log("stage " + to_string(stage));
  switch (stage) {
    case Stage::kIngest: ingest(); break;
    case Stage::kStats: stats(); break;
    case Stage::kGrpoTrain: grpo_train(); break;
    case Stage::kCotGenerate: cot_generate(); break;
    case Stage::kEncoderTrain: encoder_train(); break;
    case Stage::kEmbed: embed(); break;
    case Stage::kCacheInspect: cache_inspect(); break;
    case Stage::kRecTrain: rec_train(); break;
    case Stage::kRecEval: rec_eval(); break;
    case Stage::kRewardCompare: reward_compare(); break;
    case Stage::kAnalyze: analyze(); break;
  }
  std::vector<fs::path> outputs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") outputs.push_back(e.path());
  }
  std::sort(outputs.begin(), outputs.end());
  write_manifest(stage, outputs);
}

fs::path Pipeline::run_all() {
  for (Stage s : chain_for(cfg_.variant)) run(s);
  return metrics_path();
}

void Pipeline::ingest() {
  const auto raw = corpus::ingest(cfg_.paths.raw, cfg_.corpus.schema);
  std::size_t dropped = 0;
  auto cleaned = corpus::clean_records(raw.records, cfg_.corpus.min_text_length, &dropped);
  auto core = corpus::filter_k_core(cleaned, cfg_.corpus.k_core);
  corpus::assign_recency_ordinals(core);
  const auto sp = corpus::split(core, cfg_.corpus.ratios, cfg_.split_seed());
  const fs::path dir = stage_dir(Stage::kIngest);
  corpus::write_corpus_jsonl(dir / "corpus.jsonl", core);
  corpus::write_split_manifest(dir / "split.jsonl", sp);

  std::set<std::string> users;
  std::set<std::string> items;
  for (const auto& r : core) {
    users.insert(r.user_id);
    items.insert(r.item_id);
  }
  ojson s = {{"lines", raw.lines},
             {"skipped_malformed", raw.skipped},
             {"dropped_short_text", dropped},
             {"after_k_core", core.size()},
             {"users", users.size()},
             {"items", items.size()},
             {"train", sp.train.size()},
             {"validation", sp.validation.size()},
             {"test", sp.test.size()}};
  write_text(dir / "summary.json", s.dump(2) + "\n");
  log("ingested " + std::to_string(core.size()) + " reviews (" + std::to_string(raw.skipped) + " malformed lines)");
}

void Pipeline::stats() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto table = corpus::build_frequency_table(sp.train, cfg_.corpus.frequency_mode);
  const fs::path dir = stage_dir(Stage::kStats);
  write_text(dir / "frequency.json", table.to_json() + "\n");

  std::set<std::string> users;
  std::set<std::string> items;
  double mean = 0.0;
  for (const auto& r : sp.train) {
    users.insert(r.user_id);
    items.insert(r.item_id);
    mean += r.rating;
  }
  if (!sp.train.empty()) mean /= static_cast<double>(sp.train.size());
  ojson hist = ojson::object();
  ojson weights = ojson::object();
  for (const auto& [c, n] : table.counts()) hist[std::to_string(c)] = n;
  for (const auto& [c, w] : table.weights()) weights[std::to_string(c)] = w;
  ojson s = {{"train_reviews", sp.train.size()},
             {"validation_reviews", sp.validation.size()},
             {"test_reviews", sp.test.size()},
             {"train_users", users.size()},
             {"train_items", items.size()},
             {"mean_rating", mean},
             {"rating_counts", hist},
             {"frequency_mode", corpus::to_string(table.mode())},
             {"frequency_weights", weights}};
  write_text(dir / "stats.json", s.dump(2) + "\n");
}

void Pipeline::grpo_train() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto table = corpus::RatingFrequencyTable::from_json(read_text(stage_dir(Stage::kStats) / "frequency.json"));
  const auto reward_fn = grpo::make_reward_fn(table, cfg_.reward, config::reward_policy(cfg_.variant));
  const fs::path dir = stage_dir(Stage::kGrpoTrain);
  for (corpus::Fold fold : {corpus::Fold::kA, corpus::Fold::kB}) {
    std::vector<grpo::Prompt> prompts;
    for (std::size_t k = 0; k < sp.train.size(); ++k) {
      if (sp.train_folds[k] == fold) prompts.push_back({sp.train[k].review_text, sp.train[k].rating});
    }
    if (prompts.empty()) throw Error(std::string("grpo-train: fold ") + corpus::fold_name(fold) + " is empty");
    grpo::ToyTemplatePolicy policy(grpo::ToyTemplatePolicy::Options{cfg_.cot_target_length, true});
    const grpo::ToyTemplatePolicy ref = policy;
    grpo::GrpoConfig g = cfg_.grpo;
    g.seed = nn::derive_seed(cfg_.grpo.seed, fold == corpus::Fold::kA ? 0 : 1);
    const auto report = grpo::train(policy, ref, prompts, reward_fn, g);
    const std::string tag(1, corpus::fold_name(fold));
    io::save_checkpoint(dir / ("policy_" + tag + ".ckpt"), policy.to_checkpoint());
    write_text(dir / ("trace_" + tag + ".csv"), report.to_csv());
    const auto& last = report.steps.back();
    log("policy " + tag + ": final mean reward " + fixed(last.mean_reward, 4));
  }
}

void Pipeline::cot_generate() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto table = corpus::RatingFrequencyTable::from_json(read_text(stage_dir(Stage::kStats) / "frequency.json"));
  const fs::path gdir = stage_dir(Stage::kGrpoTrain);
  const auto pa = grpo::ToyTemplatePolicy::from_checkpoint(io::load_checkpoint(gdir / "policy_A.ckpt"));
  const auto pb = grpo::ToyTemplatePolicy::from_checkpoint(io::load_checkpoint(gdir / "policy_B.ckpt"));
  const auto records =
      grpo::generate_cot_two_fold(pa, pb, sp, table, cfg_.reward, nn::derive_seed(cfg_.grpo.seed, 2), true);
  const fs::path dir = stage_dir(Stage::kCotGenerate);
  grpo::write_cot_jsonl(dir / "cot.jsonl", records);

  // Prediction quality of the generators: per generator fold on train, and on held-out reviews.
  struct Acc {
    std::size_t n = 0, parsed = 0, minority = 0, minority_hits = 0;
    double abs_err = 0.0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& c : records) {
    const std::string key = c.split == "train" ? std::string("train_by_") + c.generator_fold : "held_out";
    Acc& a = acc[key];
    ++a.n;
    if (c.predicted_rating) {
      ++a.parsed;
      a.abs_err += std::abs(*c.predicted_rating - c.review.rating);
    }
    if (c.review.rating <= 3.0) {
      ++a.minority;
      if (c.predicted_rating && *c.predicted_rating < 3.5) ++a.minority_hits;
    }
  }
  ojson s = ojson::object();
  std::vector<double> fold_mae;
  for (const auto& [key, a] : acc) {
    const double mae = a.parsed ? a.abs_err / static_cast<double>(a.parsed) : 0.0;
    if (key.rfind("train_by_", 0) == 0) fold_mae.push_back(mae);
    s[key] = {{"reviews", a.n},
              {"parsed", a.parsed},
              {"MAE", mae},
              {"minority_reviews", a.minority},
              {"minority_prediction_rate",
               a.minority ? static_cast<double>(a.minority_hits) / static_cast<double>(a.minority) : 0.0}};
  }
  double cross = 0.0;
  for (double m : fold_mae) cross += m;
  s["cross_fold_MAE"] = fold_mae.empty() ? 0.0 : cross / static_cast<double>(fold_mae.size());
  write_text(dir / "summary.json", s.dump(2) + "\n");
}

namespace {

EncoderTexts load_encoder_texts(const config::ExperimentConfig& cfg, const fs::path& cot_path) {
  EncoderTexts t;
  t.use_cot = config::uses_cot(cfg.variant);
  t.use_item = cfg.append_item_text();
  if (t.use_cot) {
    for (const auto& c : grpo::read_cot_jsonl(cot_path)) t.cot[c.review.ordinal] = c.cot_text;
  }
  if (t.use_item) t.item_text = corpus::read_item_metadata(cfg.paths.item_metadata);
  return t;
}

std::vector<encoder::EncoderSample> encoder_samples(const std::vector<corpus::ReviewRecord>& records,
                                                    const EncoderTexts& texts) {
  std::vector<encoder::EncoderSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({texts.first(r), texts.second(r), r.rating});
  return out;
}

}  // namespace

void Pipeline::encoder_train() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto texts = load_encoder_texts(cfg_, stage_dir(Stage::kCotGenerate) / "cot.jsonl");
  const auto result =
      encoder::train_encoder(encoder_samples(sp.train, texts), encoder_samples(sp.validation, texts), cfg_.encoder);
  const fs::path dir = stage_dir(Stage::kEncoderTrain);
  io::save_checkpoint(dir / "encoder.ckpt", result.encoder.to_checkpoint());
  std::string csv = "epoch,train_mse,validation_mse\n";
  for (const auto& e : result.trace) {
    csv += std::to_string(e.epoch) + "," + fixed(e.train_mse, 8) + "," + fixed(e.validation_mse, 8) + "\n";
  }
  write_text(dir / "trace.csv", csv);
  if (!result.trace.empty()) log("encoder validation MSE " + fixed(result.trace.back().validation_mse, 4));
}

void Pipeline::embed() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto texts = load_encoder_texts(cfg_, stage_dir(Stage::kCotGenerate) / "cot.jsonl");
  const auto enc = encoder::TextEncoder::from_checkpoint(io::load_checkpoint(encoder_checkpoint_path()));
  std::vector<encoder::EmbedInput> inputs;
  inputs.reserve(sp.train.size());
  for (const auto& r : sp.train) {
    encoder::EmbedInput in{r, texts.first(r)};
    in.review.review_text = texts.second(r);
    inputs.push_back(std::move(in));
  }
  const auto result = encoder::embed_corpus(inputs, enc);
  const auto report = cache::cache_write(cache_path(), result.encoded);
  ojson s = {{"reviews", inputs.size()},
             {"embedded", result.encoded.size()},
             {"failures", result.failures},
             {"dim", enc.config().dim},
             {"user_keys", report.user_keys},
             {"item_keys", report.item_keys},
             {"overwritten", report.overwritten}};
  write_text(stage_dir(Stage::kEmbed) / "summary.json", s.dump(2) + "\n");
  log("cached " + std::to_string(result.encoded.size()) + " embeddings, " + std::to_string(result.failures) +
      " failures");
}

void Pipeline::cache_inspect() {
  const auto store = cache::cache_read(cache_path());
  const std::string j = cache::inspect_json(store);
  write_text(stage_dir(Stage::kCacheInspect) / "inspect.json", j + "\n");
  if (opts_.log) *opts_.log << j << '\n';
}

void Pipeline::rec_train() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto store = cache::cache_read(cache_path());
  const auto result = recsys::train_recsys(interactions(sp.train), interactions(sp.validation), store, cfg_.recsys);
  const fs::path dir = stage_dir(Stage::kRecTrain);
  io::save_checkpoint(dir / "model.ckpt", result.model.to_checkpoint());
  std::string csv = "epoch,train_loss,validation_mse,validation_mae\n";
  for (const auto& e : result.trace) {
    csv += std::to_string(e.epoch) + "," + fixed(e.train_loss, 8) + "," + fixed(e.validation_mse, 8) + "," +
           fixed(e.validation_mae, 8) + "\n";
  }
  write_text(dir / "trace.csv", csv);
  if (!result.trace.empty()) log("recsys validation MSE " + fixed(result.trace.back().validation_mse, 4));
}

namespace {

struct Scored {
  std::vector<recsys::Interaction> test;
  std::vector<double> predictions;
  recsys::EngagementReport engagement;
  double train_mean = 0.0;
};

Scored score_test(const corpus::CorpusSplit& sp, const cache::CacheStore& store, const recsys::RecModel& model) {
  Scored s;
  s.test = interactions(sp.test);
  s.predictions = recsys::predict_all(model, store, s.test);
  std::map<std::string, std::size_t> user_counts;
  for (const auto& r : sp.train) {
    ++user_counts[r.user_id];
    s.train_mean += r.rating;
  }
  s.train_mean /= static_cast<double>(std::max<std::size_t>(1, sp.train.size()));
  std::vector<recsys::EvalRecord> records;
  records.reserve(sp.test.size());
  for (std::size_t k = 0; k < sp.test.size(); ++k) {
    records.push_back(
        {sp.test[k].user_id, sp.test[k].rating, s.predictions[k], text::code_point_count(sp.test[k].review_text)});
  }
  s.engagement = recsys::analyze_by_engagement(records, user_counts);
  return s;
}

}  // namespace

void Pipeline::rec_eval() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto store = cache::cache_read(cache_path());
  const auto model = recsys::RecModel::from_checkpoint(io::load_checkpoint(stage_dir(Stage::kRecTrain) / "model.ckpt"));
  if (sp.test.empty()) throw Error("rec-eval: the test split is empty");
  const auto s = score_test(sp, store, model);
  std::vector<double> truth;
  truth.reserve(s.test.size());
  for (const auto& x : s.test) truth.push_back(x.rating);
  const auto metrics = recsys::compute_metrics(s.predictions, truth);
  const std::vector<double> constant(truth.size(), s.train_mean);
  const auto baseline = recsys::compute_metrics(constant, truth);

  ojson j;
  j["dataset"] = cfg_.dataset;
  j["variant"] = config::to_string(cfg_.variant);
  j["label"] = config::report_label(cfg_.variant);
  j["seed"] = cfg_.seed;
  j["test"] = metrics_json(metrics);
  j["global_mean_baseline"] = metrics_json(baseline);
  j["global_mean_baseline"]["mean"] = s.train_mean;
  j["engagement"] = engagement_json(s.engagement);
  const fs::path dir = stage_dir(Stage::kRecEval);
  write_text(dir / "metrics.json", j.dump(2) + "\n");

  std::string csv = "user_id,item_id,truth,prediction\n";
  for (std::size_t k = 0; k < s.test.size(); ++k) {
    csv += s.test[k].user_id + "," + s.test[k].item_id + "," + fixed(s.test[k].rating, 1) + "," +
           fixed(s.predictions[k], 6) + "\n";
  }
  write_text(dir / "predictions.csv", csv);
  log(config::report_label(cfg_.variant) + " test MSE " + fixed(metrics.mse, 4) + " MAE " + fixed(metrics.mae, 4) +
      " (global mean MSE " + fixed(baseline.mse, 4) + ")");
}

void Pipeline::analyze() {
  const auto sp = corpus::read_split_manifest(stage_dir(Stage::kIngest) / "split.jsonl");
  const auto store = cache::cache_read(cache_path());
  const auto model = recsys::RecModel::from_checkpoint(io::load_checkpoint(stage_dir(Stage::kRecTrain) / "model.ckpt"));
  const auto s = score_test(sp, store, model);
  ojson j = engagement_json(s.engagement);
  j["label"] = config::report_label(cfg_.variant);
  write_text(stage_dir(Stage::kAnalyze) / "engagement.json", j.dump(2) + "\n");
  if (opts_.log) *opts_.log << engagement_table(s.engagement);
}

void Pipeline::reward_compare() {
  std::string csv = "dataset,reward,cot_mae,pretrain_mse,rec_mse\n";
  for (config::Variant v : {config::Variant::kFull, config::Variant::kLinearReward}) {
    config::ExperimentConfig c = cfg_;
    c.variant = v;
    Pipeline sub(c, opts_);
    for (Stage s : chain_for(v)) {
      if (s == Stage::kIngest || s == Stage::kStats || s == Stage::kAnalyze) continue;
      sub.run(s);
    }
    const auto cot = nlohmann::json::parse(read_text(sub.stage_dir(Stage::kCotGenerate) / "summary.json"));
    const auto metrics = nlohmann::json::parse(read_text(sub.metrics_path()));
    const auto trace = read_text(sub.stage_dir(Stage::kEncoderTrain) / "trace.csv");
    // Last field of the final trace row.
    std::string last_line = trace.substr(0, trace.size() - 1);
    last_line = last_line.substr(last_line.rfind('\n') + 1);
    const std::string pretrain = last_line.substr(last_line.rfind(',') + 1);
    csv += cfg_.dataset + "," + (v == config::Variant::kFull ? "reward" : "reward-linear") + "," +
           fixed(cot.at("cross_fold_MAE").get<double>(), 4) + "," + fixed(std::stod(pretrain), 4) + "," +
           fixed(metrics.at("test").at("MSE").get<double>(), 4) + "\n";
  }
  write_text(comparison_path(), csv);
  if (opts_.log) *opts_.log << csv;
}

}  // namespace reccot::pipeline
