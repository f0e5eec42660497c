#include "reccot/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "reccot/error.hpp"

namespace reccot::corpus {

using nlohmann::json;

bool is_category(double rating) noexcept {
  return std::find(kCategories.begin(), kCategories.end(), rating) != kCategories.end() &&
         rating == std::floor(rating);
}

namespace {

std::optional<std::string> string_field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return std::nullopt;
}

std::optional<double> number_field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

IngestResult ingest_stream(std::istream& in, const FieldSchema& schema) {
  IngestResult result;
  std::string line;
  while (std::getline(in, line)) {
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    ++result.lines;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      ++result.skipped;
      continue;
    }
    auto user = string_field(obj, schema.user);
    auto item = string_field(obj, schema.item);
    auto rating = number_field(obj, schema.rating);
    auto text = string_field(obj, schema.text);
    if (!user || !item || !rating || !text || user->empty() || item->empty() ||
        !is_category(*rating)) {
      ++result.skipped;
      continue;
    }
    ReviewRecord rec{*user, *item, *rating, *text, std::nullopt,
                     static_cast<std::uint32_t>(result.records.size())};
    if (auto ts = obj.find(schema.timestamp); ts != obj.end() && ts->is_number_integer()) {
      rec.timestamp = ts->get<std::int64_t>();
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

IngestResult ingest(const std::filesystem::path& path, const FieldSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read review file " + path.string());
  return ingest_stream(in, schema);
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

std::string clean_text(std::string_view raw, std::size_t min_length) {
  std::string s(raw);
  replace_all(s, "&lt;", "<");
  replace_all(s, "&gt;", ">");
  replace_all(s, "&quot;", "\"");
  replace_all(s, "&#34;", "\"");
  replace_all(s, "&amp;", "&");

  // Tags become whitespace; control bytes become whitespace; ASCII lowercased.
  std::string stripped;
  stripped.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (c == '<') {
      const std::size_t close = s.find('>', i);
      if (close != std::string::npos && close - i <= 64) {
        stripped.push_back(' ');
        i = close;
        continue;
      }
    }
    if (c < 0x20 || c == 0x7F) {
      stripped.push_back(' ');
    } else {
      stripped.push_back(static_cast<char>(std::tolower(c)));
    }
  }

  // Rejoin tokens, dropping bare "br" and trailing "br" glued to a word.
  std::istringstream tokens(stripped);
  std::string token;
  std::string out;
  while (tokens >> token) {
    if (token == "br") continue;
    if (token.size() > 2 && token.ends_with("br") && token != "abbr") {
      token.resize(token.size() - 2);
    }
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  if (utf8_length(out) < min_length) return {};
  return out;
}

std::vector<ReviewRecord> clean_records(std::vector<ReviewRecord> records, std::size_t min_length,
                                        std::size_t* dropped) {
  std::vector<ReviewRecord> kept;
  kept.reserve(records.size());
  std::size_t n_dropped = 0;
  for (auto& r : records) {
    r.review_text = clean_text(r.review_text, min_length);
    if (r.review_text.empty()) {
      ++n_dropped;
      continue;
    }
    kept.push_back(std::move(r));
  }
  if (dropped) *dropped = n_dropped;
  return kept;
}

std::vector<ReviewRecord> filter_k_core(const std::vector<ReviewRecord>& records, std::size_t k) {
  if (k == 0) throw Error("filter_k_core: k must be at least 1");
  std::vector<bool> alive(records.size(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, std::size_t> users;
    std::unordered_map<std::string, std::size_t> items;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!alive[i]) continue;
      ++users[records[i].user_id];
      ++items[records[i].item_id];
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (alive[i] && (users[records[i].user_id] < k || items[records[i].item_id] < k)) {
        alive[i] = false;
        changed = true;
      }
    }
  }
  std::vector<ReviewRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (alive[i]) out.push_back(records[i]);
  }
  return out;
}

void assign_recency_ordinals(std::vector<ReviewRecord>& records) {
  static constexpr auto kOldest = std::numeric_limits<std::int64_t>::min();
  std::stable_sort(records.begin(), records.end(), [](const ReviewRecord& a, const ReviewRecord& b) {
    return a.timestamp.value_or(kOldest) < b.timestamp.value_or(kOldest);
  });
  for (std::size_t i = 0; i < records.size(); ++i) records[i].ordinal = static_cast<std::uint32_t>(i);
}

std::string to_string(FrequencyMode mode) {
  return mode == FrequencyMode::kInverse ? "inverse" : "raw";
}

FrequencyMode frequency_mode_from_string(std::string_view s) {
  if (s == "inverse") return FrequencyMode::kInverse;
  if (s == "raw") return FrequencyMode::kRaw;
  throw Error("unknown frequency_mode '" + std::string(s) + "' (expected inverse or raw)");
}

RatingFrequencyTable::RatingFrequencyTable(std::map<int, std::size_t> counts, FrequencyMode mode)
    : counts_(std::move(counts)), mode_(mode) {
  std::size_t nonzero = 0;
  for (const auto& [cat, n] : counts_) {
    total_ += n;
    if (n > 0) ++nonzero;
  }
  if (total_ == 0) throw Error("frequency table needs at least one record");
  for (const auto& [cat, n] : counts_) {
    if (n == 0) continue;
    const double t = static_cast<double>(total_);
    weights_[cat] = mode_ == FrequencyMode::kInverse
                        ? t / (static_cast<double>(nonzero) * static_cast<double>(n))
                        : static_cast<double>(n) / t;
  }
}

bool RatingFrequencyTable::has(double rating) const {
  return is_category(rating) && weights_.contains(static_cast<int>(rating));
}

double RatingFrequencyTable::weight(double rating) const {
  if (!has(rating)) {
    throw Error("rating category " + std::to_string(rating) + " has no frequency weight");
  }
  return weights_.at(static_cast<int>(rating));
}

std::string RatingFrequencyTable::to_json() const {
  json j;
  j["mode"] = to_string(mode_);
  j["total"] = total_;
  json counts = json::object();
  json weights = json::object();
  for (int c : kCategories) {
    const std::string key = std::to_string(c);
    auto it = counts_.find(c);
    counts[key] = it == counts_.end() ? 0 : it->second;
    if (auto w = weights_.find(c); w != weights_.end()) weights[key] = w->second;
  }
  j["counts"] = counts;
  j["weights"] = weights;
  return j.dump(2);
}

RatingFrequencyTable RatingFrequencyTable::from_json(std::string_view text) {
  const json j = json::parse(text);
  std::map<int, std::size_t> counts;
  for (const auto& [key, value] : j.at("counts").items()) {
    counts[std::stoi(key)] = value.get<std::size_t>();
  }
  return RatingFrequencyTable(std::move(counts),
                              frequency_mode_from_string(j.value("mode", std::string("inverse"))));
}

RatingFrequencyTable build_frequency_table(const std::vector<ReviewRecord>& records,
                                           FrequencyMode mode) {
  if (records.empty()) throw Error("build_frequency_table: empty record list");
  std::map<int, std::size_t> counts;
  for (int c : kCategories) counts[c] = 0;
  for (const auto& r : records) {
    if (!is_category(r.rating)) throw Error("record rating is not a category value");
    ++counts[static_cast<int>(r.rating)];
  }
  return RatingFrequencyTable(std::move(counts), mode);
}

char fold_name(Fold f) { return f == Fold::kA ? 'A' : 'B'; }

CorpusSplit split(const std::vector<ReviewRecord>& records, const SplitRatios& ratios,
                  std::uint64_t seed) {
  if (records.size() < kMinSplitRecords) {
    throw Error("split needs at least " + std::to_string(kMinSplitRecords) + " records, got " +
                std::to_string(records.size()));
  }
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw Error("split ratios must be positive and sum to 1");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const double n = static_cast<double>(records.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * ratios.train));
  const auto n_val = static_cast<std::size_t>(std::llround(n * ratios.validation));

  CorpusSplit out;
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  // Keep recency order inside each part.
  std::sort(train_idx.begin(), train_idx.end());
  std::vector<std::size_t> val_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  std::sort(val_idx.begin(), val_idx.end());
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  std::sort(test_idx.begin(), test_idx.end());

  for (auto i : train_idx) out.train.push_back(records[i]);
  for (auto i : val_idx) out.validation.push_back(records[i]);
  for (auto i : test_idx) out.test.push_back(records[i]);

  std::vector<std::size_t> fold_order(out.train.size());
  std::iota(fold_order.begin(), fold_order.end(), 0);
  std::shuffle(fold_order.begin(), fold_order.end(), rng);
  out.train_folds.assign(out.train.size(), Fold::kB);
  for (std::size_t j = 0; j < fold_order.size() / 2; ++j) out.train_folds[fold_order[j]] = Fold::kA;
  return out;
}

namespace {

json record_json(const ReviewRecord& r) {
  json j;
  j["user_id"] = r.user_id;
  j["item_id"] = r.item_id;
  j["rating"] = r.rating;
  j["review_text"] = r.review_text;
  j["timestamp"] = r.timestamp ? json(*r.timestamp) : json(nullptr);
  j["ordinal"] = r.ordinal;
  return j;
}

ReviewRecord record_from_json(const json& j) {
  ReviewRecord r;
  r.user_id = j.at("user_id").get<std::string>();
  r.item_id = j.at("item_id").get<std::string>();
  r.rating = j.at("rating").get<double>();
  r.review_text = j.at("review_text").get<std::string>();
  if (j.contains("timestamp") && !j["timestamp"].is_null()) r.timestamp = j["timestamp"].get<std::int64_t>();
  r.ordinal = j.at("ordinal").get<std::uint32_t>();
  return r;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON");
    }
    fn(j);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<ReviewRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << record_json(r).dump() << '\n';
}

std::vector<ReviewRecord> read_corpus_jsonl(const std::filesystem::path& path) {
  std::vector<ReviewRecord> records;
  for_each_json_line(path, [&](const json& j) { records.push_back(record_from_json(j)); });
  return records;
}

void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& s) {
  auto out = open_out(path);
  auto emit = [&](const ReviewRecord& r, const char* part, const json& fold) {
    json j = record_json(r);
    j["split"] = part;
    j["fold"] = fold;
    out << j.dump() << '\n';
  };
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    emit(s.train[i], "train", std::string(1, fold_name(s.train_folds[i])));
  }
  for (const auto& r : s.validation) emit(r, "validation", nullptr);
  for (const auto& r : s.test) emit(r, "test", nullptr);
}

CorpusSplit read_split_manifest(const std::filesystem::path& path) {
  CorpusSplit s;
  for_each_json_line(path, [&](const json& j) {
    const auto part = j.at("split").get<std::string>();
    ReviewRecord r = record_from_json(j);
    if (part == "train") {
      if (!j.contains("fold") || !j["fold"].is_string()) {
        throw FormatError("train record " + std::to_string(r.ordinal) + " has no fold assignment");
      }
      const auto fold = j["fold"].get<std::string>();
      if (fold != "A" && fold != "B") throw FormatError("unknown fold '" + fold + "'");
      s.train.push_back(std::move(r));
      s.train_folds.push_back(fold == "A" ? Fold::kA : Fold::kB);
    } else if (part == "validation") {
      s.validation.push_back(std::move(r));
    } else if (part == "test") {
      s.test.push_back(std::move(r));
    } else {
      throw FormatError("unknown split '" + part + "'");
    }
  });
  return s;
}

std::map<std::string, std::string> read_item_metadata(const std::filesystem::path& path) {
  std::map<std::string, std::string> meta;
  for_each_json_line(path, [&](const json& j) {
    meta[j.at("item_id").get<std::string>()] = j.at("text").get<std::string>();
  });
  return meta;
}

}  // namespace reccot::corpus
