#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reccot::corpus {

inline constexpr std::array<int, 5> kCategories{1, 2, 3, 4, 5};

// True when `rating` is exactly one of the five category values.
bool is_category(double rating) noexcept;

struct ReviewRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::string review_text;
  std::optional<std::int64_t> timestamp;
  // Interaction id within the filtered corpus, increasing with recency.
  std::uint32_t ordinal = 0;
};

// Field names of the raw JSONL input.
struct FieldSchema {
  std::string user = "user";
  std::string item = "item";
  std::string rating = "rating";
  std::string text = "text";
  std::string timestamp = "timestamp";
};

struct IngestResult {
  std::vector<ReviewRecord> records;
  std::size_t lines = 0;
  std::size_t skipped = 0;
};

// Reads one JSON object per line. Blank lines are ignored; malformed lines,
// missing fields and ratings outside {1..5} are skipped and counted.
IngestResult ingest(const std::filesystem::path& path, const FieldSchema& schema = {});
IngestResult ingest_stream(std::istream& in, const FieldSchema& schema = {});

inline constexpr std::size_t kMinCleanLength = 10;

// Lowercases, strips markup (HTML tags and the glued "br" remnants of
// stripped line breaks), drops control characters and collapses whitespace.
// Returns "" when fewer than `min_length` characters survive.
std::string clean_text(std::string_view raw, std::size_t min_length = kMinCleanLength);

// Cleans every record's text and drops the ones that come back empty.
std::vector<ReviewRecord> clean_records(std::vector<ReviewRecord> records,
                                        std::size_t min_length = kMinCleanLength,
                                        std::size_t* dropped = nullptr);

// Iteratively removes users and items with fewer than k interactions until
// every survivor has at least k. Relative order is preserved.
std::vector<ReviewRecord> filter_k_core(const std::vector<ReviewRecord>& records, std::size_t k);

// Stable-sorts by timestamp (records without one count as oldest) and
// renumbers ordinals 0..n-1 in that order.
void assign_recency_ordinals(std::vector<ReviewRecord>& records);

enum class FrequencyMode { kInverse, kRaw };

std::string to_string(FrequencyMode mode);
FrequencyMode frequency_mode_from_string(std::string_view s);

// Per-category counts and the frequency weights f.
//   inverse: f(c) = total / (K * count(c)), K = number of nonzero categories
//   raw:     f(c) = count(c) / total
// Categories with a zero count have no weight.
class RatingFrequencyTable {
 public:
  RatingFrequencyTable() = default;
  RatingFrequencyTable(std::map<int, std::size_t> counts, FrequencyMode mode);

  const std::map<int, std::size_t>& counts() const { return counts_; }
  const std::map<int, double>& weights() const { return weights_; }
  std::size_t total() const { return total_; }
  FrequencyMode mode() const { return mode_; }

  bool has(double rating) const;
  // Throws when the category has no weight.
  double weight(double rating) const;

  std::string to_json() const;
  static RatingFrequencyTable from_json(std::string_view json);

 private:
  std::map<int, std::size_t> counts_;
  std::map<int, double> weights_;
  std::size_t total_ = 0;
  FrequencyMode mode_ = FrequencyMode::kInverse;
};

RatingFrequencyTable build_frequency_table(const std::vector<ReviewRecord>& records,
                                           FrequencyMode mode = FrequencyMode::kInverse);

enum class Fold : std::uint8_t { kA, kB };
char fold_name(Fold f);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  std::vector<ReviewRecord> train;
  std::vector<ReviewRecord> validation;
  std::vector<ReviewRecord> test;
  // Parallel to `train`.
  std::vector<Fold> train_folds;
};

inline constexpr std::size_t kMinSplitRecords = 10;

// Random split by interaction, deterministic in `seed`. The train part is
// then shuffled again and halved into folds A and B.
CorpusSplit split(const std::vector<ReviewRecord>& records, const SplitRatios& ratios,
                  std::uint64_t seed);

// JSONL persistence for the filtered corpus and the split manifest.
void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<ReviewRecord>& records);
std::vector<ReviewRecord> read_corpus_jsonl(const std::filesystem::path& path);
void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& split);
CorpusSplit read_split_manifest(const std::filesystem::path& path);

// Item metadata text keyed by item id ({"item_id": ..., "text": ...} per line).
std::map<std::string, std::string> read_item_metadata(const std::filesystem::path& path);

}  // namespace reccot::corpus
