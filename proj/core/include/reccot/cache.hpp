#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reccot/encoder.hpp"
#include "reccot/nn/tensor.hpp"

// Persistent store of per-review embeddings indexed by user and by item.
//
// File layout after the shared container header (flags = 0, dim = d,
// entry_count = number of records):
//   u8 kind (0 = user, 1 = item) | u16 key length | key bytes |
//   u32 review ordinal | d x f32 embedding
// Records are grouped by kind, then sorted by key and ordinal, so equal
// stores serialize to identical bytes.
namespace reccot::cache {

enum class Side : std::uint8_t { kUser = 0, kItem = 1 };

struct CacheEntry {
  std::uint32_t ordinal = 0;
  std::vector<float> embedding;
  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

using Index = std::map<std::string, std::vector<CacheEntry>>;

class CacheStore {
 public:
  explicit CacheStore(std::uint32_t dim = 0) : dim_(dim) {}

  std::uint32_t dim() const { return dim_; }
  // Inserts or overwrites the (key, ordinal) entry; returns true on overwrite.
  bool put(Side side, const std::string& key, std::uint32_t ordinal, std::span<const float> embedding);

  const Index& index(Side side) const { return side == Side::kUser ? users_ : items_; }
  const std::vector<CacheEntry>* find(Side side, const std::string& key) const;
  std::size_t entry_count(Side side) const;

  friend bool operator==(const CacheStore&, const CacheStore&) = default;

 private:
  std::uint32_t dim_;
  Index users_;
  Index items_;
};

std::vector<std::byte> encode_store(const CacheStore& store);
CacheStore decode_store(std::span<const std::byte> bytes);

struct WriteReport {
  std::size_t reviews = 0;
  std::size_t user_keys = 0;
  std::size_t item_keys = 0;
  std::size_t user_entries = 0;
  std::size_t item_entries = 0;
  std::size_t overwritten = 0;
};

// Builds a store from encoded reviews, indexing each under its user and its
// item. Throws when embedding sizes disagree.
CacheStore build_store(std::span<const encoder::EncodedReview> reviews, WriteReport* report = nullptr);

// Writes atomically under an exclusive `<path>.lock`; a second concurrent
// writer fails instead of interleaving.
WriteReport cache_write(const std::filesystem::path& path, std::span<const encoder::EncodedReview> reviews);
void cache_write(const std::filesystem::path& path, const CacheStore& store);
CacheStore cache_read(const std::filesystem::path& path);

struct Exclusion {
  std::string user_id;
  std::string item_id;
};

struct History {
  nn::Tensor2D matrix;      // k_max x d, rows past `length` are zero
  std::vector<bool> mask;   // true for real rows
  std::size_t length = 0;
  bool miss = false;        // no usable rows: unknown key, or all excluded
};

// The min(m, k_max) most recent embeddings for `key`, oldest first. With an
// exclusion, interactions shared by that user and item are dropped so a
// training pair never sees its own review.
History retrieve_history(const CacheStore& store, Side side, const std::string& key, std::size_t k_max,
                         const std::optional<Exclusion>& exclude = std::nullopt);

// Summary used by the cache-inspect command.
std::string inspect_json(const CacheStore& store, std::size_t sample_keys = 5);

}  // namespace reccot::cache
