#include "reccot/cache.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <set>
#include <unistd.h>

#include <json.hpp>

#include "reccot/container.hpp"
#include "reccot/error.hpp"

namespace reccot::cache {
namespace {

Index& mutable_index(Index& users, Index& items, Side side) { return side == Side::kUser ? users : items; }

class LockFile {
 public:
  explicit LockFile(std::filesystem::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) {
        throw Error("cache is locked by another writer: " + path_.string());
      }
      throw Error("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    }
  }
  ~LockFile() {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

std::filesystem::path lock_path(const std::filesystem::path& p) { return p.string() + ".lock"; }

}  // namespace

bool CacheStore::put(Side side, const std::string& key, std::uint32_t ordinal, std::span<const float> embedding) {
  if (dim_ == 0) dim_ = static_cast<std::uint32_t>(embedding.size());
  if (embedding.size() != dim_) {
    throw ShapeError("cache entry for '" + key + "' has dimension " + std::to_string(embedding.size()) +
                     ", store dimension is " + std::to_string(dim_));
  }
  if (key.size() > 0xFFFF) throw Error("cache key longer than 65535 bytes");
  auto& list = mutable_index(users_, items_, side)[key];
  auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                             [](const CacheEntry& e, std::uint32_t o) { return e.ordinal < o; });
  CacheEntry entry{ordinal, {embedding.begin(), embedding.end()}};
  if (it != list.end() && it->ordinal == ordinal) {
    *it = std::move(entry);
    return true;
  }
  list.insert(it, std::move(entry));
  return false;
}

const std::vector<CacheEntry>* CacheStore::find(Side side, const std::string& key) const {
  const auto& idx = index(side);
  const auto it = idx.find(key);
  return it == idx.end() ? nullptr : &it->second;
}

std::size_t CacheStore::entry_count(Side side) const {
  std::size_t n = 0;
  for (const auto& [k, v] : index(side)) n += v.size();
  return n;
}

std::vector<std::byte> encode_store(const CacheStore& store) {
  io::BinaryWriter w;
  w.header(io::ContainerHeader{io::kFormatVersion, io::kFlagEmbeddingStore, store.dim(),
                               store.entry_count(Side::kUser) + store.entry_count(Side::kItem)});
  for (Side side : {Side::kUser, Side::kItem}) {
    for (const auto& [key, list] : store.index(side)) {
      for (const auto& e : list) {
        w.u8(static_cast<std::uint8_t>(side));
        w.u16(static_cast<std::uint16_t>(key.size()));
        w.raw(key);
        w.u32(e.ordinal);
        for (float f : e.embedding) w.f32(f);
      }
    }
  }
  return w.bytes();
}

CacheStore decode_store(std::span<const std::byte> bytes) {
  io::BinaryReader r(bytes);
  const auto h = r.header();
  if (h.flags != io::kFlagEmbeddingStore) {
    throw FormatError("not an embedding cache (flags " + std::to_string(h.flags) + ")");
  }
  CacheStore store(h.dim);
  std::vector<float> buf(h.dim);
  for (std::uint64_t n = 0; n < h.entry_count; ++n) {
    const std::size_t at = r.offset();
    const auto kind = r.u8();
    if (kind > 1) {
      throw FormatError("invalid record kind " + std::to_string(kind) + " at byte offset " + std::to_string(at));
    }
    const auto len = r.u16();
    const auto key = r.raw(len);
    const auto ordinal = r.u32();
    for (auto& f : buf) f = r.f32();
    store.put(static_cast<Side>(kind), key, ordinal, buf);
  }
  if (!r.at_end()) {
    throw FormatError("trailing bytes after last record at byte offset " + std::to_string(r.offset()));
  }
  return store;
}

CacheStore build_store(std::span<const encoder::EncodedReview> reviews, WriteReport* report) {
  WriteReport rep;
  CacheStore store(reviews.empty() ? 0 : static_cast<std::uint32_t>(reviews.front().embedding.size()));
  std::vector<float> buf;
  for (const auto& r : reviews) {
    buf.assign(r.embedding.begin(), r.embedding.end());
    const bool u = store.put(Side::kUser, r.user_id, r.ordinal, buf);
    const bool i = store.put(Side::kItem, r.item_id, r.ordinal, buf);
    if (u || i) ++rep.overwritten;
    ++rep.reviews;
  }
  rep.user_keys = store.index(Side::kUser).size();
  rep.item_keys = store.index(Side::kItem).size();
  rep.user_entries = store.entry_count(Side::kUser);
  rep.item_entries = store.entry_count(Side::kItem);
  if (report) *report = rep;
  return store;
}

void cache_write(const std::filesystem::path& path, const CacheStore& store) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  LockFile lock(lock_path(path));
  io::write_file_atomic(path, encode_store(store));
}

WriteReport cache_write(const std::filesystem::path& path, std::span<const encoder::EncodedReview> reviews) {
  WriteReport rep;
  const auto store = build_store(reviews, &rep);
  cache_write(path, store);
  return rep;
}

CacheStore cache_read(const std::filesystem::path& path) { return decode_store(io::read_file(path)); }

History retrieve_history(const CacheStore& store, Side side, const std::string& key, std::size_t k_max,
                         const std::optional<Exclusion>& exclude) {
  if (k_max == 0) throw Error("retrieve_history: k_max must be positive");
  History h;
  h.matrix = nn::Tensor2D(k_max, store.dim());
  h.mask.assign(k_max, false);
  const auto* list = store.find(side, key);
  if (!list) {
    h.miss = true;
    return h;
  }

  std::set<std::uint32_t> dropped;
  if (exclude) {
    const bool user_side = side == Side::kUser;
    const std::string& own = user_side ? exclude->user_id : exclude->item_id;
    if (own == key) {
      const auto* other = store.find(user_side ? Side::kItem : Side::kUser,
                                     user_side ? exclude->item_id : exclude->user_id);
      if (other) {
        for (const auto& e : *other) dropped.insert(e.ordinal);
      }
    }
  }

  std::vector<const CacheEntry*> kept;
  kept.reserve(list->size());
  for (const auto& e : *list) {
    if (!dropped.count(e.ordinal)) kept.push_back(&e);
  }
  const std::size_t n = std::min(k_max, kept.size());
  const std::size_t first = kept.size() - n;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& emb = kept[first + r]->embedding;
    auto row = h.matrix.row(r);
    for (std::size_t c = 0; c < emb.size(); ++c) row[c] = emb[c];
    h.mask[r] = true;
  }
  h.length = n;
  h.miss = n == 0;
  return h;
}

std::string inspect_json(const CacheStore& store, std::size_t sample_keys) {
  nlohmann::ordered_json j;
  j["dim"] = store.dim();
  j["version"] = io::kFormatVersion;
  for (Side side : {Side::kUser, Side::kItem}) {
    const auto& idx = store.index(side);
    nlohmann::ordered_json s;
    s["keys"] = idx.size();
    s["entries"] = store.entry_count(side);
    std::size_t max_len = 0;
    for (const auto& [k, v] : idx) max_len = std::max(max_len, v.size());
    s["max_history"] = max_len;
    s["mean_history"] = idx.empty() ? 0.0 : static_cast<double>(store.entry_count(side)) / idx.size();
    auto sample = nlohmann::ordered_json::array();
    for (const auto& [k, v] : idx) {
      if (sample.size() >= sample_keys) break;
      sample.push_back({{"key", k}, {"entries", v.size()}});
    }
    s["sample"] = sample;
    j[side == Side::kUser ? "users" : "items"] = s;
  }
  return j.dump(2);
}

}  // namespace reccot::cache
