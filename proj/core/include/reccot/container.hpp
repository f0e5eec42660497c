#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reccot/nn/tensor.hpp"

// Little-endian binary container shared by the embedding cache and parameter
// checkpoints.
//
// Header (20 bytes):
//   magic "RCCT" | u16 version | u16 flags | u32 dim | u64 entry_count
// The flags word distinguishes payload kinds; record layouts are defined by
// the owning module (cache.hpp for embeddings, below for checkpoints).
namespace reccot::io {

inline constexpr std::array<char, 4> kMagic{'R', 'C', 'C', 'T'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint16_t kFlagEmbeddingStore = 0x0000;
inline constexpr std::uint16_t kFlagCheckpoint = 0x0001;
inline constexpr std::size_t kHeaderSize = 20;

struct ContainerHeader {
  std::uint16_t version = kFormatVersion;
  std::uint16_t flags = 0;
  std::uint32_t dim = 0;
  std::uint64_t entry_count = 0;
};

class BinaryWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<std::byte>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(std::string_view s);

  void header(const ContainerHeader& h);
  // Overwrites the entry count of a header written at offset 0.
  void patch_entry_count(std::uint64_t count);

  const std::vector<std::byte>& bytes() const { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

// Bounds-checked reader; every short read throws FormatError naming the byte
// offset where the data ran out.
class BinaryReader {
 public:
  explicit BinaryReader(std::span<const std::byte> data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string raw(std::size_t n);

  // Validates magic and version; throws FormatError otherwise.
  ContainerHeader header();

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what);

  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
// Writes to a sibling temporary and renames it into place, so readers never
// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);

// Parameter checkpoint: named tensors plus named string blobs (id maps,
// configuration). Record layout:
//   u8 kind (0 = tensor, 1 = blob) | u16 name length | name
//   tensor: u32 rows | u32 cols | rows*cols f64
//   blob:   u32 length | bytes
struct Checkpoint {
  std::uint32_t dim = 0;
  std::map<std::string, nn::Tensor2D> tensors;
  std::map<std::string, std::string> blobs;

  const nn::Tensor2D& tensor(const std::string& name) const;
  const std::string& blob(const std::string& name) const;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a, used for config and artifact fingerprints.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::span<const std::byte> data);
std::string hex64(std::uint64_t v);

}  // namespace reccot::io
