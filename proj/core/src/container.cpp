#include "reccot/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "reccot/error.hpp"

namespace reccot::io {

void BinaryWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void BinaryWriter::raw(std::string_view s) {
  for (char c : s) bytes_.push_back(static_cast<std::byte>(c));
}

void BinaryWriter::header(const ContainerHeader& h) {
  raw(std::string_view(kMagic.data(), kMagic.size()));
  u16(h.version);
  u16(h.flags);
  u32(h.dim);
  u64(h.entry_count);
}

void BinaryWriter::patch_entry_count(std::uint64_t count) {
  if (bytes_.size() < kHeaderSize) throw Error("patch_entry_count: no header written");
  for (int i = 0; i < 8; ++i) {
    bytes_[12 + static_cast<std::size_t>(i)] = static_cast<std::byte>(count >> (8 * i));
  }
}

void BinaryReader::need(std::size_t n, const char* what) {
  if (data_.size() - pos_ < n) {
    throw FormatError("truncated file: needed " + std::to_string(n) + " bytes for " + what +
                      " at byte offset " + std::to_string(pos_) + ", " +
                      std::to_string(data_.size() - pos_) + " available");
  }
}

std::uint8_t BinaryReader::u8() {
  need(1, "u8");
  return static_cast<std::uint8_t>(data_[pos_++]);
}
std::uint16_t BinaryReader::u16() {
  need(2, "u16");
  std::uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_++]) << (8 * i));
  return v;
}
std::uint32_t BinaryReader::u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}
std::uint64_t BinaryReader::u64() {
  need(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}
float BinaryReader::f32() { return std::bit_cast<float>(u32()); }
double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::raw(std::size_t n) {
  need(n, "bytes");
  std::string s(n, '\0');
  std::memcpy(s.data(), data_.data() + pos_, n);
  pos_ += n;
  return s;
}

ContainerHeader BinaryReader::header() {
  need(kHeaderSize, "header");
  const std::string magic = raw(4);
  if (magic != std::string_view(kMagic.data(), kMagic.size())) {
    throw FormatError("bad magic: not an RCCT container");
  }
  ContainerHeader h;
  h.version = u16();
  if (h.version != kFormatVersion) {
    throw FormatError("unsupported container version " + std::to_string(h.version));
  }
  h.flags = u16();
  h.dim = u32();
  h.entry_count = u64();
  return h;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(buf.size());
  std::memcpy(out.data(), buf.data(), buf.size());
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

const nn::Tensor2D& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::blob(const std::string& name) const {
  auto it = blobs.find(name);
  if (it == blobs.end()) throw FormatError("checkpoint has no blob '" + name + "'");
  return it->second;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  BinaryWriter w;
  w.header({kFormatVersion, kFlagCheckpoint, ckpt.dim, ckpt.tensors.size() + ckpt.blobs.size()});
  for (const auto& [name, t] : ckpt.tensors) {
    w.u8(0);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (double v : t.values()) w.f64(v);
  }
  for (const auto& [name, b] : ckpt.blobs) {
    w.u8(1);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(b.size()));
    w.raw(b);
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  BinaryReader r(bytes);
  const ContainerHeader h = r.header();
  if (h.flags != kFlagCheckpoint) throw FormatError("container is not a parameter checkpoint");
  Checkpoint ckpt;
  ckpt.dim = h.dim;
  for (std::uint64_t e = 0; e < h.entry_count; ++e) {
    const std::uint8_t kind = r.u8();
    const std::string name = r.raw(r.u16());
    if (kind == 0) {
      const std::uint32_t rows = r.u32();
      const std::uint32_t cols = r.u32();
      nn::Tensor2D t(rows, cols);
      for (double& v : t.values()) v = r.f64();
      ckpt.tensors.emplace(name, std::move(t));
    } else if (kind == 1) {
      ckpt.blobs.emplace(name, r.raw(r.u32()));
    } else {
      throw FormatError("unknown checkpoint record kind " + std::to_string(kind) +
                        " at byte offset " + std::to_string(r.offset() - 1));
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint records");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::span<const std::byte> data) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace reccot::io
