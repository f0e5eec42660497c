#include <doctest.h>

#include <cstring>
#include <fstream>

#include "reccot/container.hpp"
#include "reccot/error.hpp"
#include "scratch.hpp"

using namespace reccot;
using namespace reccot::io;

TEST_CASE("header round trip and field layout") {
  BinaryWriter w;
  w.header({kFormatVersion, kFlagCheckpoint, 768, 42});
  REQUIRE(w.bytes().size() == kHeaderSize);
  CHECK(std::memcmp(w.bytes().data(), "RCCT", 4) == 0);
  // Little-endian dim at offset 8.
  CHECK(static_cast<unsigned>(w.bytes()[8]) == (768 & 0xFF));
  CHECK(static_cast<unsigned>(w.bytes()[9]) == (768 >> 8));

  BinaryReader r(w.bytes());
  const auto h = r.header();
  CHECK(h.version == kFormatVersion);
  CHECK(h.flags == kFlagCheckpoint);
  CHECK(h.dim == 768);
  CHECK(h.entry_count == 42);
  CHECK(r.at_end());
}

TEST_CASE("patch_entry_count rewrites the count in place") {
  BinaryWriter w;
  w.header({kFormatVersion, 0, 4, 0});
  w.u32(7);
  w.patch_entry_count(99);
  BinaryReader r(w.bytes());
  CHECK(r.header().entry_count == 99);
  CHECK(r.u32() == 7);
}

TEST_CASE("reader rejects bad magic, future versions and short input") {
  BinaryWriter w;
  w.header({kFormatVersion, 0, 4, 0});
  auto bytes = w.bytes();

  auto flipped = bytes;
  flipped[0] = std::byte{'X'};
  CHECK_THROWS_AS(BinaryReader(flipped).header(), FormatError);

  auto future = bytes;
  future[4] = std::byte{2};
  CHECK_THROWS_AS(BinaryReader(future).header(), FormatError);

  std::vector<std::byte> shorter(bytes.begin(), bytes.begin() + 10);
  CHECK_THROWS_AS(BinaryReader(shorter).header(), FormatError);
}

TEST_CASE("short reads name the byte offset") {
  BinaryWriter w;
  w.u16(1);
  BinaryReader r(w.bytes());
  r.u8();
  try {
    r.u32();
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset 1") != std::string::npos);
  }
}

TEST_CASE("scalar encodings round trip exactly") {
  BinaryWriter w;
  w.u8(200);
  w.u16(65000);
  w.u32(4000000000u);
  w.u64(0x0123456789abcdefULL);
  w.f32(-1.5f);
  w.f64(3.141592653589793);
  w.raw("key");
  BinaryReader r(w.bytes());
  CHECK(r.u8() == 200);
  CHECK(r.u16() == 65000);
  CHECK(r.u32() == 4000000000u);
  CHECK(r.u64() == 0x0123456789abcdefULL);
  CHECK(r.f32() == -1.5f);
  CHECK(r.f64() == 3.141592653589793);
  CHECK(r.raw(3) == "key");
  CHECK(r.at_end());
}

TEST_CASE("checkpoint round trip through a file") {
  ScratchDir dir("ckpt");
  Checkpoint c;
  c.dim = 3;
  c.tensors["a"] = nn::Tensor2D::from_rows({{1.0, 2.0, 3.0}, {-4.0, 0.125, 1e-300}});
  c.blobs["meta"] = std::string("{\"x\":1}\0tail", 12);
  save_checkpoint(dir / "c.ckpt", c);
  const auto back = load_checkpoint(dir / "c.ckpt");
  CHECK(back.dim == 3);
  CHECK(back.tensor("a") == c.tensors["a"]);
  CHECK(back.blob("meta") == c.blobs["meta"]);
  CHECK_THROWS_AS(back.tensor("missing"), Error);
}

TEST_CASE("checkpoint decoder refuses cache files and truncation") {
  Checkpoint c;
  c.tensors["w"] = nn::Tensor2D(2, 2, 1.0);
  auto bytes = encode_checkpoint(c);
  std::vector<std::byte> cut(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);

  BinaryWriter w;
  w.header({kFormatVersion, kFlagEmbeddingStore, 2, 0});
  CHECK_THROWS_AS(decode_checkpoint(w.bytes()), FormatError);
}

TEST_CASE("atomic write leaves no temporary behind") {
  ScratchDir dir("atomic");
  const std::vector<std::byte> payload{std::byte{1}, std::byte{2}, std::byte{3}};
  write_file_atomic(dir / "f.bin", payload);
  write_file_atomic(dir / "f.bin", payload);
  CHECK(read_file(dir / "f.bin") == payload);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 1);
}

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64(std::string_view("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64(std::string_view("foobar")) == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}
