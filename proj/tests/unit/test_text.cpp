#include <doctest.h>

#include "reccot/text.hpp"

using namespace reccot::text;

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
  CHECK(tokenize("Good STRAP, really!") == std::vector<std::string>{"good", "strap", "really"});
  CHECK(tokenize("  ").empty());
}

TEST_CASE("ngrams lists unigrams then adjacent bigrams") {
  const std::vector<std::string> t{"good", "strap"};
  CHECK(ngrams(t) == std::vector<std::string>{"good", "strap", "good strap"});
}

TEST_CASE("hash buckets are stable and in range") {
  CHECK(hash_bucket("good", 97) == hash_bucket("good", 97));
  CHECK(hash_bucket("good strap", 16) < 16);
}

TEST_CASE("code points count multi-byte characters once") {
  CHECK(code_point_count("abc") == 3);
  CHECK(code_point_count("caf\xC3\xA9") == 4);
  CHECK(code_point_count("\xE2\x82\xAC") == 1);
}

TEST_CASE("sentiment reads negation and intensifiers") {
  auto ev = read_sentiment("great strap");
  CHECK(ev.positive == 1.0);
  CHECK(ev.negative == 0.0);
  ev = read_sentiment("not great");
  CHECK(ev.negative == 1.0);
  ev = read_sentiment("not the great");
  CHECK(ev.negative == 1.0);
  ev = read_sentiment("not the strap great");
  CHECK(ev.positive == 1.0);
  ev = read_sentiment("very poor");
  CHECK(ev.negative == 2.0);
  CHECK(ev.balance() == -1.0);
  CHECK(read_sentiment("strap zipper").balance() == 0.0);
}

TEST_CASE("aspect opinions follow the cue directly before the aspect term") {
  const auto& a = aspects();
  REQUIRE(a.size() == 4);
  const auto op = read_aspect_opinions("sturdy stitching. not good sizing. very cheap pricing. the design.");
  CHECK(op[0] == -1.0);  // fit
  CHECK(op[1] == 1.0);   // material
  CHECK(op[2] == 0.0);   // design has no cue
  CHECK(op[3] == -2.0);  // value
}

TEST_CASE("lexicons are disjoint") {
  for (const auto& w : positive_words()) CHECK(polarity(w) == 1);
  for (const auto& w : negative_words()) CHECK(polarity(w) == -1);
  for (const auto& w : filler_words()) CHECK(polarity(w) == 0);
  for (const auto& w : negators()) CHECK(polarity(w) == 0);
  CHECK(is_negator("never"));
  CHECK(is_intensifier("extremely"));
}
