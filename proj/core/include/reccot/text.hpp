#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reccot::text {

// Number of UTF-8 code points (continuation bytes are not counted).
std::size_t code_point_count(std::string_view s);

// Lowercased alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view s);

// Bucket id of an n-gram (tokens joined by a single space) in [0, buckets).
std::uint32_t hash_bucket(std::string_view ngram, std::uint32_t buckets);

// Unigrams followed by adjacent bigrams, as strings.
std::vector<std::string> ngrams(std::span<const std::string> tokens);

// Polarity lexicon shared by the synthetic review generator and the toy
// policy's prompt reader.
const std::vector<std::string>& positive_words();
const std::vector<std::string>& negative_words();
const std::vector<std::string>& negators();
const std::vector<std::string>& intensifiers();
const std::vector<std::string>& filler_words();

// +1, -1 or 0.
int polarity(std::string_view word);
bool is_negator(std::string_view word);
bool is_intensifier(std::string_view word);

// Lexicon evidence in a review. A negator within the two preceding tokens
// flips a cue's polarity; an intensifier immediately before it doubles its
// weight.
struct SentimentEvidence {
  double positive = 0.0;
  double negative = 0.0;
  std::size_t tokens = 0;

  // (positive - negative) / (positive + negative), 0 without cues.
  double balance() const;
};

SentimentEvidence read_sentiment(std::span<const std::string> tokens);
SentimentEvidence read_sentiment(std::string_view review);

// Product aspects a reviewer can comment on, each with its surface terms.
struct Aspect {
  std::string name;
  std::vector<std::string> terms;
};
const std::vector<Aspect>& aspects();

// Net opinion per aspect (indexed like aspects()): an aspect term directly
// preceded by a cue word takes that cue's polarity, with the same negation
// and intensifier rules as read_sentiment.
std::vector<double> read_aspect_opinions(std::span<const std::string> tokens);
std::vector<double> read_aspect_opinions(std::string_view review);

}  // namespace reccot::text
