#include "reccot/text.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "reccot/container.hpp"

namespace reccot::text {

std::size_t code_point_count(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}


std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::uint32_t hash_bucket(std::string_view ngram, std::uint32_t buckets) {
  return static_cast<std::uint32_t>(io::fnv1a64(ngram) % buckets);
}

std::vector<std::string> ngrams(std::span<const std::string> tokens) {
  std::vector<std::string> out(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) out.push_back(tokens[i] + " " + tokens[i + 1]);
  return out;
}

const std::vector<std::string>& positive_words() {
  static const std::vector<std::string> words{
      "great",    "excellent", "love",      "perfect",   "awesome",  "amazing",  "sturdy",
      "comfortable", "beautiful", "solid",  "reliable",  "happy",    "recommend", "fantastic",
      "superb",   "nice",      "good",      "pleased",   "impressive", "durable", "gorgeous",
      "flawless", "wonderful", "brilliant", "handy",     "smooth",   "crisp",    "elegant",
      "best",     "favorite",  "glad",      "worth",     "quality",  "lovely",   "satisfied",
      "stunning", "delighted", "terrific",  "outstanding", "fun"};
  return words;
}

const std::vector<std::string>& negative_words() {
  static const std::vector<std::string> words{
      "poor",     "terrible",  "broke",     "cheap",     "flimsy",   "awful",    "disappointed",
      "useless",  "waste",     "bad",       "worst",     "horrible", "defective", "junk",
      "crap",     "returned",  "uncomfortable", "fragile", "noisy",  "ugly",     "loose",
      "cracked",  "faulty",    "mediocre",  "annoying",  "overpriced", "weak",   "dull",
      "scratched", "regret",   "sloppy",    "shoddy",    "broken",   "worthless", "disappointing",
      "frustrating", "unusable", "wobbly",  "leaky",     "refund"};
  return words;
}

const std::vector<std::string>& negators() {
  static const std::vector<std::string> words{"not", "never", "hardly", "barely", "no", "isnt",
                                              "wasnt", "dont"};
  return words;
}

const std::vector<std::string>& intensifiers() {
  static const std::vector<std::string> words{"very", "extremely", "really", "totally",
                                              "absolutely", "incredibly"};
  return words;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words{
      "the",     "strap",  "zipper",  "bag",      "case",    "price",   "shipping", "size",
      "color",   "sound",  "strings", "material", "arrived", "used",    "bought",   "for",
      "my",      "with",   "it",      "this",     "and",     "week",    "month",    "daughter",
      "son",     "gift",   "box",     "pocket",   "fit",     "looks",   "feels",    "after",
      "before",  "guitar", "stand",   "cable",    "pedal",   "tuner",   "shoes",    "shirt",
      "jacket",  "wallet", "watch",   "band",     "lid",     "handle",  "seller",   "package",
      "item",    "product", "first",  "second",   "time",    "days",    "again",    "also",
      "was",     "is",     "a",       "to",       "of",      "on",      "in",       "as"};
  return words;
}

namespace {

const std::unordered_map<std::string_view, int>& polarity_index() {
  static const auto index = [] {
    std::unordered_map<std::string_view, int> m;
    for (const auto& w : positive_words()) m.emplace(w, 1);
    for (const auto& w : negative_words()) m.emplace(w, -1);
    return m;
  }();
  return index;
}

bool contains(const std::vector<std::string>& words, std::string_view w) {
  return std::find(words.begin(), words.end(), w) != words.end();
}

}  // namespace

int polarity(std::string_view word) {
  const auto& idx = polarity_index();
  auto it = idx.find(word);
  return it == idx.end() ? 0 : it->second;
}

bool is_negator(std::string_view word) { return contains(negators(), word); }
bool is_intensifier(std::string_view word) { return contains(intensifiers(), word); }

double SentimentEvidence::balance() const {
  const double total = positive + negative;
  return total > 0.0 ? (positive - negative) / total : 0.0;
}

SentimentEvidence read_sentiment(std::span<const std::string> tokens) {
  SentimentEvidence ev;
  ev.tokens = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    int p = polarity(tokens[i]);
    if (p == 0) continue;
    double weight = 1.0;
    bool negated = false;
    for (std::size_t back = 1; back <= 2 && back <= i; ++back) {
      if (is_negator(tokens[i - back])) negated = true;
    }
    if (i >= 1 && is_intensifier(tokens[i - 1])) weight = 2.0;
    if (negated) p = -p;
    (p > 0 ? ev.positive : ev.negative) += weight;
  }
  return ev;
}

SentimentEvidence read_sentiment(std::string_view review) {
  const auto tokens = tokenize(review);
  return read_sentiment(tokens);
}

const std::vector<Aspect>& aspects() {
  static const std::vector<Aspect> list{
      {"fit", {"sizing", "fitting", "cut", "proportions"}},
      {"material", {"fabric", "stitching", "texture", "seams"}},
      {"design", {"design", "styling", "colours", "finish"}},
      {"value", {"pricing", "value", "cost", "deal"}},
  };
  return list;
}

std::vector<double> read_aspect_opinions(std::span<const std::string> tokens) {
  const auto& list = aspects();
  std::vector<double> out(list.size(), 0.0);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    std::size_t a = 0;
    while (a < list.size() && !contains(list[a].terms, tokens[i])) ++a;
    if (a == list.size()) continue;
    const std::size_t cue = i - 1;
    int p = polarity(tokens[cue]);
    if (p == 0) continue;
    bool negated = false;
    for (std::size_t back = 1; back <= 2 && back <= cue; ++back) {
      if (is_negator(tokens[cue - back])) negated = true;
    }
    const double weight = cue >= 1 && is_intensifier(tokens[cue - 1]) ? 2.0 : 1.0;
    out[a] += (negated ? -p : p) * weight;
  }
  return out;
}

std::vector<double> read_aspect_opinions(std::string_view review) {
  const auto tokens = tokenize(review);
  return read_aspect_opinions(tokens);
}

}  // namespace reccot::text
