#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reccot/container.hpp"
#include "reccot/corpus.hpp"
#include "reccot/nn/layers.hpp"

// Hashed n-gram text encoder: CoT and review text in, a d-dimensional
// embedding and a rating estimate out.
namespace reccot::encoder {

inline constexpr std::string_view kSeparator = "[SEP]";

struct EncoderConfig {
  std::uint32_t buckets = 1u << 16;
  std::size_t hidden = 64;
  std::size_t dim = 768;
  double dropout = 0.5;
  double learning_rate = 1e-5;
  std::size_t batch_size = 4;
  std::size_t epochs = 4;
  double init_scale = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

// Sparse bag of hashed n-gram buckets, sorted by bucket id.
struct FeatureSet {
  std::vector<std::pair<std::uint32_t, double>> counts;

  double total() const;
  bool empty() const { return counts.empty(); }
  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

// Unigrams and bigrams of a token sequence, hashed into `buckets`.
FeatureSet ngram_features(const std::vector<std::string>& tokens, std::uint32_t buckets);

// cot ⊕ [SEP] ⊕ review, tokenized and hashed. Bigrams span the separator,
// so swapping the two texts changes the multiset. Throws when both are empty.
FeatureSet featurize(std::string_view cot_text, std::string_view review_text, std::uint32_t buckets);

class TextEncoder {
 public:
  TextEncoder() = default;
  explicit TextEncoder(const EncoderConfig& cfg);

  // Xavier dense layers, N(0, init_scale) table, rating bias at `rating_bias`.
  void initialize(double rating_bias, nn::Rng& rng);

  struct Trace {
    FeatureSet features;
    nn::Tensor2D pooled;  // 1 x hidden
    nn::Tensor2D hidden;  // 1 x hidden, post-tanh
    nn::Tensor2D mask;    // 1 x hidden dropout mask
    nn::Tensor2D embedding;  // 1 x dim, post-tanh
    double rating = 0.0;
  };

  // Mean-pooled bucket embeddings -> tanh dense -> dropout -> tanh dense -> d;
  // the rating head reads the embedding. Dropout only when `rng` is given.
  Trace forward(const FeatureSet& features, nn::Rng* rng = nullptr) const;
  // Accumulates gradients of a loss with dL/drating = d_rating.
  void backward(const Trace& trace, double d_rating);

  std::vector<double> encode(const FeatureSet& features) const;

  std::vector<nn::Parameter*> parameters();
  const EncoderConfig& config() const { return cfg_; }

  nn::Parameter& table() { return table_; }
  const nn::Parameter& table() const { return table_; }

  io::Checkpoint to_checkpoint() const;
  static TextEncoder from_checkpoint(const io::Checkpoint& ckpt);

 private:
  EncoderConfig cfg_;
  nn::Parameter table_;
  nn::Dense layer1_;
  nn::Dense layer2_;
  nn::Dense head_;
};

struct EncoderSample {
  std::string cot_text;
  std::string review_text;
  double rating = 0.0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double validation_mse = 0.0;
};

struct EncoderTrainResult {
  TextEncoder encoder;
  std::vector<EpochStats> trace;
};

double mean_squared_error(const TextEncoder& enc, const std::vector<EncoderSample>& samples);

// Minibatch Adam on (rating_hat - rating)^2. Train MSE is the running mean of
// train-mode batch losses; validation MSE is evaluated in eval mode.
EncoderTrainResult train_encoder(const std::vector<EncoderSample>& train,
                                 const std::vector<EncoderSample>& validation,
                                 const EncoderConfig& cfg);

struct EncodedReview {
  std::string user_id;
  std::string item_id;
  std::uint32_t ordinal = 0;
  std::vector<double> embedding;
  double predicted_rating = 0.0;
};

struct EmbedInput {
  corpus::ReviewRecord review;
  std::string cot_text;
};

struct EmbedResult {
  std::vector<EncodedReview> encoded;
  std::size_t failures = 0;
};

// Eval-mode embedding of every input, order preserving; records that fail to
// featurize or encode are skipped and counted.
EmbedResult embed_corpus(const std::vector<EmbedInput>& inputs, const TextEncoder& encoder);

}  // namespace reccot::encoder
