#include "reccot/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "reccot/error.hpp"
#include "reccot/nn/adam.hpp"
#include "reccot/text.hpp"

namespace reccot::encoder {

void EncoderConfig::validate() const {
  if (buckets == 0 || hidden == 0 || dim == 0) throw Error("encoder sizes must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("encoder dropout must lie in [0, 1)");
  if (batch_size == 0) throw Error("encoder batch_size must be positive");
  if (learning_rate < 0.0) throw Error("encoder learning_rate must be non-negative");
}

double FeatureSet::total() const {
  double t = 0.0;
  for (const auto& [b, c] : counts) t += c;
  return t;
}

FeatureSet ngram_features(const std::vector<std::string>& tokens, std::uint32_t buckets) {
  std::map<std::uint32_t, double> bag;
  for (const auto& g : text::ngrams(tokens)) bag[text::hash_bucket(g, buckets)] += 1.0;
  return FeatureSet{{bag.begin(), bag.end()}};
}

FeatureSet featurize(std::string_view cot_text, std::string_view review_text, std::uint32_t buckets) {
  auto tokens = text::tokenize(cot_text);
  auto review = text::tokenize(review_text);
  if (tokens.empty() && review.empty()) throw Error("featurize: both texts are empty");
  tokens.emplace_back(kSeparator);
  tokens.insert(tokens.end(), review.begin(), review.end());
  return ngram_features(tokens, buckets);
}

TextEncoder::TextEncoder(const EncoderConfig& cfg)
    : cfg_(cfg),
      table_("encoder.table", cfg.buckets, cfg.hidden, /*sparse=*/true),
      layer1_("encoder.layer1", cfg.hidden, cfg.hidden),
      layer2_("encoder.layer2", cfg.hidden, cfg.dim),
      head_("encoder.head", cfg.dim, 1) {
  cfg_.validate();
}

void TextEncoder::initialize(double rating_bias, nn::Rng& rng) {
  nn::init_normal(table_.value, cfg_.init_scale, rng);
  layer1_.init_xavier(rng);
  layer2_.init_xavier(rng);
  head_.init_xavier(rng);
  head_.bias.value(0, 0) = rating_bias;
}

TextEncoder::Trace TextEncoder::forward(const FeatureSet& features, nn::Rng* rng) const {
  if (features.empty()) throw Error("encode: empty feature set");
  Trace t;
  t.features = features;
  t.pooled = nn::Tensor2D(1, cfg_.hidden);
  auto pooled = t.pooled.row(0);
  const double total = features.total();
  for (const auto& [bucket, count] : features.counts) {
    const auto row = table_.value.row(bucket);
    const double w = count / total;
    for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += w * row[c];
  }
  t.hidden = nn::tanh(layer1_.forward(t.pooled));
  t.mask = rng ? nn::dropout_mask(1, cfg_.hidden, cfg_.dropout, *rng) : nn::Tensor2D(1, cfg_.hidden, 1.0);
  t.embedding = nn::tanh(layer2_.forward(nn::hadamard(t.hidden, t.mask)));
  t.rating = head_.forward(t.embedding)(0, 0);
  return t;
}

void TextEncoder::backward(const Trace& t, double d_rating) {
  const nn::Tensor2D d_r(1, 1, d_rating);
  const auto d_emb = head_.backward(t.embedding, d_r);
  const auto d_pre2 = nn::tanh_backward(t.embedding, d_emb);
  const auto d_dropped = layer2_.backward(nn::hadamard(t.hidden, t.mask), d_pre2);
  const auto d_hidden = nn::hadamard(d_dropped, t.mask);
  const auto d_pre1 = nn::tanh_backward(t.hidden, d_hidden);
  const auto d_pooled = layer1_.backward(t.pooled, d_pre1);
  const double total = t.features.total();
  const auto dp = d_pooled.row(0);
  for (const auto& [bucket, count] : t.features.counts) {
    auto g = table_.grad.row(bucket);
    const double w = count / total;
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += w * dp[c];
    table_.touch(bucket);
  }
}

std::vector<double> TextEncoder::encode(const FeatureSet& features) const {
  const auto t = forward(features);
  const auto e = t.embedding.values();
  return {e.begin(), e.end()};
}

std::vector<nn::Parameter*> TextEncoder::parameters() {
  return {&table_,        &layer1_.weight, &layer1_.bias, &layer2_.weight,
          &layer2_.bias,  &head_.weight,   &head_.bias};
}

io::Checkpoint TextEncoder::to_checkpoint() const {
  io::Checkpoint c;
  c.dim = static_cast<std::uint32_t>(cfg_.dim);
  c.tensors[table_.name] = table_.value;
  for (const nn::Dense* d : {&layer1_, &layer2_, &head_}) {
    c.tensors[d->weight.name] = d->weight.value;
    c.tensors[d->bias.name] = d->bias.value;
  }
  c.blobs["encoder.config"] = nlohmann::json{{"buckets", cfg_.buckets},
                                             {"hidden", cfg_.hidden},
                                             {"dim", cfg_.dim},
                                             {"dropout", cfg_.dropout},
                                             {"learning_rate", cfg_.learning_rate},
                                             {"batch_size", cfg_.batch_size},
                                             {"epochs", cfg_.epochs},
                                             {"init_scale", cfg_.init_scale},
                                             {"seed", cfg_.seed}}
                                  .dump();
  return c;
}

TextEncoder TextEncoder::from_checkpoint(const io::Checkpoint& ckpt) {
  const auto j = nlohmann::json::parse(ckpt.blob("encoder.config"));
  EncoderConfig cfg;
  cfg.buckets = j.at("buckets").get<std::uint32_t>();
  cfg.hidden = j.at("hidden").get<std::size_t>();
  cfg.dim = j.at("dim").get<std::size_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.init_scale = j.at("init_scale").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  TextEncoder enc(cfg);
  for (nn::Parameter* p : enc.parameters()) {
    const auto& t = ckpt.tensor(p->name);
    if (t.rows() != p->value.rows() || t.cols() != p->value.cols()) {
      throw FormatError("checkpoint tensor '" + p->name + "' has the wrong shape");
    }
    p->value = t;
  }
  return enc;
}

double mean_squared_error(const TextEncoder& enc, const std::vector<EncoderSample>& samples) {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : samples) {
    const double r = enc.forward(featurize(x.cot_text, x.review_text, enc.config().buckets)).rating;
    s += (r - x.rating) * (r - x.rating);
  }
  return s / static_cast<double>(samples.size());
}

EncoderTrainResult train_encoder(const std::vector<EncoderSample>& train,
                                 const std::vector<EncoderSample>& validation,
                                 const EncoderConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw Error("train_encoder: no training samples");
  nn::Rng rng(cfg.seed);
  double mean = 0.0;
  for (const auto& s : train) mean += s.rating;
  mean /= static_cast<double>(train.size());

  EncoderTrainResult result{TextEncoder(cfg), {}};
  TextEncoder& enc = result.encoder;
  enc.initialize(mean, rng);

  std::vector<FeatureSet> features;
  features.reserve(train.size());
  for (const auto& s : train) features.push_back(featurize(s.cot_text, s.review_text, cfg.buckets));

  nn::Adam adam(nn::AdamConfig{.learning_rate = cfg.learning_rate});
  auto params = enc.parameters();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double b = static_cast<double>(end - start);
      for (nn::Parameter* p : params) p->zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const auto trace = enc.forward(features[idx], &rng);
        const double err = trace.rating - train[idx].rating;
        if (!std::isfinite(err)) {
          throw NumericError("train_encoder: non-finite loss at epoch " + std::to_string(epoch));
        }
        loss_sum += err * err;
        enc.backward(trace, 2.0 * err / b);
      }
      adam.step(params);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = loss_sum / static_cast<double>(train.size());
    stats.validation_mse = mean_squared_error(enc, validation);
    result.trace.push_back(stats);
  }
  return result;
}

EmbedResult embed_corpus(const std::vector<EmbedInput>& inputs, const TextEncoder& encoder) {
  EmbedResult out;
  out.encoded.reserve(inputs.size());
  for (const auto& in : inputs) {
    try {
      const auto t = encoder.forward(featurize(in.cot_text, in.review.review_text, encoder.config().buckets));
      if (!t.embedding.all_finite()) throw NumericError("non-finite embedding");
      const auto e = t.embedding.values();
      out.encoded.push_back(EncodedReview{in.review.user_id, in.review.item_id, in.review.ordinal,
                                          {e.begin(), e.end()}, t.rating});
    } catch (const Error&) {
      ++out.failures;
    }
  }
  return out;
}

}  // namespace reccot::encoder
