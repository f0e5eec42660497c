#include "reccot/recsys.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "reccot/error.hpp"
#include "reccot/nn/adam.hpp"
#include "reccot/nn/attention.hpp"

namespace reccot::recsys {
namespace {

nn::Tensor2D table_row(const nn::Parameter& table, std::size_t r) {
  const auto row = table.value.row(r);
  return nn::Tensor2D(1, row.size(), std::vector<double>(row.begin(), row.end()));
}

void add_to_row(nn::Parameter& table, std::size_t r, std::span<const double> g, double scale) {
  auto dst = table.grad.row(r);
  for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += scale * g[c];
  table.touch(r);
}

std::map<std::string, std::size_t> build_index(const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!m.emplace(ids[i], i).second) throw Error("duplicate id '" + ids[i] + "' in model tables");
  }
  return m;
}

double clamp_rating(double r) { return std::clamp(r, 1.0, 5.0); }

std::string block_name(const char* side, std::size_t l, const char* map) {
  return std::string("recsys.") + side + "_block" + std::to_string(l) + "." + map;
}

}  // namespace

void RecConfig::validate() const {
  if (batch_size < 2) throw Error("recsys batch_size must be at least 2: in-batch negatives need a partner");
  if (margin <= 0.0) throw Error("recsys margin must be positive");
  if (contrastive_weight < 0.0) throw Error("recsys contrastive_weight must be non-negative");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("recsys dropout must lie in [0, 1)");
  if (k_max == 0) throw Error("recsys k_max must be positive");
  if (learning_rate < 0.0) throw Error("recsys learning_rate must be non-negative");
}

FuseTrace fuse_forward(const nn::Tensor2D& p, const cache::History& history,
                       const std::vector<AttentionBlock>& blocks, double dropout, nn::Rng* rng) {
  FuseTrace t;
  t.output = p;
  if (history.miss) return t;
  if (std::none_of(history.mask.begin(), history.mask.end(), [](bool b) { return b; })) {
    throw Error("fuse: history is fully masked but not flagged as a miss");
  }
  t.blocks.reserve(blocks.size());
  for (const auto& blk : blocks) {
    BlockTrace b;
    b.input = t.output;
    b.query = nn::matmul(b.input, blk.wq.value);
    b.keys = nn::matmul(history.matrix, blk.wk.value);
    b.values = nn::matmul(history.matrix, blk.wv.value);
    auto att = nn::attention(b.query, b.keys, b.values, history.mask);
    b.weights = std::move(att.weights);
    b.mask = rng ? nn::dropout_mask(1, p.cols(), dropout, *rng) : nn::Tensor2D(1, p.cols(), 1.0);
    t.output += nn::hadamard(att.output, b.mask);
    t.blocks.push_back(std::move(b));
  }
  return t;
}

nn::Tensor2D fuse_backward(const FuseTrace& trace, const cache::History& history,
                           std::vector<AttentionBlock>& blocks, const nn::Tensor2D& d_output) {
  nn::Tensor2D dx = d_output;
  for (std::size_t l = trace.blocks.size(); l-- > 0;) {
    const auto& b = trace.blocks[l];
    auto& blk = blocks[l];
    const auto g = nn::attention_backward(nn::hadamard(dx, b.mask), b.query, b.keys, b.values, b.weights);
    blk.wq.grad += nn::matmul_tn(b.input, g.d_query);
    blk.wk.grad += nn::matmul_tn(history.matrix, g.d_keys);
    blk.wv.grad += nn::matmul_tn(history.matrix, g.d_values);
    dx += nn::matmul_nt(g.d_query, blk.wq.value);
  }
  return dx;
}

nn::Tensor2D fuse(const nn::Tensor2D& p, const cache::History& history, const std::vector<AttentionBlock>& blocks) {
  return fuse_forward(p, history, blocks, 0.0, nullptr).output;
}

double contrastive_loss(std::span<const double> anchor, std::span<const double> positive,
                        std::span<const double> negative, double margin) {
  return std::max(0.0, margin + nn::squared_distance(anchor, positive) - nn::squared_distance(anchor, negative));
}

HingeGrads contrastive_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                                 std::span<const double> negative, double margin) {
  const std::size_t d = anchor.size();
  HingeGrads g{contrastive_loss(anchor, positive, negative, margin), std::vector<double>(d),
               std::vector<double>(d), std::vector<double>(d)};
  if (g.loss > 0.0) {
    for (std::size_t c = 0; c < d; ++c) {
      g.d_anchor[c] = 2.0 * (negative[c] - positive[c]);
      g.d_positive[c] = -2.0 * (anchor[c] - positive[c]);
      g.d_negative[c] = 2.0 * (anchor[c] - negative[c]);
    }
  }
  return g;
}

RecModel::RecModel(std::size_t dim, const RecConfig& cfg, std::vector<std::string> user_ids,
                   std::vector<std::string> item_ids)
    : user_table("recsys.user_table", user_ids.size() + 1, dim, /*sparse=*/true),
      item_table("recsys.item_table", item_ids.size() + 1, dim, /*sparse=*/true),
      projector_hidden("recsys.projector_hidden", 2 * dim, cfg.hidden == 0 ? dim : cfg.hidden),
      projector_out("recsys.projector_out", cfg.hidden == 0 ? dim : cfg.hidden, 1),
      config(cfg),
      dim_(dim),
      user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      user_index_(build_index(user_ids_)),
      item_index_(build_index(item_ids_)) {
  if (dim == 0) throw Error("recsys embedding size must be positive");
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    user_blocks.push_back({nn::Parameter(block_name("user", l, "wq"), dim, dim),
                           nn::Parameter(block_name("user", l, "wk"), dim, dim),
                           nn::Parameter(block_name("user", l, "wv"), dim, dim)});
    item_blocks.push_back({nn::Parameter(block_name("item", l, "wq"), dim, dim),
                           nn::Parameter(block_name("item", l, "wk"), dim, dim),
                           nn::Parameter(block_name("item", l, "wv"), dim, dim)});
  }
}

void RecModel::initialize(double rating_mean, nn::Rng& rng) {
  nn::init_normal(user_table.value, config.init_scale, rng);
  nn::init_normal(item_table.value, config.init_scale, rng);
  const double limit = std::sqrt(3.0 / static_cast<double>(dim_));
  for (auto* blocks : {&user_blocks, &item_blocks}) {
    for (auto& b : *blocks) {
      nn::init_uniform(b.wq.value, limit, rng);
      nn::init_uniform(b.wk.value, limit, rng);
      nn::init_uniform(b.wv.value, limit, rng);
    }
  }
  projector_hidden.init_xavier(rng);
  projector_out.init_xavier(rng);
  projector_out.bias.value(0, 0) = rating_mean;
}

std::size_t RecModel::user_row(const std::string& id) const {
  const auto it = user_index_.find(id);
  return it == user_index_.end() ? cold_user_row() : it->second;
}

std::size_t RecModel::item_row(const std::string& id) const {
  const auto it = item_index_.find(id);
  return it == item_index_.end() ? cold_item_row() : it->second;
}

std::vector<nn::Parameter*> RecModel::parameters() {
  std::vector<nn::Parameter*> out{&user_table, &item_table};
  for (auto* blocks : {&user_blocks, &item_blocks}) {
    for (auto& b : *blocks) {
      out.push_back(&b.wq);
      out.push_back(&b.wk);
      out.push_back(&b.wv);
    }
  }
  for (auto* d : {&projector_hidden, &projector_out}) {
    out.push_back(&d->weight);
    out.push_back(&d->bias);
  }
  return out;
}

std::vector<const nn::Parameter*> RecModel::parameters() const {
  auto mut = const_cast<RecModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

io::Checkpoint RecModel::to_checkpoint() const {
  io::Checkpoint c;
  c.dim = static_cast<std::uint32_t>(dim_);
  for (const auto* p : parameters()) c.tensors[p->name] = p->value;
  c.blobs["recsys.users"] = nlohmann::json(user_ids_).dump();
  c.blobs["recsys.items"] = nlohmann::json(item_ids_).dump();
  c.blobs["recsys.config"] = nlohmann::json{{"layers", config.layers},
                                            {"hidden", config.hidden},
                                            {"learning_rate", config.learning_rate},
                                            {"batch_size", config.batch_size},
                                            {"epochs", config.epochs},
                                            {"margin", config.margin},
                                            {"contrastive_weight", config.contrastive_weight},
                                            {"dropout", config.dropout},
                                            {"k_max", config.k_max},
                                            {"reject_accidental_positives", config.reject_accidental_positives},
                                            {"init_scale", config.init_scale},
                                            {"seed", config.seed}}
                                 .dump();
  return c;
}

RecModel RecModel::from_checkpoint(const io::Checkpoint& ckpt) {
  const auto j = nlohmann::json::parse(ckpt.blob("recsys.config"));
  RecConfig cfg;
  cfg.layers = j.at("layers").get<std::size_t>();
  cfg.hidden = j.at("hidden").get<std::size_t>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.margin = j.at("margin").get<double>();
  cfg.contrastive_weight = j.at("contrastive_weight").get<double>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.k_max = j.at("k_max").get<std::size_t>();
  cfg.reject_accidental_positives = j.at("reject_accidental_positives").get<bool>();
  cfg.init_scale = j.at("init_scale").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  RecModel m(ckpt.dim, cfg, nlohmann::json::parse(ckpt.blob("recsys.users")).get<std::vector<std::string>>(),
             nlohmann::json::parse(ckpt.blob("recsys.items")).get<std::vector<std::string>>());
  for (nn::Parameter* p : m.parameters()) {
    const auto& t = ckpt.tensor(p->name);
    if (t.rows() != p->value.rows() || t.cols() != p->value.cols()) {
      throw FormatError("checkpoint tensor '" + p->name + "' has the wrong shape");
    }
    p->value = t;
  }
  return m;
}

PairInput make_pair_input(const RecModel& model, const cache::CacheStore& store, const Interaction& x,
                          bool exclude_self) {
  if (store.dim() != model.dim()) {
    throw ShapeError("cache dimension " + std::to_string(store.dim()) + " does not match model dimension " +
                     std::to_string(model.dim()));
  }
  std::optional<cache::Exclusion> ex;
  if (exclude_self) ex = cache::Exclusion{x.user_id, x.item_id};
  PairInput in;
  in.user_row = model.user_row(x.user_id);
  in.item_row = model.item_row(x.item_id);
  in.rating = x.rating;
  in.user_history = cache::retrieve_history(store, cache::Side::kUser, x.user_id, model.config.k_max, ex);
  in.item_history = cache::retrieve_history(store, cache::Side::kItem, x.item_id, model.config.k_max, ex);
  return in;
}

PairTrace pair_forward(const RecModel& model, const PairInput& in, nn::Rng* rng) {
  PairTrace t;
  const double drop = model.config.dropout;
  t.user = fuse_forward(table_row(model.user_table, in.user_row), in.item_history, model.user_blocks, drop, rng);
  t.item = fuse_forward(table_row(model.item_table, in.item_row), in.user_history, model.item_blocks, drop, rng);
  const std::size_t d = model.dim();
  t.joint = nn::Tensor2D(1, 2 * d);
  auto joint = t.joint.row(0);
  const auto vu = t.user.output.row(0);
  const auto vi = t.item.output.row(0);
  std::copy(vu.begin(), vu.end(), joint.begin());
  std::copy(vi.begin(), vi.end(), joint.begin() + static_cast<std::ptrdiff_t>(d));
  t.hidden = nn::tanh(model.projector_hidden.forward(t.joint));
  t.rating = model.projector_out.forward(t.hidden)(0, 0);
  return t;
}

double score(const RecModel& model, const PairInput& in) { return pair_forward(model, in, nullptr).rating; }

double predict(const RecModel& model, const cache::CacheStore& store, const std::string& user_id,
               const std::string& item_id) {
  return clamp_rating(score(model, make_pair_input(model, store, Interaction{user_id, item_id, 0.0, 0}, false)));
}

namespace {

double batch_loss_impl(RecModel& model, std::span<const PairInput* const> batch,
                       const std::vector<std::size_t>& negatives, nn::Rng* rng, bool accumulate) {
  const std::size_t n = batch.size();
  if (n < 2) throw Error("recsys batch needs at least 2 interactions for in-batch negatives");
  if (negatives.size() != n) throw Error("recsys batch: one negative index per interaction required");
  const double scale = 1.0 / static_cast<double>(n);
  const double w = model.config.contrastive_weight;
  const double margin = model.config.margin;
  const std::size_t d = model.dim();
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const PairInput& in = *batch[b];
    const PairInput& neg = *batch[negatives[b]];
    const auto t = pair_forward(model, in, rng);
    const double err = t.rating - in.rating;
    const auto vu = t.user.output.row(0);
    const auto vi = t.item.output.row(0);
    const auto hu = contrastive_loss_grad(vu, model.item_table.value.row(in.item_row),
                                          model.item_table.value.row(neg.item_row), margin);
    const auto hi = contrastive_loss_grad(vi, model.user_table.value.row(in.user_row),
                                          model.user_table.value.row(neg.user_row), margin);
    total += err * err + w * 0.5 * (hu.loss + hi.loss);
    if (!accumulate) continue;

    const nn::Tensor2D d_r(1, 1, 2.0 * err * scale);
    const auto d_hidden = model.projector_out.backward(t.hidden, d_r);
    const auto d_joint = model.projector_hidden.backward(t.joint, nn::tanh_backward(t.hidden, d_hidden));
    const double hs = w * 0.5 * scale;
    nn::Tensor2D d_vu(1, d);
    nn::Tensor2D d_vi(1, d);
    for (std::size_t c = 0; c < d; ++c) {
      d_vu(0, c) = d_joint(0, c) + hs * hu.d_anchor[c];
      d_vi(0, c) = d_joint(0, d + c) + hs * hi.d_anchor[c];
    }
    const auto d_pu = fuse_backward(t.user, in.item_history, model.user_blocks, d_vu);
    const auto d_pi = fuse_backward(t.item, in.user_history, model.item_blocks, d_vi);
    add_to_row(model.user_table, in.user_row, d_pu.row(0), 1.0);
    add_to_row(model.item_table, in.item_row, d_pi.row(0), 1.0);
    add_to_row(model.item_table, in.item_row, hu.d_positive, hs);
    add_to_row(model.item_table, neg.item_row, hu.d_negative, hs);
    add_to_row(model.user_table, in.user_row, hi.d_positive, hs);
    add_to_row(model.user_table, neg.user_row, hi.d_negative, hs);
  }
  return total * scale;
}

}  // namespace

double batch_loss(RecModel& model, const std::vector<PairInput>& batch, const std::vector<std::size_t>& negatives,
                  nn::Rng* rng, bool accumulate) {
  std::vector<const PairInput*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& b : batch) ptrs.push_back(&b);
  return batch_loss_impl(model, ptrs, negatives, rng, accumulate);
}

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw Error("metrics: prediction and target counts differ");
  if (targets.empty()) throw Error("metrics: empty evaluation set");
  Metrics m;
  m.count = targets.size();
  for (std::size_t k = 0; k < m.count; ++k) {
    const double e = predictions[k] - targets[k];
    m.mse += e * e;
    m.mae += std::abs(e);
  }
  m.mse /= static_cast<double>(m.count);
  m.mae /= static_cast<double>(m.count);
  return m;
}

std::vector<double> predict_all(const RecModel& model, const cache::CacheStore& store,
                                const std::vector<Interaction>& part) {
  std::vector<double> out;
  out.reserve(part.size());
  for (const auto& x : part) out.push_back(clamp_rating(score(model, make_pair_input(model, store, x, false))));
  return out;
}

Metrics evaluate(const RecModel& model, const cache::CacheStore& store, const std::vector<Interaction>& part) {
  if (part.empty()) throw Error("evaluate: empty split part");
  const auto preds = predict_all(model, store, part);
  std::vector<double> truth;
  truth.reserve(part.size());
  for (const auto& x : part) truth.push_back(x.rating);
  return compute_metrics(preds, truth);
}

RecTrainResult train_recsys(const std::vector<Interaction>& train, const std::vector<Interaction>& validation,
                            const cache::CacheStore& store, const RecConfig& cfg) {
  cfg.validate();
  if (train.size() < 2) throw Error("train_recsys: at least 2 training interactions are required");
  if (store.dim() == 0) throw Error("train_recsys: embedding cache is empty");

  std::set<std::string> users;
  std::set<std::string> items;
  double mean = 0.0;
  for (const auto& x : train) {
    users.insert(x.user_id);
    items.insert(x.item_id);
    mean += x.rating;
  }
  mean /= static_cast<double>(train.size());

  nn::Rng rng(cfg.seed);
  RecTrainResult result{RecModel(store.dim(), cfg, {users.begin(), users.end()}, {items.begin(), items.end()}), {}};
  RecModel& model = result.model;
  model.initialize(mean, rng);

  std::vector<PairInput> inputs;
  inputs.reserve(train.size());
  for (const auto& x : train) inputs.push_back(make_pair_input(model, store, x, true));

  nn::Adam adam(nn::AdamConfig{.learning_rate = cfg.learning_rate});
  auto params = model.parameters();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    // A trailing batch of one joins the previous batch so it still has a negative.
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      spans.emplace_back(s, std::min(order.size(), s + cfg.batch_size));
    }
    if (spans.size() > 1 && spans.back().second - spans.back().first == 1) {
      spans[spans.size() - 2].second = spans.back().second;
      spans.pop_back();
    }

    double loss_sum = 0.0;
    std::vector<const PairInput*> batch;
    std::vector<std::size_t> negatives;
    for (const auto& [s, e] : spans) {
      batch.clear();
      for (std::size_t k = s; k < e; ++k) batch.push_back(&inputs[order[k]]);
      const std::size_t n = batch.size();
      std::uniform_int_distribution<std::size_t> pick(0, n - 2);
      negatives.assign(n, 0);
      for (std::size_t b = 0; b < n; ++b) {
        std::size_t j = 0;
        for (int attempt = 0; attempt < 16; ++attempt) {
          j = pick(rng);
          if (j >= b) ++j;
          if (!cfg.reject_accidental_positives) break;
          if (batch[j]->item_row != batch[b]->item_row && batch[j]->user_row != batch[b]->user_row) break;
        }
        negatives[b] = j;
      }
      for (nn::Parameter* p : params) p->zero_grad();
      const double loss = batch_loss_impl(model, batch, negatives, &rng, true);
      if (!std::isfinite(loss)) {
        throw NumericError("train_recsys: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(n);
      adam.step(params);
    }

    RecEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    if (!validation.empty()) {
      const auto m = evaluate(model, store, validation);
      stats.validation_mse = m.mse;
      stats.validation_mae = m.mae;
    }
    result.trace.push_back(stats);
  }
  return result;
}

namespace {

void check_edges(const std::vector<std::size_t>& edges) {
  if (edges.empty()) throw Error("bucket edges must not be empty");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (edges[k] <= edges[k - 1]) throw Error("bucket edges must be strictly increasing");
  }
}

struct Accum {
  std::size_t n = 0;
  double se = 0.0;
  double ae = 0.0;
  std::set<std::string> users;
};

BucketMetrics finish(std::string label, const Accum& a) {
  BucketMetrics b;
  b.label = std::move(label);
  b.interactions = a.n;
  b.users = a.users.size();
  if (a.n > 0) {
    b.mse = a.se / static_cast<double>(a.n);
    b.mae = a.ae / static_cast<double>(a.n);
  }
  return b;
}

}  // namespace

EngagementReport analyze_by_engagement(const std::vector<EvalRecord>& records,
                                       const std::map<std::string, std::size_t>& user_counts,
                                       const std::vector<std::size_t>& count_edges,
                                       const std::vector<std::size_t>& length_edges) {
  check_edges(count_edges);
  check_edges(length_edges);
  EngagementReport rep{count_edges, length_edges, {}, {}};
  std::vector<Accum> by_count(count_edges.size() + 1);
  std::vector<Accum> by_length(length_edges.size() + 1);
  for (const auto& r : records) {
    const auto it = user_counts.find(r.user_id);
    const std::size_t cnt = it == user_counts.end() ? 0 : it->second;
    const std::size_t cb = static_cast<std::size_t>(
        std::upper_bound(count_edges.begin(), count_edges.end(), cnt) - count_edges.begin());
    const std::size_t lb = static_cast<std::size_t>(
        std::lower_bound(length_edges.begin(), length_edges.end(), r.review_length) - length_edges.begin());
    const double e = r.prediction - r.truth;
    for (Accum* a : {&by_count[cb], &by_length[lb]}) {
      ++a->n;
      a->se += e * e;
      a->ae += std::abs(e);
      a->users.insert(r.user_id);
    }
  }
  rep.by_user_count.push_back(finish("<" + std::to_string(count_edges.front()), by_count.front()));
  for (std::size_t k = 1; k < count_edges.size(); ++k) {
    rep.by_user_count.push_back(
        finish(std::to_string(count_edges[k - 1]) + "-" + std::to_string(count_edges[k] - 1), by_count[k]));
  }
  rep.by_user_count.push_back(finish(">=" + std::to_string(count_edges.back()), by_count.back()));
  std::size_t lo = 0;
  for (std::size_t k = 0; k < length_edges.size(); ++k) {
    rep.by_review_length.push_back(
        finish(std::to_string(lo) + "-" + std::to_string(length_edges[k]), by_length[k]));
    lo = length_edges[k] + 1;
  }
  rep.by_review_length.push_back(finish(">" + std::to_string(length_edges.back()), by_length.back()));
  return rep;
}

}  // namespace reccot::recsys
