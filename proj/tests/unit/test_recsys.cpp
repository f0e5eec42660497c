#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "reccot/error.hpp"
#include "reccot/nn/grad_check.hpp"
#include "reccot/recsys.hpp"

using namespace reccot;
using namespace reccot::recsys;

namespace {

nn::Tensor2D random_tensor(std::size_t r, std::size_t c, nn::Rng& rng, double sd = 1.0) {
  nn::Tensor2D t(r, c);
  nn::init_normal(t, sd, rng);
  return t;
}

cache::History history_from(const nn::Tensor2D& rows, std::size_t length, std::size_t k_max) {
  cache::History h;
  h.matrix = nn::Tensor2D(k_max, rows.cols());
  h.mask.assign(k_max, false);
  for (std::size_t r = 0; r < length; ++r) {
    for (std::size_t c = 0; c < rows.cols(); ++c) h.matrix(r, c) = rows(r, c);
    h.mask[r] = true;
  }
  h.length = length;
  h.miss = length == 0;
  return h;
}

std::vector<AttentionBlock> random_blocks(std::size_t layers, std::size_t d, nn::Rng& rng) {
  std::vector<AttentionBlock> out;
  for (std::size_t l = 0; l < layers; ++l) {
    AttentionBlock b{nn::Parameter("wq", d, d), nn::Parameter("wk", d, d), nn::Parameter("wv", d, d)};
    nn::init_normal(b.wq.value, 0.5, rng);
    nn::init_normal(b.wk.value, 0.5, rng);
    nn::init_normal(b.wv.value, 0.5, rng);
    out.push_back(std::move(b));
  }
  return out;
}

// p + softmax(p Wq (H Wk)^T / sqrt(d)) H Wv over the real rows, written out
// with explicit loops.
std::vector<double> naive_block(const nn::Tensor2D& p, const nn::Tensor2D& h, std::size_t length,
                                const AttentionBlock& b) {
  const std::size_t d = p.cols();
  auto project = [&](std::span<const double> x, const nn::Tensor2D& w) {
    std::vector<double> y(d, 0.0);
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) y[j] += x[k] * w(k, j);
    return y;
  };
  const auto q = project(p.row(0), b.wq.value);
  std::vector<double> logits;
  std::vector<std::vector<double>> values;
  for (std::size_t r = 0; r < length; ++r) {
    const auto k = project(h.row(r), b.wk.value);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += q[j] * k[j];
    logits.push_back(s / std::sqrt(static_cast<double>(d)));
    values.push_back(project(h.row(r), b.wv.value));
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  std::vector<double> out(p.row(0).begin(), p.row(0).end());
  for (std::size_t r = 0; r < length; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += std::exp(logits[r] - mx) / z * values[r][j];
  return out;
}

// Users and items with additive rating effects; each review embedding carries
// the rating in its first coordinate plus noise.
struct World {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  cache::CacheStore store;
};

World make_world(std::size_t dim, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t users = 30, items = 20;
  std::vector<double> bu(users), bi(items);
  for (double& b : bu) b = 0.8 * n(rng);
  for (double& b : bi) b = 0.8 * n(rng);
  World w;
  w.store = cache::CacheStore(static_cast<std::uint32_t>(dim));
  std::uint32_t ord = 0;
  std::bernoulli_distribution held_out(0.15);
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items; ++i) {
      if ((u * 7 + i * 3) % 4 != 0) continue;
      const double r = std::clamp(std::round(3.3 + bu[u] + bi[i] + 0.3 * n(rng)), 1.0, 5.0);
      Interaction x{"u" + std::to_string(u), "i" + std::to_string(i), r, ord++};
      if (held_out(rng)) {
        w.validation.push_back(x);
        continue;
      }
      std::vector<float> e(dim);
      e[0] = static_cast<float>((r - 3.0) / 2.0);
      for (std::size_t c = 1; c < dim; ++c) e[c] = static_cast<float>(0.3 * n(rng));
      w.store.put(cache::Side::kUser, x.user_id, x.ordinal, e);
      w.store.put(cache::Side::kItem, x.item_id, x.ordinal, e);
      w.train.push_back(x);
    }
  }
  return w;
}

RecConfig small_config() {
  RecConfig c;
  c.layers = 2;
  c.hidden = 6;
  c.learning_rate = 0.01;
  c.batch_size = 16;
  c.epochs = 20;
  c.dropout = 0.0;
  c.k_max = 5;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("configuration defaults") {
  const RecConfig c;
  CHECK(c.layers == 4);
  CHECK(c.learning_rate == 1e-4);
  CHECK(c.batch_size == 128);
  CHECK(c.epochs == 5);
  CHECK(c.margin == 1.0);
  CHECK(c.contrastive_weight == 1.0);
  CHECK(c.dropout == 0.5);
}

TEST_CASE("a batch of one has no negative") {
  RecConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  RecModel m(3, small_config(), {"u"}, {"i"});
  std::vector<PairInput> one(1);
  one[0].user_history = history_from(nn::Tensor2D(1, 3), 0, 2);
  one[0].item_history = one[0].user_history;
  CHECK_THROWS_AS(batch_loss(m, one, {0}, nullptr, false), Error);
}

TEST_CASE("fuse returns p for a miss") {
  nn::Rng rng(1);
  const auto p = random_tensor(1, 4, rng);
  const auto blocks = random_blocks(3, 4, rng);
  CHECK(fuse(p, history_from(nn::Tensor2D(1, 4), 0, 6), blocks) == p);
}

TEST_CASE("fuse throws on a fully masked history without the miss flag") {
  nn::Rng rng(1);
  auto h = history_from(nn::Tensor2D(1, 4), 0, 3);
  h.miss = false;
  CHECK_THROWS_AS(fuse(nn::Tensor2D(1, 4), h, random_blocks(1, 4, rng)), Error);
}

TEST_CASE("single row with zero query input returns the row's value projection") {
  nn::Rng rng(2);
  const auto row = random_tensor(1, 4, rng);
  const auto blocks = random_blocks(1, 4, rng);
  const auto out = fuse(nn::Tensor2D(1, 4), history_from(row, 1, 5), blocks);
  const auto want = nn::matmul(row, blocks[0].wv.value);
  for (std::size_t j = 0; j < 4; ++j) CHECK(out(0, j) == doctest::Approx(want(0, j)).epsilon(1e-12));
}

TEST_CASE("residual identity with a zero history and zero projections") {
  nn::Rng rng(3);
  const auto p = random_tensor(1, 4, rng);
  std::vector<AttentionBlock> zero(2, AttentionBlock{nn::Parameter("q", 4, 4), nn::Parameter("k", 4, 4),
                                                     nn::Parameter("v", 4, 4)});
  CHECK(fuse(p, history_from(nn::Tensor2D(1, 4), 1, 3), zero) == p);
}

TEST_CASE("one block agrees with a brute-force transcription") {
  nn::Rng rng(4);
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::size_t d = 2 + trial % 4, len = 1 + trial % 6;
    const auto p = random_tensor(1, d, rng);
    const auto rows = random_tensor(len, d, rng);
    const auto blocks = random_blocks(1, d, rng);
    const auto got = fuse(p, history_from(rows, len, 8), blocks);
    const auto want = naive_block(p, rows, len, blocks[0]);
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(got(0, j) - want[j]) < 1e-10);
  }
}

TEST_CASE("fuse is invariant to padding beyond the real rows") {
  nn::Rng rng(5);
  const auto p = random_tensor(1, 4, rng);
  const auto rows = random_tensor(7, 4, rng);
  const auto blocks = random_blocks(4, 4, rng);
  const auto a = fuse(p, history_from(rows, 7, 10), blocks);
  const auto b = fuse(p, history_from(rows, 7, 20), blocks);
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(a(0, j) - b(0, j)) < 1e-10);
}

TEST_CASE("fuse backward passes a finite-difference check") {
  nn::Rng rng(6);
  const std::size_t d = 3;
  const auto p0 = random_tensor(1, d, rng);
  const auto h = history_from(random_tensor(4, d, rng), 4, 6);
  auto blocks = random_blocks(2, d, rng);
  const auto target = random_tensor(1, d, rng);
  std::vector<nn::Parameter*> params;
  for (auto& b : blocks)
    for (auto* q : {&b.wq, &b.wk, &b.wv}) params.push_back(q);
  nn::zero_grads(params);
  const auto t = fuse_forward(p0, h, blocks, 0.0, nullptr);
  const auto dp = fuse_backward(t, h, blocks, nn::mse_grad(t.output, target));
  auto exact = nn::flatten_grads(params);
  exact.insert(exact.end(), dp.values().begin(), dp.values().end());
  auto x = nn::flatten_values(params);
  x.insert(x.end(), p0.values().begin(), p0.values().end());
  const std::size_t np = x.size() - d;
  const nn::ScalarFn f = [&](std::span<const double> v) {
    nn::assign_values(params, v.first(np));
    const nn::Tensor2D p(1, d, {v.begin() + static_cast<std::ptrdiff_t>(np), v.end()});
    return nn::mse(fuse(p, h, blocks), target);
  };
  CHECK(nn::grad_check(f, x, exact) < 1e-6);
}

TEST_CASE("contrastive loss: hand examples") {
  const std::vector<double> v{0.0}, p{std::sqrt(0.5)}, n{std::sqrt(0.2)};
  CHECK(contrastive_loss(v, p, n, 1.0) == doctest::Approx(1.3));
  CHECK(contrastive_loss(v, v, std::vector<double>{1.5}, 1.0) == 0.0);
  const std::vector<double> a{0.3, -0.7}, b{1.1, 0.2};
  CHECK(contrastive_loss(a, b, b, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("contrastive loss is non-negative and zero exactly when the margin holds") {
  nn::Rng rng(7);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> a(3), p(3), q(3);
    for (std::size_t j = 0; j < 3; ++j) {
      a[j] = n(rng);
      p[j] = n(rng);
      q[j] = n(rng);
    }
    const double l = contrastive_loss(a, p, q, 1.0);
    CHECK(l >= 0.0);
    const bool satisfied = nn::squared_distance(a, q) - nn::squared_distance(a, p) >= 1.0;
    CHECK((l == 0.0) == satisfied);
  }
}

TEST_CASE("contrastive gradient matches finite differences when active") {
  const std::vector<double> x{0.1, 0.4, -0.2, 0.3, 0.0, 0.5, -0.4, 0.2, 0.6};
  const auto g = contrastive_loss_grad(std::span(x).first(3), std::span(x).subspan(3, 3), std::span(x).subspan(6, 3), 1.0);
  REQUIRE(g.loss > 0.0);
  std::vector<double> exact = g.d_anchor;
  exact.insert(exact.end(), g.d_positive.begin(), g.d_positive.end());
  exact.insert(exact.end(), g.d_negative.begin(), g.d_negative.end());
  const nn::ScalarFn f = [](std::span<const double> v) {
    return contrastive_loss(v.first(3), v.subspan(3, 3), v.subspan(6, 3), 1.0);
  };
  CHECK(nn::grad_check(f, x, exact) < 1e-7);
}

TEST_CASE("an untrained zero model predicts its projector bias") {
  const World w = make_world(4, 1);
  RecModel m(4, small_config(), {"u0", "u1"}, {"i0"});
  m.projector_out.bias.value(0, 0) = 3.7;
  CHECK(predict(m, w.store, "u0", "i0") == doctest::Approx(3.7));
  CHECK(predict(m, w.store, "u9", "i5") == doctest::Approx(3.7));
  CHECK(predict(m, w.store, "nobody", "nothing") == doctest::Approx(3.7));
}

TEST_CASE("predictions are deterministic and clamped") {
  const World w = make_world(4, 2);
  RecModel m(4, small_config(), {"u0", "u1"}, {"i0", "i1"});
  nn::Rng rng(1);
  m.initialize(3.0, rng);
  CHECK(predict(m, w.store, "u1", "i0") == predict(m, w.store, "u1", "i0"));
  m.projector_out.bias.value(0, 0) = 40.0;
  CHECK(predict(m, w.store, "u1", "i0") == 5.0);
  CHECK(m.user_row("zzz") == m.cold_user_row());
}

TEST_CASE("contrastive weight zero reduces the loss to squared error") {
  const World w = make_world(4, 3);
  auto cfg = small_config();
  cfg.contrastive_weight = 0.0;
  RecModel m(4, cfg, {"u0", "u1", "u2"}, {"i0", "i1", "i2", "i3"});
  nn::Rng rng(2);
  m.initialize(3.0, rng);
  std::vector<PairInput> batch;
  for (std::size_t k = 0; k < 4; ++k) batch.push_back(make_pair_input(m, w.store, w.train[k], true));
  double se = 0.0;
  for (const auto& in : batch) se += std::pow(score(m, in) - in.rating, 2);
  CHECK(batch_loss(m, batch, {1, 0, 3, 2}, nullptr, false) == doctest::Approx(se / 4.0).epsilon(1e-12));
}

TEST_CASE("full training loss gradient passes a finite-difference check") {
  const World w = make_world(3, 4);
  auto cfg = small_config();
  cfg.hidden = 4;
  cfg.margin = 5.0;  // keeps every hinge active, away from its kink
  std::vector<std::string> users, items;
  for (int k = 0; k < 30; ++k) users.push_back("u" + std::to_string(k));
  for (int k = 0; k < 20; ++k) items.push_back("i" + std::to_string(k));
  RecModel m(3, cfg, users, items);
  nn::Rng rng(3);
  m.initialize(3.0, rng);
  std::vector<PairInput> batch;
  for (std::size_t k = 0; k < 4; ++k) batch.push_back(make_pair_input(m, w.store, w.train[k * 5], true));
  const std::vector<std::size_t> neg{2, 3, 0, 1};
  auto params = m.parameters();
  nn::zero_grads(params);
  batch_loss(m, batch, neg, nullptr, true);
  const auto exact = nn::flatten_grads(params);
  const nn::ScalarFn f = [&](std::span<const double> x) {
    nn::assign_values(params, x);
    return batch_loss(m, batch, neg, nullptr, false);
  };
  CHECK(nn::grad_check(f, nn::flatten_values(params), exact) < 1e-4);
}

TEST_CASE("metrics: perfect, hand example, variance identity, empty") {
  const std::vector<double> t{1, 2, 3};
  const auto perfect = compute_metrics(t, t);
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.mae == 0.0);
  const auto m = compute_metrics(std::vector<double>{1, 2}, std::vector<double>{2, 4});
  CHECK(m.mse == doctest::Approx(2.5));
  CHECK(m.mae == doctest::Approx(1.5));
  CHECK(m.count == 2);
  const std::vector<double> y{1, 5, 4, 4, 2, 5};
  const double mean = 21.0 / 6.0;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  CHECK(compute_metrics(std::vector<double>(6, mean), y).mse == doctest::Approx(var / 6.0));
  CHECK_THROWS_AS(compute_metrics({}, {}), Error);
}

TEST_CASE("training beats the global mean and is deterministic") {
  const World w = make_world(4, 5);
  const auto a = train_recsys(w.train, w.validation, w.store, small_config());
  const auto b = train_recsys(w.train, w.validation, w.store, small_config());
  REQUIRE(a.trace.size() == 20);
  double mean = 0.0;
  for (const auto& x : w.train) mean += x.rating;
  mean /= static_cast<double>(w.train.size());
  std::vector<double> truth;
  for (const auto& x : w.validation) truth.push_back(x.rating);
  const double baseline = compute_metrics(std::vector<double>(truth.size(), mean), truth).mse;
  CHECK(a.trace.back().validation_mse < baseline);
  CHECK(predict_all(a.model, w.store, w.validation) == predict_all(b.model, w.store, w.validation));
  CHECK(a.trace.back().train_loss == b.trace.back().train_loss);
}

TEST_CASE("model checkpoint round trip") {
  const World w = make_world(4, 6);
  auto cfg = small_config();
  cfg.epochs = 2;
  const auto res = train_recsys(w.train, w.validation, w.store, cfg);
  const auto back = RecModel::from_checkpoint(res.model.to_checkpoint());
  CHECK(predict_all(back, w.store, w.validation) == predict_all(res.model, w.store, w.validation));
  CHECK(back.config.layers == 2);
}

TEST_CASE("engagement buckets partition interactions and users") {
  std::vector<EvalRecord> rs;
  std::map<std::string, std::size_t> counts;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> len(0, 1500), cnt(1, 40);
  for (int u = 0; u < 25; ++u) {
    const std::string id = "u" + std::to_string(u);
    counts[id] = cnt(rng);
    for (int k = 0; k < 3; ++k) rs.push_back({id, 4.0, 3.5 + 0.1 * k, len(rng)});
  }
  const auto rep = analyze_by_engagement(rs, counts);
  CHECK(rep.length_edges == std::vector<std::size_t>{127, 255, 511, 1024});
  REQUIRE(rep.by_user_count.size() == 4);
  CHECK(rep.by_user_count[0].label == "<10");
  CHECK(rep.by_user_count[1].label == "10-19");
  CHECK(rep.by_user_count[3].label == ">=30");
  REQUIRE(rep.by_review_length.size() == 5);
  CHECK(rep.by_review_length[0].label == "0-127");
  CHECK(rep.by_review_length[3].label == "512-1024");
  CHECK(rep.by_review_length[4].label == ">1024");
  std::size_t users = 0, inter = 0, inter_len = 0;
  for (const auto& b : rep.by_user_count) {
    users += b.users;
    inter += b.interactions;
  }
  for (const auto& b : rep.by_review_length) inter_len += b.interactions;
  CHECK(users == 25);
  CHECK(inter == rs.size());
  CHECK(inter_len == rs.size());
}

TEST_CASE("one populated bucket reproduces the global metrics") {
  std::vector<EvalRecord> rs{{"a", 5, 4, 10}, {"b", 1, 2.5, 20}, {"a", 3, 3, 30}};
  const std::map<std::string, std::size_t> counts{{"a", 3}, {"b", 5}};
  const auto rep = analyze_by_engagement(rs, counts);
  const auto global = compute_metrics(std::vector<double>{4, 2.5, 3}, std::vector<double>{5, 1, 3});
  CHECK(rep.by_user_count[0].mse == doctest::Approx(global.mse));
  CHECK(rep.by_review_length[0].mae == doctest::Approx(global.mae));
  CHECK(rep.by_user_count[1].interactions == 0);
}

TEST_CASE("bucket edges must increase") {
  CHECK_THROWS_AS(analyze_by_engagement({}, {}, {10, 10}), Error);
}
