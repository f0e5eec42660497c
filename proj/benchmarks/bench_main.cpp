#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "reccot/cache.hpp"
#include "reccot/corpus.hpp"
#include "reccot/encoder.hpp"
#include "reccot/grpo.hpp"
#include "reccot/nn/attention.hpp"
#include "reccot/recsys.hpp"
#include "reccot/synthetic.hpp"
#include "reccot/toy_policy.hpp"

using namespace reccot;

namespace {

nn::Tensor2D random_tensor(std::size_t r, std::size_t c, nn::Rng& rng) {
  nn::Tensor2D t(r, c);
  nn::init_normal(t, 1.0, rng);
  return t;
}

void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  nn::Rng rng(1);
  const auto q = random_tensor(1, d, rng);
  const auto k = random_tensor(n, d, rng);
  const auto v = random_tensor(n, d, rng);
  const std::vector<bool> mask(n, true);
  for (auto _ : state) benchmark::DoNotOptimize(nn::attention(q, k, v, mask));
}
BENCHMARK(BM_Attention)->Args({10, 32})->Args({20, 32})->Args({10, 768});

void BM_FuseForward(benchmark::State& state) {
  const std::size_t d = 32, k_max = 10;
  nn::Rng rng(2);
  std::vector<recsys::AttentionBlock> blocks;
  for (int l = 0; l < state.range(0); ++l) {
    recsys::AttentionBlock b{nn::Parameter("wq", d, d), nn::Parameter("wk", d, d), nn::Parameter("wv", d, d)};
    for (auto* p : {&b.wq, &b.wk, &b.wv}) nn::init_normal(p->value, 0.2, rng);
    blocks.push_back(std::move(b));
  }
  cache::History h;
  h.matrix = random_tensor(k_max, d, rng);
  h.mask.assign(k_max, true);
  h.length = k_max;
  const auto p = random_tensor(1, d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(recsys::fuse(p, h, blocks));
}
BENCHMARK(BM_FuseForward)->Arg(1)->Arg(4);

void BM_EncoderForward(benchmark::State& state) {
  encoder::EncoderConfig cfg;
  cfg.buckets = 1u << 14;
  cfg.hidden = 64;
  cfg.dim = static_cast<std::size_t>(state.range(0));
  encoder::TextEncoder enc(cfg);
  nn::Rng rng(3);
  enc.initialize(3.0, rng);
  const auto review = synthetic::render_review(4, {}, rng);
  const auto features = encoder::featurize("The reviewer praises the fit and the fabric.", review, cfg.buckets);
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(features));
}
BENCHMARK(BM_EncoderForward)->Arg(32)->Arg(768);

void BM_Featurize(benchmark::State& state) {
  nn::Rng rng(4);
  const auto review = synthetic::render_review(2, {}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encoder::featurize("A short rationale.", review, 1u << 16));
}
BENCHMARK(BM_Featurize);

void BM_CacheEncode(benchmark::State& state) {
  const std::uint32_t dim = 32;
  const auto entries = static_cast<std::uint32_t>(state.range(0));
  nn::Rng rng(5);
  std::normal_distribution<float> n;
  cache::CacheStore store(dim);
  std::vector<float> e(dim);
  for (std::uint32_t k = 0; k < entries; ++k) {
    for (float& v : e) v = n(rng);
    store.put(cache::Side::kUser, "u" + std::to_string(k % 500), k, e);
    store.put(cache::Side::kItem, "i" + std::to_string(k % 300), k, e);
  }
  for (auto _ : state) benchmark::DoNotOptimize(cache::encode_store(store));
  state.SetItemsProcessed(state.iterations() * entries * 2);
}
BENCHMARK(BM_CacheEncode)->Arg(1000)->Arg(10000);

void BM_CacheDecode(benchmark::State& state) {
  const std::uint32_t dim = 32;
  nn::Rng rng(6);
  std::normal_distribution<float> n;
  cache::CacheStore store(dim);
  std::vector<float> e(dim);
  for (std::uint32_t k = 0; k < 10000; ++k) {
    for (float& v : e) v = n(rng);
    store.put(cache::Side::kUser, "u" + std::to_string(k % 500), k, e);
  }
  const auto bytes = cache::encode_store(store);
  for (auto _ : state) benchmark::DoNotOptimize(cache::decode_store(bytes));
}
BENCHMARK(BM_CacheDecode);

void BM_GrpoStep(benchmark::State& state) {
  synthetic::LongTailConfig lc;
  lc.reviews = 500;
  const auto records = corpus::clean_records(synthetic::generate_long_tail(lc).records);
  std::vector<grpo::Prompt> prompts;
  for (const auto& r : records) prompts.push_back({r.review_text, r.rating});
  const auto table = corpus::build_frequency_table(records);
  const auto reward_fn = grpo::make_reward_fn(table, reward::RewardConfig{});
  grpo::GrpoConfig cfg;
  cfg.group_size = static_cast<std::size_t>(state.range(0));
  cfg.steps = 10;
  const grpo::ToyTemplatePolicy ref;
  for (auto _ : state) {
    grpo::ToyTemplatePolicy policy;
    benchmark::DoNotOptimize(grpo::train(policy, ref, prompts, reward_fn, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.steps));
}
BENCHMARK(BM_GrpoStep)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
