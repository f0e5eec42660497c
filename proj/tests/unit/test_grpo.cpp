#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "reccot/error.hpp"
#include "reccot/grpo.hpp"
#include "reccot/nn/grad_check.hpp"
#include "reccot/synthetic.hpp"
#include "reccot/toy_policy.hpp"
#include "scratch.hpp"

using namespace reccot;
using namespace reccot::grpo;

namespace {

std::vector<Prompt> long_tail_prompts(std::size_t n, std::uint64_t seed) {
  synthetic::LongTailConfig lc;
  lc.reviews = n;
  lc.seed = seed;
  const auto corpus = synthetic::generate_long_tail(lc);
  std::vector<Prompt> out;
  for (const auto& r : corpus.records) out.push_back({r.review_text, r.rating});
  return out;
}

corpus::RatingFrequencyTable table_for(const std::vector<Prompt>& prompts) {
  std::map<int, std::size_t> counts;
  for (const auto& p : prompts) ++counts[static_cast<int>(p.truth)];
  return {counts, corpus::FrequencyMode::kInverse};
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to),
                         0.0) /
         static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("normalize_advantages: hand examples and zero-variance guard") {
  const auto a = normalize_advantages(std::vector<double>{1, 2, 3});
  CHECK(a[0] == doctest::Approx(-1.22474).epsilon(1e-5));
  CHECK(a[1] == doctest::Approx(0.0));
  CHECK(a[2] == doctest::Approx(1.22474).epsilon(1e-5));
  CHECK(normalize_advantages(std::vector<double>{5, 5, 5, 5}) == std::vector<double>(4, 0.0));
  const auto b = normalize_advantages(std::vector<double>{0, 2});
  CHECK(b[0] == doctest::Approx(-1.0));
  CHECK(b[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(normalize_advantages(std::vector<double>{1}), Error);
}

TEST_CASE("kl_estimate closed forms and saturation") {
  CHECK(kl_estimate(-1.3, -1.3) == 0.0);
  CHECK(kl_estimate(std::log(2.0), 0.0) == doctest::Approx(2.0 - std::log(2.0) - 1.0));
  CHECK(kl_estimate(std::log(2.0), 0.0) == doctest::Approx(0.30685).epsilon(1e-4));
  CHECK(kl_estimate(std::log(0.5), 0.0) == doctest::Approx(0.19315).epsilon(1e-4));
  bool saturated = false;
  const double big = kl_estimate(0.0, -1e4, 1e8, &saturated);
  CHECK(saturated);
  CHECK(std::isfinite(big));
}

TEST_CASE("surrogate_term clipping") {
  CHECK(surrogate_term(0.0, 0.0, 0.7, 0.2) == doctest::Approx(0.7));
  CHECK(surrogate_term(std::log(1.5), 0.0, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(surrogate_term(std::log(1.5), 0.0, -1.0, 0.2) == doctest::Approx(-1.5));
  CHECK(surrogate_term(std::log(0.5), 0.0, -1.0, 0.2) == doctest::Approx(-0.8));
}

TEST_CASE("objective on a three-sample group matches a hand evaluation") {
  const ToyTemplatePolicy policy;  // all logits zero
  const double cur = -std::log(9.0);
  std::vector<CoTSample> group(3);
  const double logp_old[] = {cur - 0.5, cur + 0.1, cur};
  const double logp_ref[] = {cur + 0.3, cur - 0.2, cur};
  const double adv[] = {1.2, -0.4, -0.8};
  for (std::size_t i = 0; i < 3; ++i) {
    group[i].prompt = "good strap";
    group[i].output_text = policy.render(i * 3, group[i].prompt);
    group[i].logp_old = logp_old[i];
    group[i].logp_ref = logp_ref[i];
    group[i].advantage = adv[i];
  }
  GrpoConfig cfg;
  cfg.clip_eps = 0.2;
  cfg.kl_beta = 0.1;

  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double ratio = std::exp(cur - logp_old[i]);
    const double clipped = std::clamp(ratio, 0.8, 1.2);
    const double x = std::exp(logp_ref[i] - cur);
    want += std::min(ratio * adv[i], clipped * adv[i]) - 0.1 * (x - std::log(x) - 1.0);
  }
  want /= 3.0;
  CHECK(grpo_objective(group, policy, cfg) == doctest::Approx(want).epsilon(1e-12));

  cfg.kl_beta = 0.0;
  double surrogate = 0.0;
  for (std::size_t i = 0; i < 3; ++i) surrogate += surrogate_term(cur, logp_old[i], adv[i], 0.2);
  CHECK(grpo_objective(group, policy, cfg) == doctest::Approx(surrogate / 3.0).epsilon(1e-12));
}

TEST_CASE("on-policy objective with normalized advantages is zero") {
  ToyTemplatePolicy policy;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.5);
  std::vector<double> w(ToyTemplatePolicy::kParams);
  for (double& v : w) v = n(rng);
  policy.set_parameters(w);
  const std::string prompt = "very good strap but poor zipper";
  const auto outs = policy.sample(prompt, 6, 9);
  std::vector<CoTSample> group;
  std::vector<double> rewards;
  for (const auto& o : outs) {
    CoTSample s;
    s.prompt = prompt;
    s.output_text = o.text;
    s.logp_old = s.logp_ref = policy.log_prob(prompt, o.text);
    rewards.push_back(n(rng));
    group.push_back(s);
  }
  const auto adv = normalize_advantages(rewards);
  for (std::size_t i = 0; i < group.size(); ++i) group[i].advantage = adv[i];
  CHECK(std::abs(grpo_objective(group, policy, GrpoConfig{})) < 1e-12);
}

TEST_CASE("analytic objective gradient agrees with finite differences") {
  ToyTemplatePolicy policy;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<double> w(ToyTemplatePolicy::kParams);
  for (double& v : w) v = n(rng);
  policy.set_parameters(w);
  const std::string prompt = "not great, really poor stitching";
  std::vector<CoTSample> group;
  for (const auto& o : policy.sample(prompt, 5, 3)) {
    CoTSample s;
    s.prompt = prompt;
    s.output_text = o.text;
    s.logp_old = o.logp + n(rng) * 0.1;
    s.logp_ref = o.logp + n(rng);
    s.advantage = n(rng) * 3.0;
    group.push_back(s);
  }
  GrpoConfig cfg;
  cfg.kl_beta = 0.3;
  const auto exact = grpo_objective_gradient(group, policy, cfg);
  const nn::ScalarFn f = [&](std::span<const double> p) {
    ToyTemplatePolicy q = policy;
    q.set_parameters(p);
    return grpo_objective(group, q, cfg);
  };
  CHECK(nn::grad_check(f, w, exact, 1e-6) < 1e-4);
}

TEST_CASE("toy policy log-probs match its sampling distribution") {
  ToyTemplatePolicy policy;
  std::vector<double> w(ToyTemplatePolicy::kParams);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i % 5) - 0.2;
  policy.set_parameters(w);
  const std::string prompt = "great fabric";
  const auto p = policy.probabilities(prompt);
  for (const auto& o : policy.sample(prompt, 4, 1)) {
    CHECK(policy.log_prob(prompt, o.text) == doctest::Approx(o.logp));
  }
  CHECK(std::isinf(policy.log_prob(prompt, "free text")));
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
  CHECK(policy.sample(prompt, 8, 5)[3].text == policy.sample(prompt, 8, 5)[3].text);
}

TEST_CASE("rendered CoT is valid JSON near the target length with the aspect rationale") {
  ToyTemplatePolicy policy;
  const std::string prompt = "great stitching but cheap pricing";
  const auto out = policy.render(ToyTemplatePolicy::cell_of(3.5), prompt);
  const auto parsed = reward::parse_cot(out);
  REQUIRE(parsed);
  CHECK(parsed->rating == 3.5);
  CHECK(parsed->analysis.find("praise the material") != std::string::npos);
  CHECK(parsed->analysis.find("criticize the value") != std::string::npos);
  CHECK(parsed->analysis.size() >= 150);
}

TEST_CASE("toy policy checkpoint round trip") {
  ToyTemplatePolicy policy(ToyTemplatePolicy::Options{120, false});
  std::vector<double> w(ToyTemplatePolicy::kParams, 0.25);
  policy.set_parameters(w);
  const auto back = ToyTemplatePolicy::from_checkpoint(policy.to_checkpoint());
  CHECK(back.parameters() == policy.parameters());
  CHECK(back.options().target_length == 120);
  CHECK_FALSE(back.options().greedy_generation);
}

TEST_CASE("training raises the moving-average reward") {
  const auto prompts = long_tail_prompts(600, 21);
  const auto table = table_for(prompts);
  ToyTemplatePolicy policy, ref;
  GrpoConfig cfg;
  cfg.steps = 200;
  cfg.learning_rate = 0.05;
  cfg.seed = 5;
  const auto report = train(policy, ref, prompts, make_reward_fn(table, reward::RewardConfig{}), cfg);
  const auto trace = report.reward_trace();
  REQUIRE(trace.size() == 200);
  CHECK(mean_of(trace, 150, 200) > mean_of(trace, 0, 50));
  CHECK(report.to_csv().rfind("step,", 0) == 0);
}

TEST_CASE("zero learning rate leaves the policy untouched") {
  const auto prompts = long_tail_prompts(200, 22);
  ToyTemplatePolicy policy, ref;
  GrpoConfig cfg;
  cfg.steps = 200;
  cfg.learning_rate = 0.0;
  const auto before = policy.parameters();
  const auto report = train(policy, ref, prompts, make_reward_fn(table_for(prompts), reward::RewardConfig{}), cfg);
  CHECK(policy.parameters() == before);
  // Step rewards are i.i.d. draws from a fixed policy, so the two halves of
  // the trace differ only by sampling noise.
  const auto trace = report.reward_trace();
  const double m = mean_of(trace, 0, trace.size());
  double var = 0.0;
  for (double r : trace) var += (r - m) * (r - m);
  var /= static_cast<double>(trace.size() - 1);
  const double se = std::sqrt(2.0 * var / 100.0);
  CHECK(std::abs(mean_of(trace, 100, 200) - mean_of(trace, 0, 100)) < 4.0 * se);
}

TEST_CASE("a dominant KL penalty keeps the policy at the reference") {
  const auto prompts = long_tail_prompts(300, 23);
  ToyTemplatePolicy policy, ref;
  GrpoConfig cfg;
  cfg.steps = 150;
  cfg.learning_rate = 0.01;
  cfg.kl_beta = 1e3;
  train(policy, ref, prompts, make_reward_fn(table_for(prompts), reward::RewardConfig{}), cfg);
  const auto p = policy.parameters();
  const auto r = ref.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - r[i]));
  CHECK(worst < 0.05);
}

TEST_CASE("training validates its configuration") {
  const auto prompts = long_tail_prompts(50, 24);
  ToyTemplatePolicy policy, ref;
  GrpoConfig cfg;
  cfg.group_size = 1;
  CHECK_THROWS_AS(train(policy, ref, prompts, make_reward_fn(table_for(prompts), {}), cfg), Error);
  CHECK_THROWS_AS(train(policy, ref, {}, make_reward_fn(table_for(prompts), {}), GrpoConfig{}), Error);
}

TEST_CASE("two-fold generation is cross-fold and complete") {
  synthetic::LongTailConfig lc;
  lc.reviews = 200;
  auto records = synthetic::generate_long_tail(lc).records;
  records.resize(100);
  for (std::uint32_t i = 0; i < records.size(); ++i) records[i].ordinal = i;
  const auto sp = corpus::split(records, {0.8, 0.1, 0.1}, 5);
  REQUIRE(sp.train.size() == 80);

  std::vector<double> wa(ToyTemplatePolicy::kParams, 0.0), wb(ToyTemplatePolicy::kParams, 0.0);
  wa[0] = 3.0;   // policy A prefers the lowest cell
  wb[24] = 3.0;  // policy B prefers the highest cell
  ToyTemplatePolicy a, b;
  a.set_parameters(wa);
  b.set_parameters(wb);
  const auto table = corpus::build_frequency_table(sp.train);

  const auto train_only = generate_cot_two_fold(a, b, sp, table, {}, 1, false);
  CHECK(train_only.size() == 80);
  for (const auto& c : train_only) {
    const auto it = std::find_if(sp.train.begin(), sp.train.end(),
                                 [&](const auto& r) { return r.ordinal == c.review.ordinal; });
    REQUIRE(it != sp.train.end());
    const auto fold = sp.train_folds[static_cast<std::size_t>(it - sp.train.begin())];
    CHECK(c.generator_fold == (fold == corpus::Fold::kA ? 'B' : 'A'));
    CHECK(*c.predicted_rating == (c.generator_fold == 'A' ? 1.0 : 5.0));
  }

  const auto all = generate_cot_two_fold(a, b, sp, table, {}, 1, true);
  CHECK(all.size() == 100);
  for (const auto& c : all)
    if (c.split != "train") CHECK(c.generator_fold == 'A');

  auto one_fold = sp;
  std::fill(one_fold.train_folds.begin(), one_fold.train_folds.end(), corpus::Fold::kA);
  CHECK_THROWS_AS(generate_cot_two_fold(a, b, one_fold, table, {}, 1), Error);
}

TEST_CASE("CoT JSONL round trip") {
  ScratchDir dir("cot");
  CoTRecord r;
  r.review.user_id = "u";
  r.review.item_id = "i";
  r.review.rating = 4.0;
  r.review.review_text = "good value";
  r.split = "train";
  r.cot_text = R"({"analysis":"fine","rating":4.0})";
  r.predicted_rating = 4.0;
  r.generator_fold = 'B';
  write_cot_jsonl(dir / "cot.jsonl", {r});
  const auto back = read_cot_jsonl(dir / "cot.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].cot_text == r.cot_text);
  CHECK(back[0].generator_fold == 'B');
  CHECK(back[0].predicted_rating == 4.0);
}
