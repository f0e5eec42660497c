#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "reccot/config.hpp"
#include "reccot/error.hpp"
#include "reccot/nn/layers.hpp"
#include "scratch.hpp"

using namespace reccot;
using namespace reccot::config;

namespace {

const char* kMinimal = R"(
[experiment]
dataset = "toy"
seed = 9

[paths]
raw = data/raw.jsonl
)";

}  // namespace

TEST_CASE("minimal config takes defaults and resolves paths") {
  const auto c = parse_config(kMinimal, "/base");
  CHECK(c.dataset == "toy");
  CHECK(c.variant == Variant::kFull);
  CHECK(c.paths.raw == std::filesystem::path("/base/data/raw.jsonl"));
  CHECK(c.paths.work_dir == std::filesystem::path("/base/work"));
  CHECK(c.encoder.dim == 768);
  CHECK(c.encoder.dropout == 0.5);
  CHECK(c.recsys.layers == 4);
  CHECK(c.recsys.batch_size == 128);
  CHECK(c.split_seed() == 9);
  CHECK(c.grpo.seed == nn::derive_seed(9, 1));
  CHECK(c.encoder.seed == nn::derive_seed(9, 2));
  CHECK(c.recsys.seed == nn::derive_seed(9, 3));
}

TEST_CASE("every section parses") {
  const auto c = parse_config(R"(
# comment
; another comment
[experiment]
dataset = d
variant = no_cot_item
item_side_text = true
[paths]
raw = /abs/raw.jsonl
item_metadata = items.jsonl
work_dir = out
[corpus]
field_user = reviewerID
k_core = 3
train_ratio = 0.7
validation_ratio = 0.15
test_ratio = 0.15
seed = 77
frequency_mode = raw
[reward]
lambda = 0.25
len_min = 50
len_max = 90
floor = -2
[grpo]
group_size = 4
steps = 10
target_length = 120
[encoder]
dim = 16
buckets = 1024
[cache]
k_max = 20
[recsys]
margin = 2
reject_accidental_positives = true
)",
                              "/b");
  CHECK(c.variant == Variant::kNoCotItem);
  CHECK(c.append_item_text());
  CHECK(c.paths.raw == std::filesystem::path("/abs/raw.jsonl"));
  CHECK(c.paths.item_metadata == std::filesystem::path("/b/items.jsonl"));
  CHECK(c.corpus.schema.user == "reviewerID");
  CHECK(c.corpus.k_core == 3);
  CHECK(c.split_seed() == 77);
  CHECK(c.corpus.frequency_mode == corpus::FrequencyMode::kRaw);
  CHECK(c.reward.lambda_under == 0.25);
  CHECK(c.reward.floor_reward == -2.0);
  CHECK(c.grpo.group_size == 4);
  CHECK(c.cot_target_length == 120);
  CHECK(c.encoder.buckets == 1024);
  CHECK(c.recsys.k_max == 20);
  CHECK(c.recsys.reject_accidental_positives);
}

TEST_CASE("configuration errors name the offending key") {
  const std::string base = "[experiment]\ndataset = x\n[paths]\nraw = r\n";
  CHECK_THROWS_WITH_AS(parse_config(base + "[encoder]\ndimension = 3\n", "/"),
                       doctest::Contains("encoder.dimension"), Error);
  CHECK_THROWS_WITH_AS(parse_config(base + "[encoder]\ndim = big\n", "/"), doctest::Contains("encoder.dim"), Error);
  CHECK_THROWS_WITH_AS(parse_config(base + "[encoder]\ndim = -4\n", "/"), doctest::Contains("non-negative"), Error);
  CHECK_THROWS_WITH_AS(parse_config(base + "[recsys]\nbatch_size = 1\n", "/"), doctest::Contains("batch_size"), Error);
  CHECK_THROWS_AS(parse_config(base + "[recsys]\nreject_accidental_positives = maybe\n", "/"), Error);
  CHECK_THROWS_AS(parse_config(base + "[bogus]\nx = 1\n", "/"), Error);
  CHECK_THROWS_AS(parse_config("dataset = x\n" + base, "/"), Error);
  CHECK_THROWS_AS(parse_config(base + "[experiment]\nvariant = huge\n", "/"), Error);
  CHECK_THROWS_AS(parse_config(base + "[corpus]\ntrain_ratio = 0.5\n", "/"), Error);
  CHECK_THROWS_WITH_AS(parse_config("[experiment]\ndataset = x\n", "/"), doctest::Contains("paths.raw"), Error);
  CHECK_THROWS_AS(parse_config(base + "[reward]\nlen_min = 300\n", "/"), Error);
}

TEST_CASE("variant names and report labels") {
  for (auto v : {Variant::kFull, Variant::kNoCot, Variant::kNoCotItem, Variant::kLinearReward})
    CHECK(variant_from_string(to_string(v)) == v);
  CHECK(report_label(Variant::kFull) == "RecCoT");
  CHECK(report_label(Variant::kNoCot) == "RecCoT(w/o CoT)");
  CHECK(report_label(Variant::kNoCotItem) == "RecCoT(w/o CoT)+item");
  CHECK(report_label(Variant::kLinearReward) == "RecCoT(reward-linear)");
  CHECK_FALSE(uses_cot(Variant::kNoCot));
  CHECK(uses_cot(Variant::kLinearReward));
  CHECK(reward_policy(Variant::kLinearReward) == reward::RewardPolicy::kLinear);
}

TEST_CASE("section fingerprints only track their own section") {
  auto a = parse_config(kMinimal, "/base");
  auto b = a;
  b.recsys.learning_rate = 0.5;
  CHECK(a.section_json("recsys") != b.section_json("recsys"));
  CHECK(a.section_json("encoder") == b.section_json("encoder"));
  b.variant = Variant::kNoCot;
  CHECK(a.section_json("encoder") != b.section_json("encoder"));
  CHECK_THROWS_AS(a.section_json("nope"), Error);
}

TEST_CASE("load_config resolves against the file's directory or RECCOT_DATA_DIR") {
  ScratchDir dir("config");
  {
    std::ofstream(dir / "c.toml") << kMinimal;
  }
  ::unsetenv("RECCOT_DATA_DIR");
  CHECK(load_config(dir / "c.toml").paths.raw == dir.path() / "data/raw.jsonl");
  ::setenv("RECCOT_DATA_DIR", "/data/root", 1);
  CHECK(load_config(dir / "c.toml").paths.raw == std::filesystem::path("/data/root/data/raw.jsonl"));
  ::unsetenv("RECCOT_DATA_DIR");
}

TEST_CASE("the shipped desk config loads") {
  const auto c = load_config(RECCOT_DESK_CONFIG);
  CHECK(c.dataset == "synthetic-planted");
  CHECK(c.encoder.dim == 32);
  CHECK(c.recsys.k_max == 10);
}
