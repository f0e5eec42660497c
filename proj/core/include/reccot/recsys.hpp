#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "reccot/cache.hpp"
#include "reccot/container.hpp"
#include "reccot/nn/layers.hpp"

// Rating predictor: ID embeddings refined by stacked cross-attention over the
// counterpart's cached review embeddings, then an MLP over the pair.
namespace reccot::recsys {

struct RecConfig {
  std::size_t layers = 4;
  std::size_t hidden = 0;  // projector width; 0 means the embedding size
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 5;
  double margin = 1.0;
  double contrastive_weight = 1.0;
  double dropout = 0.5;
  std::size_t k_max = 10;
  bool reject_accidental_positives = false;
  double init_scale = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Interaction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::uint32_t ordinal = 0;
};

// Query, key and value maps of one single-head cross-attention block.
struct AttentionBlock {
  nn::Parameter wq;
  nn::Parameter wk;
  nn::Parameter wv;
};

struct BlockTrace {
  nn::Tensor2D input;
  nn::Tensor2D query;
  nn::Tensor2D keys;
  nn::Tensor2D values;
  nn::Tensor2D weights;
  nn::Tensor2D mask;
};

struct FuseTrace {
  nn::Tensor2D output;
  std::vector<BlockTrace> blocks;
};

// x <- x + dropout(attention(x Wq, H Wk, H Wv)) for each block in order.
// A miss-flagged history returns p unchanged. Dropout only when `rng` is set.
FuseTrace fuse_forward(const nn::Tensor2D& p, const cache::History& history,
                       const std::vector<AttentionBlock>& blocks, double dropout, nn::Rng* rng);
// Accumulates block gradients and returns dL/dp.
nn::Tensor2D fuse_backward(const FuseTrace& trace, const cache::History& history,
                           std::vector<AttentionBlock>& blocks, const nn::Tensor2D& d_output);

nn::Tensor2D fuse(const nn::Tensor2D& p, const cache::History& history, const std::vector<AttentionBlock>& blocks);

// max(0, margin + |v - pos|^2 - |v - neg|^2).
double contrastive_loss(std::span<const double> anchor, std::span<const double> positive,
                        std::span<const double> negative, double margin);

struct HingeGrads {
  double loss = 0.0;
  std::vector<double> d_anchor;
  std::vector<double> d_positive;
  std::vector<double> d_negative;
};
HingeGrads contrastive_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                                 std::span<const double> negative, double margin);

class RecModel {
 public:
  RecModel() = default;
  RecModel(std::size_t dim, const RecConfig& cfg, std::vector<std::string> user_ids,
           std::vector<std::string> item_ids);

  void initialize(double rating_mean, nn::Rng& rng);

  std::size_t dim() const { return dim_; }
  // Row of an ID; unknown IDs share the final cold-start row.
  std::size_t user_row(const std::string& id) const;
  std::size_t item_row(const std::string& id) const;
  std::size_t cold_user_row() const { return user_ids_.size(); }
  std::size_t cold_item_row() const { return item_ids_.size(); }

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

  io::Checkpoint to_checkpoint() const;
  static RecModel from_checkpoint(const io::Checkpoint& ckpt);

  nn::Parameter user_table;
  nn::Parameter item_table;
  std::vector<AttentionBlock> user_blocks;  // p_u attends over the item's history
  std::vector<AttentionBlock> item_blocks;  // p_i attends over the user's history
  nn::Dense projector_hidden;
  nn::Dense projector_out;
  RecConfig config;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::map<std::string, std::size_t> user_index_;
  std::map<std::string, std::size_t> item_index_;
};

// One training or scoring instance with its histories resolved.
struct PairInput {
  std::size_t user_row = 0;
  std::size_t item_row = 0;
  double rating = 0.0;
  cache::History user_history;  // H_u
  cache::History item_history;  // H_i
};

PairInput make_pair_input(const RecModel& model, const cache::CacheStore& store, const Interaction& x,
                          bool exclude_self);

struct PairTrace {
  FuseTrace user;  // v_u
  FuseTrace item;  // v_i
  nn::Tensor2D joint;
  nn::Tensor2D hidden;
  double rating = 0.0;
};

PairTrace pair_forward(const RecModel& model, const PairInput& in, nn::Rng* rng);

// Unclamped score of the pair in eval mode.
double score(const RecModel& model, const PairInput& in);
// Inference prediction, clamped to [1, 5].
double predict(const RecModel& model, const cache::CacheStore& store, const std::string& user_id,
               const std::string& item_id);

// Mean over the batch of (r_hat - r)^2 + w * (hinge_u + hinge_i) / 2, where
// negatives[b] names the in-batch partner whose IDs serve as negatives.
// With `accumulate` set, adds gradients to the model parameters.
double batch_loss(RecModel& model, const std::vector<PairInput>& batch, const std::vector<std::size_t>& negatives,
                  nn::Rng* rng, bool accumulate);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
};

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets);

struct RecEpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_mse = 0.0;
  double validation_mae = 0.0;
};

struct RecTrainResult {
  RecModel model;
  std::vector<RecEpochStats> trace;
};

// The store must hold train-split reviews only; each training pair's own
// review is excluded from both of its histories.
RecTrainResult train_recsys(const std::vector<Interaction>& train, const std::vector<Interaction>& validation,
                            const cache::CacheStore& store, const RecConfig& cfg);

std::vector<double> predict_all(const RecModel& model, const cache::CacheStore& store,
                                const std::vector<Interaction>& part);
Metrics evaluate(const RecModel& model, const cache::CacheStore& store, const std::vector<Interaction>& part);

struct EvalRecord {
  std::string user_id;
  double truth = 0.0;
  double prediction = 0.0;
  std::size_t review_length = 0;  // code points
};

struct BucketMetrics {
  std::string label;
  std::size_t interactions = 0;
  std::size_t users = 0;
  double mse = 0.0;
  double mae = 0.0;
};

struct EngagementReport {
  std::vector<std::size_t> count_edges;
  std::vector<std::size_t> length_edges;
  std::vector<BucketMetrics> by_user_count;
  std::vector<BucketMetrics> by_review_length;
};

inline const std::vector<std::size_t> kDefaultCountEdges{10, 20, 30};
inline const std::vector<std::size_t> kDefaultLengthEdges{127, 255, 511, 1024};

// User-count buckets are half-open [e_k, e_{k+1}); a user's count comes from
// `user_counts` (missing users count 0). Length buckets use inclusive upper
// edges, with one overflow bucket past the last edge.
EngagementReport analyze_by_engagement(const std::vector<EvalRecord>& records,
                                       const std::map<std::string, std::size_t>& user_counts,
                                       const std::vector<std::size_t>& count_edges = kDefaultCountEdges,
                                       const std::vector<std::size_t>& length_edges = kDefaultLengthEdges);

}  // namespace reccot::recsys
