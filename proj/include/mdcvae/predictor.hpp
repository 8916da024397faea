#pragma once

#include <span>
#include <vector>

#include "mdcvae/eval.hpp"
#include "mdcvae/trainer.hpp"

namespace mdcvae {

struct Ranking {
    std::vector<ItemId> items;   // descending score, ties by ascending id
    std::vector<double> scores;
    bool truncated = false;  // fewer candidates than the requested M
};

// Posterior mean of q(u | r): dropout off, eps = 0. One row.
Matrix fold_in(const Model& model, std::span<const ItemId> input_items);

// Logits over the whole catalog for a fold-in user.
std::vector<double> fold_in_logits(const Model& model, std::span<const ItemId> input_items);

// Top-M over all items with the input items masked out.
Ranking recommend(const Model& model, std::span<const ItemId> input_items, std::size_t m);

// Top-M within an explicit candidate pool (input items are still excluded).
Ranking rank_within(const Model& model, std::span<const ItemId> input_items,
                    std::span<const ItemId> candidates, std::size_t m);

// Catalog extension with content-embedding surrogate weights. Requires the
// symmetric (tied) mode; returns a new model, the base is untouched.
Model extend_items(const Model& model, const FeatureMatrix& new_features);

struct EvalOptions {
    double holdout_fraction = 0.2;
    std::uint64_t seed = 0;
    std::vector<std::size_t> recall_ms = {20, 40};
    std::vector<std::size_t> ndcg_ms = {100};
};

// Fold-in evaluation over users: per-user 80/20 split of their row, ranking
// over all non-input items. Users with an empty holdout are excluded.
std::vector<MetricReport> evaluate_in_matrix(const Model& model, const RatingMatrix& rows,
                                             std::span<const UserId> users,
                                             const EvalOptions& opts);

// Separate normal-item and cold-item metrics: the holdout of the user's
// visible (normal) row is ranked among normal candidates, the user's removed
// cold interactions among cold candidates.
std::vector<MetricReport> coldstart_eval(const Model& model, const ColdPartition& partition,
                                         std::span<const UserId> users, const EvalOptions& opts);

}  // namespace mdcvae
