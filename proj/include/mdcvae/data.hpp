#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdcvae/matrix.hpp"

namespace mdcvae {

using ItemId = std::uint32_t;
using UserId = std::uint32_t;

// Deduplicated binary interactions with dense 0-based ids. External ids are
// compacted in ascending numeric order, so a canonical dump reloads to the
// identical id space.
struct InteractionSet {
    std::vector<std::pair<UserId, ItemId>> pairs;  // sorted by (user, item)
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::vector<std::int64_t> user_external_ids;  // internal -> external
    std::vector<std::int64_t> item_external_ids;
    std::size_t num_duplicates = 0;  // collapsed while loading

    double density() const {
        return num_users && num_items
                   ? static_cast<double>(pairs.size()) / (static_cast<double>(num_users) * num_items)
                   : 0.0;
    }
};

// CSR view of the binary rating matrix; values are implicitly 1.
struct RatingMatrix {
    std::vector<std::size_t> row_offsets;  // length num_users + 1
    std::vector<ItemId> col_indices;       // ascending within each row
    std::size_t num_users = 0;
    std::size_t num_items = 0;

    std::span<const ItemId> row(std::size_t i) const {
        return {col_indices.data() + row_offsets[i], col_indices.data() + row_offsets[i + 1]};
    }
    std::size_t nnz() const { return col_indices.size(); }
};

// Dense item-content matrix, one row per item.
struct FeatureMatrix {
    Matrix values;  // (num_items, feature_dim)
    std::size_t num_items() const { return values.rows; }
    std::size_t feature_dim() const { return values.cols; }
};

struct SplitRatios {
    unsigned train = 8;
    unsigned val = 1;
    unsigned test = 1;
};

struct UserSplit {
    std::vector<UserId> train_users;  // each sorted ascending
    std::vector<UserId> val_users;
    std::vector<UserId> test_users;
    std::uint64_t seed = 0;
};

struct FoldInPair {
    UserId user_id = 0;
    std::vector<ItemId> input_items;    // sorted
    std::vector<ItemId> holdout_items;  // sorted; empty => excluded from metrics
    bool excluded() const { return holdout_items.empty(); }
};

struct ColdPartition {
    std::vector<ItemId> cold_item_ids;  // sorted
    RatingMatrix train_matrix;          // cold columns zeroed
    std::vector<std::pair<UserId, ItemId>> removed_pairs;  // cold ground truth
};

struct LongTailStats {
    std::vector<std::uint64_t> per_item_counts;
    std::vector<std::pair<double, std::uint64_t>> percentiles;  // (q, count at q)
    std::uint64_t total_interactions = 0;
    double density = 0.0;
};

struct SyntheticConfig {
    std::size_t n_users = 300;
    std::size_t n_items = 200;
    std::size_t n_clusters = 5;
    std::size_t s_dim = 20;
    double sparsity = 0.25;  // fraction of a user's own cluster they interact with
    double noise = 0.1;      // feature noise sigma; also the off-cluster redirect rate
    std::uint64_t seed = 1;
};

struct SyntheticData {
    InteractionSet interactions;
    FeatureMatrix features;
    std::vector<std::uint32_t> user_clusters;
    std::vector<std::uint32_t> item_clusters;
};

InteractionSet load_interactions(const std::string& path);
void write_interactions(const std::string& path, const InteractionSet& inter);
void write_id_map(const std::string& path, const std::vector<std::int64_t>& external_ids);

RatingMatrix build_rating_matrix(const InteractionSet& inter);
RatingMatrix build_rating_matrix(std::span<const std::pair<UserId, ItemId>> pairs,
                                 std::size_t num_users, std::size_t num_items);

// expected_items = 0 skips the cross-validation against the rating matrix.
FeatureMatrix load_features(const std::string& path, std::size_t expected_items = 0);
void write_features(const std::string& path, const FeatureMatrix& fm);

UserSplit split_users(const InteractionSet& inter, SplitRatios ratios, std::uint64_t seed);
void write_split(const std::string& path, const UserSplit& split);
UserSplit load_split(const std::string& path, std::size_t num_users);

FoldInPair holdout_items(UserId user, std::span<const ItemId> row, double fraction,
                         std::uint64_t seed);

ColdPartition mark_cold_items(const InteractionSet& inter, std::size_t n_cold,
                              std::uint64_t seed);

LongTailStats density_stats(const RatingMatrix& mat,
                            std::span<const double> percentile_qs = {});

SyntheticData gen_synthetic(const SyntheticConfig& cfg);

// Random subset keeping at least one interaction per user. Density already at
// or below the target returns the input unchanged.
InteractionSet subsample_interactions(const InteractionSet& inter, double target_density,
                                      std::uint64_t seed);

// Raw per-user histories without id compaction: item ids must already be
// catalog-internal (< num_items); user keys are reported as given.
std::vector<std::pair<std::int64_t, std::vector<ItemId>>> load_user_histories(
    const std::string& path, std::size_t num_items);

}  // namespace mdcvae
