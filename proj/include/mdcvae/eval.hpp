#pragma once

#include <span>
#include <string>
#include <vector>

#include "mdcvae/data.hpp"

namespace mdcvae {

// |top-M intersect holdout| / min(M, |holdout|). holdout must be sorted and
// non-empty; users with empty holdouts are excluded upstream.
double recall_at_m(std::span<const ItemId> ranking, std::span<const ItemId> holdout,
                   std::size_t m);

// DCG@M with the (2^hit - 1) / log(r + 1) discount (natural log; the
// normalized value is base-invariant), divided by the ideal DCG@M.
double ndcg_at_m(std::span<const ItemId> ranking, std::span<const ItemId> holdout,
                 std::size_t m);

struct MetricReport {
    std::string metric;  // "recall" | "ndcg"
    std::size_t m = 0;
    std::string group = "all";  // "all" | "normal" | "cold"
    std::vector<double> per_user;
    double mean = 0.0;
    double stddev = 0.0;  // population std across included users
    std::size_t count = 0;
};

MetricReport make_report(std::string metric, std::size_t m, std::string group,
                         std::vector<double> per_user);

struct AggregateRow {
    std::string metric;
    std::size_t m = 0;
    std::string group = "all";
    std::vector<double> split_means;
    double mean = 0.0;    // across splits
    double stddev = 0.0;  // population std across splits
    std::size_t total_users = 0;
};

// Cross-split summary of reports for the same (metric, M, group).
AggregateRow aggregate(std::span<const MetricReport> per_split);

// {"split":...,"metric":...,"M":...,"group":...,"mean":...,"std":...,"n_users":...}
std::string metric_jsonl_line(const std::string& split_label, const std::string& metric,
                              std::size_t m, const std::string& group, double mean, double stddev,
                              std::size_t n_users);
std::string metric_jsonl_line(std::size_t split_index, const MetricReport& report);
std::string metric_jsonl_line(const AggregateRow& row);

}  // namespace mdcvae
