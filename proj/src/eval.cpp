#include "mdcvae/eval.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "mdcvae/errors.hpp"

namespace mdcvae {

namespace {

bool contains(std::span<const ItemId> sorted, ItemId id) {
    return std::binary_search(sorted.begin(), sorted.end(), id);
}

}  // namespace

double recall_at_m(std::span<const ItemId> ranking, std::span<const ItemId> holdout,
                   std::size_t m) {
    if (holdout.empty()) throw config_error("recall_at_m: empty holdout");
    if (m == 0) throw config_error("recall_at_m: M must be >= 1");
    std::size_t hits = 0;
    const std::size_t top = std::min(m, ranking.size());
    for (std::size_t r = 0; r < top; ++r)
        if (contains(holdout, ranking[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(std::min(m, holdout.size()));
}

double ndcg_at_m(std::span<const ItemId> ranking, std::span<const ItemId> holdout,
                 std::size_t m) {
    if (holdout.empty()) throw config_error("ndcg_at_m: empty holdout");
    if (m == 0) throw config_error("ndcg_at_m: M must be >= 1");
    double dcg = 0.0;
    const std::size_t top = std::min(m, ranking.size());
    for (std::size_t r = 0; r < top; ++r)
        if (contains(holdout, ranking[r])) dcg += 1.0 / std::log(static_cast<double>(r + 2));
    double ideal = 0.0;
    const std::size_t ideal_top = std::min(m, holdout.size());
    for (std::size_t r = 0; r < ideal_top; ++r) ideal += 1.0 / std::log(static_cast<double>(r + 2));
    return dcg / ideal;
}

MetricReport make_report(std::string metric, std::size_t m, std::string group,
                         std::vector<double> per_user) {
    MetricReport rep;
    rep.metric = std::move(metric);
    rep.m = m;
    rep.group = std::move(group);
    rep.per_user = std::move(per_user);
    rep.count = rep.per_user.size();
    if (rep.count) {
        double s = 0.0;
        for (double v : rep.per_user) s += v;
        rep.mean = s / static_cast<double>(rep.count);
        double sq = 0.0;
        for (double v : rep.per_user) sq += (v - rep.mean) * (v - rep.mean);
        rep.stddev = std::sqrt(sq / static_cast<double>(rep.count));
    }
    return rep;
}

AggregateRow aggregate(std::span<const MetricReport> per_split) {
    if (per_split.empty()) throw config_error("aggregate: no reports");
    AggregateRow row;
    row.metric = per_split.front().metric;
    row.m = per_split.front().m;
    row.group = per_split.front().group;
    for (const auto& rep : per_split) {
        if (rep.metric != row.metric || rep.m != row.m || rep.group != row.group)
            throw config_error("aggregate: mixed metric identities");
        row.split_means.push_back(rep.mean);
        row.total_users += rep.count;
    }
    double s = 0.0;
    for (double v : row.split_means) s += v;
    row.mean = s / static_cast<double>(row.split_means.size());
    double sq = 0.0;
    for (double v : row.split_means) sq += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(sq / static_cast<double>(row.split_means.size()));
    return row;
}

std::string metric_jsonl_line(const std::string& split_label, const std::string& metric,
                              std::size_t m, const std::string& group, double mean, double stddev,
                              std::size_t n_users) {
    nlohmann::ordered_json j;
    j["split"] = split_label;
    j["metric"] = metric;
    j["M"] = m;
    j["group"] = group;
    j["mean"] = mean;
    j["std"] = stddev;
    j["n_users"] = n_users;
    return j.dump();
}

std::string metric_jsonl_line(std::size_t split_index, const MetricReport& report) {
    nlohmann::ordered_json j;
    j["split"] = split_index;
    j["metric"] = report.metric;
    j["M"] = report.m;
    j["group"] = report.group;
    j["mean"] = report.mean;
    j["std"] = report.stddev;
    j["n_users"] = report.count;
    return j.dump();
}

std::string metric_jsonl_line(const AggregateRow& row) {
    return metric_jsonl_line("all", row.metric, row.m, row.group, row.mean, row.stddev,
                             row.total_users);
}

}  // namespace mdcvae
