#include "mdcvae/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "mdcvae/errors.hpp"
#include "mdcvae/rng.hpp"

namespace mdcvae {

Matrix fold_in(const Model& model, std::span<const ItemId> input_items) {
    const std::span<const ItemId> rows[] = {input_items};
    return model.user_vae.encode(rows).mu;  // encode() runs without dropout
}

std::vector<double> fold_in_logits(const Model& model, std::span<const ItemId> input_items) {
    const Matrix logits = model.user_vae.decode_logits(fold_in(model, input_items));
    return {logits.a.begin(), logits.a.end()};
}

namespace {

Ranking rank_candidates(const std::vector<double>& logits,
                        std::span<const ItemId> input_items,
                        std::span<const ItemId> candidates, std::size_t m) {
    if (m == 0) throw config_error("recommend: M must be >= 1");
    std::vector<std::pair<double, ItemId>> scored;
    scored.reserve(candidates.size());
    for (ItemId j : candidates) {
        if (std::binary_search(input_items.begin(), input_items.end(), j)) continue;
        scored.emplace_back(logits[j], j);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });

    Ranking r;
    r.truncated = scored.size() < m;
    const std::size_t top = std::min(m, scored.size());
    r.items.reserve(top);
    r.scores.reserve(top);
    for (std::size_t t = 0; t < top; ++t) {
        r.items.push_back(scored[t].second);
        r.scores.push_back(scored[t].first);
    }
    return r;
}

}  // namespace

Ranking recommend(const Model& model, std::span<const ItemId> input_items, std::size_t m) {
    std::vector<ItemId> all(model.num_items());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<ItemId>(j);
    return rank_candidates(fold_in_logits(model, input_items), input_items, all, m);
}

Ranking rank_within(const Model& model, std::span<const ItemId> input_items,
                    std::span<const ItemId> candidates, std::size_t m) {
    return rank_candidates(fold_in_logits(model, input_items), input_items, candidates, m);
}

Model extend_items(const Model& model, const FeatureMatrix& new_features) {
    if (model.config.mode != TieMode::symmetric)
        throw config_error(
            "add-items requires the symmetric (tied) mode: an untied first/last layer has no "
            "weights for unseen items, so the model must wait for interactions and be retrained");
    if (new_features.feature_dim() != model.feature_dim)
        throw data_error("extend_items: feature dim " + std::to_string(new_features.feature_dim()) +
                         " != model's " + std::to_string(model.feature_dim));

    Model out = model;
    if (new_features.num_items() == 0) return out;

    const GaussianPosterior post = model.item_vae.encode(new_features.values);
    const double* old_bias = model.user_vae.item_bias().row(0);
    double bias_mean = 0.0;
    for (std::size_t j = 0; j < model.num_items(); ++j) bias_mean += old_bias[j];
    bias_mean /= static_cast<double>(model.num_items());

    out.user_vae.append_items(post.mu, bias_mean);
    return out;
}

namespace {

void append_user_metrics(const Model& model, std::span<const ItemId> input,
                         std::span<const ItemId> holdout, std::span<const ItemId> candidates,
                         const EvalOptions& opts,
                         std::vector<std::vector<double>>& recall_values,
                         std::vector<std::vector<double>>& ndcg_values) {
    std::size_t max_m = 0;
    for (std::size_t m : opts.recall_ms) max_m = std::max(max_m, m);
    for (std::size_t m : opts.ndcg_ms) max_m = std::max(max_m, m);

    const auto logits = fold_in_logits(model, input);
    const Ranking ranked = rank_candidates(logits, input, candidates, max_m);
    for (std::size_t k = 0; k < opts.recall_ms.size(); ++k)
        recall_values[k].push_back(recall_at_m(ranked.items, holdout, opts.recall_ms[k]));
    for (std::size_t k = 0; k < opts.ndcg_ms.size(); ++k)
        ndcg_values[k].push_back(ndcg_at_m(ranked.items, holdout, opts.ndcg_ms[k]));
}

std::vector<MetricReport> build_reports(const EvalOptions& opts, const std::string& group,
                                        std::vector<std::vector<double>>& recall_values,
                                        std::vector<std::vector<double>>& ndcg_values) {
    std::vector<MetricReport> reports;
    for (std::size_t k = 0; k < opts.recall_ms.size(); ++k)
        reports.push_back(
            make_report("recall", opts.recall_ms[k], group, std::move(recall_values[k])));
    for (std::size_t k = 0; k < opts.ndcg_ms.size(); ++k)
        reports.push_back(make_report("ndcg", opts.ndcg_ms[k], group, std::move(ndcg_values[k])));
    return reports;
}

}  // namespace

std::vector<MetricReport> evaluate_in_matrix(const Model& model, const RatingMatrix& rows,
                                             std::span<const UserId> users,
                                             const EvalOptions& opts) {
    if (rows.num_items != model.num_items())
        throw data_error("evaluate_in_matrix: catalog size mismatch");
    std::vector<ItemId> all(model.num_items());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<ItemId>(j);

    std::vector<std::vector<double>> recall_values(opts.recall_ms.size());
    std::vector<std::vector<double>> ndcg_values(opts.ndcg_ms.size());
    for (UserId u : users) {
        const auto row = rows.row(u);
        if (row.empty()) continue;
        const FoldInPair pair = holdout_items(u, row, opts.holdout_fraction, opts.seed);
        if (pair.excluded()) continue;
        append_user_metrics(model, pair.input_items, pair.holdout_items, all, opts, recall_values,
                            ndcg_values);
    }
    return build_reports(opts, "all", recall_values, ndcg_values);
}

std::vector<MetricReport> coldstart_eval(const Model& model, const ColdPartition& partition,
                                         std::span<const UserId> users, const EvalOptions& opts) {
    const RatingMatrix& rows = partition.train_matrix;
    if (rows.num_items != model.num_items())
        throw data_error("coldstart_eval: catalog size mismatch");

    std::vector<char> is_cold(model.num_items(), 0);
    for (ItemId j : partition.cold_item_ids) is_cold[j] = 1;
    std::vector<ItemId> normal_candidates;
    for (std::size_t j = 0; j < model.num_items(); ++j)
        if (!is_cold[j]) normal_candidates.push_back(static_cast<ItemId>(j));

    std::vector<std::vector<ItemId>> cold_truth(rows.num_users);
    for (const auto& [u, j] : partition.removed_pairs) cold_truth[u].push_back(j);
    for (auto& v : cold_truth) std::sort(v.begin(), v.end());

    std::vector<std::vector<double>> ni_recall(opts.recall_ms.size());
    std::vector<std::vector<double>> ni_ndcg(opts.ndcg_ms.size());
    std::vector<std::vector<double>> ci_recall(opts.recall_ms.size());
    std::vector<std::vector<double>> ci_ndcg(opts.ndcg_ms.size());

    for (UserId u : users) {
        const auto row = rows.row(u);
        if (row.empty()) continue;  // all of this user's items went cold
        const FoldInPair pair = holdout_items(u, row, opts.holdout_fraction, opts.seed);
        if (!pair.excluded())
            append_user_metrics(model, pair.input_items, pair.holdout_items, normal_candidates,
                                opts, ni_recall, ni_ndcg);
        if (!cold_truth[u].empty())
            append_user_metrics(model, pair.input_items, cold_truth[u], partition.cold_item_ids,
                                opts, ci_recall, ci_ndcg);
    }

    auto reports = build_reports(opts, "normal", ni_recall, ni_ndcg);
    auto cold_reports = build_reports(opts, "cold", ci_recall, ci_ndcg);
    reports.insert(reports.end(), std::make_move_iterator(cold_reports.begin()),
                   std::make_move_iterator(cold_reports.end()));
    return reports;
}

}  // namespace mdcvae
