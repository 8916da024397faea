#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mdcvae/errors.hpp"
#include "mdcvae/eval.hpp"
#include "mdcvae/rng.hpp"

using namespace mdcvae;

namespace {

// Brute-force oracle: walk every rank position explicitly.
double recall_bf(std::span<const ItemId> ranking, const std::set<ItemId>& holdout, std::size_t m) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranking.size(); ++r)
        if (r < m && holdout.count(ranking[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(std::min(m, holdout.size()));
}

double ndcg_bf(std::span<const ItemId> ranking, const std::set<ItemId>& holdout, std::size_t m,
               double log_base) {
    auto discount = [&](std::size_t rank1) {
        return std::log(static_cast<double>(rank1 + 1)) / std::log(log_base);
    };
    double dcg = 0.0;
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        if (r >= m) break;
        const double hit = holdout.count(ranking[r]) ? 1.0 : 0.0;
        dcg += (std::pow(2.0, hit) - 1.0) / discount(r + 1);
    }
    double ideal = 0.0;
    for (std::size_t r = 0; r < std::min(m, holdout.size()); ++r) ideal += 1.0 / discount(r + 1);
    return dcg / ideal;
}

}  // namespace

TEST_CASE("recall_at_m: closed-form cases") {
    const std::vector<ItemId> ranking = {4, 1, 3, 0, 2};
    const std::vector<ItemId> hold_all = {1, 4};
    CHECK(recall_at_m(ranking, hold_all, 2) == 1.0);  // everything relevant in top M

    const std::vector<ItemId> hold_ab = {2, 4};
    CHECK(recall_at_m(ranking, hold_ab, 1) == 1.0);  // 1 hit / min(1, 2)

    const std::vector<ItemId> hold_none = {7, 9};
    CHECK(recall_at_m(ranking, hold_none, 5) == 0.0);

    CHECK_THROWS_AS(recall_at_m(ranking, {}, 3), config_error);
    CHECK_THROWS_AS(recall_at_m(ranking, hold_all, 0), config_error);
}

TEST_CASE("recall_at_m: bounded, and monotone once M covers the holdout") {
    // Below |holdout| the min(M, |holdout|) denominator grows with M, so the
    // ratio can shrink; from M = |holdout| on it is non-decreasing.
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        std::vector<ItemId> ranking(12);
        for (std::size_t j = 0; j < 12; ++j) ranking[j] = static_cast<ItemId>(j);
        rng.shuffle(ranking);
        std::vector<ItemId> holdout;
        for (ItemId j = 0; j < 12; ++j)
            if (rng.uniform() < 0.3) holdout.push_back(j);
        if (holdout.empty()) holdout.push_back(static_cast<ItemId>(rng.below(12)));
        double prev = 0.0;
        for (std::size_t m = 1; m <= 12; ++m) {
            const double r = recall_at_m(ranking, holdout, m);
            CHECK(r >= 0.0);
            CHECK(r <= 1.0);
            if (m > holdout.size()) CHECK(r >= prev);
            prev = r;
        }
    }
}

TEST_CASE("ndcg_at_m: closed-form cases") {
    const std::vector<ItemId> perfect = {1, 4, 0, 2, 3};
    const std::vector<ItemId> holdout = {1, 4};
    CHECK(ndcg_at_m(perfect, holdout, 5) == doctest::Approx(1.0).epsilon(1e-15));

    // single relevant item at rank 2: log(2)/log(3)
    const std::vector<ItemId> ranking = {0, 7, 2};
    const std::vector<ItemId> one = {7};
    CHECK(ndcg_at_m(ranking, one, 3) ==
          doctest::Approx(std::log(2.0) / std::log(3.0)).epsilon(1e-12));

    const std::vector<ItemId> none = {5, 6};
    CHECK(ndcg_at_m(ranking, none, 3) == 0.0);
}

TEST_CASE("metrics match the brute-force oracle exactly on 1000 random instances") {
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t j = 5 + rng.below(16);  // catalog size <= 20
        std::vector<ItemId> ranking(j);
        for (std::size_t i = 0; i < j; ++i) ranking[i] = static_cast<ItemId>(i);
        rng.shuffle(ranking);
        if (rng.uniform() < 0.3) ranking.resize(1 + rng.below(j));  // partial rankings too

        std::set<ItemId> holdout;
        const std::size_t h = 1 + rng.below(j);
        while (holdout.size() < h) holdout.insert(static_cast<ItemId>(rng.below(j)));
        const std::vector<ItemId> holdout_sorted(holdout.begin(), holdout.end());

        const std::size_t m = 1 + rng.below(j + 3);

        CHECK(recall_at_m(ranking, holdout_sorted, m) == recall_bf(ranking, holdout, m));

        const double mine = ndcg_at_m(ranking, holdout_sorted, m);
        const double oracle_e = ndcg_bf(ranking, holdout, m, std::exp(1.0));
        CHECK(mine == doctest::Approx(oracle_e).epsilon(1e-14));

        // base invariance: natural log vs base 2
        const double oracle_2 = ndcg_bf(ranking, holdout, m, 2.0);
        CHECK(std::abs(mine - oracle_2) <= 1e-12);
    }
}

TEST_CASE("make_report: mean and population std over included users") {
    const auto rep = make_report("recall", 20, "all", {0.0, 1.0});
    CHECK(rep.mean == 0.5);
    CHECK(rep.stddev == doctest::Approx(0.5));
    CHECK(rep.count == 2);

    const auto single = make_report("recall", 20, "all", {0.7});
    CHECK(single.mean == 0.7);
    CHECK(single.stddev == 0.0);
}

TEST_CASE("aggregate: cross-split means match a hand-computed fixture") {
    // ten split means laid out by hand
    const double means[] = {0.30, 0.28, 0.33, 0.35, 0.29, 0.31, 0.27, 0.34, 0.32, 0.31};
    std::vector<MetricReport> reports;
    for (double m : means) {
        MetricReport rep;
        rep.metric = "recall";
        rep.m = 20;
        rep.group = "all";
        rep.per_user = {m};
        rep.mean = m;
        rep.count = 5;
        reports.push_back(rep);
    }
    const auto row = aggregate(reports);
    CHECK(row.mean == doctest::Approx(0.31).epsilon(1e-12));
    // population std computed by hand: sqrt(E[x^2] - mean^2)
    double sq = 0;
    for (double m : means) sq += (m - 0.31) * (m - 0.31);
    CHECK(row.stddev == doctest::Approx(std::sqrt(sq / 10.0)).epsilon(1e-12));
    CHECK(row.total_users == 50);
    CHECK(row.split_means.size() == 10);

    const auto one = aggregate(std::span<const MetricReport>(reports.data(), 1));
    CHECK(one.mean == 0.30);
    CHECK(one.stddev == 0.0);
}

TEST_CASE("metric_jsonl_line: stable field order and content") {
    MetricReport rep = make_report("recall", 20, "normal", {0.5, 0.7});
    const std::string line = metric_jsonl_line(3, rep);
    CHECK(line ==
          "{\"split\":3,\"metric\":\"recall\",\"M\":20,\"group\":\"normal\",\"mean\":0.6,"
          "\"std\":0.09999999999999998,\"n_users\":2}");
}
