#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "mdcvae/data.hpp"
#include "mdcvae/errors.hpp"
#include "mdcvae/rng.hpp"

using namespace mdcvae;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& content) {
        static int counter = 0;
        path = (std::filesystem::temp_directory_path() /
                ("mdcvae_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
                   .string();
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_interactions: toy file") {
    TempFile f("0\t0\n0\t1\n1\t1\n");
    const auto inter = load_interactions(f.path);
    CHECK(inter.num_users == 2);
    CHECK(inter.num_items == 2);
    CHECK(inter.pairs.size() == 3);
    CHECK(inter.num_duplicates == 0);
}

TEST_CASE("load_interactions: comments, duplicates, and external id compaction") {
    TempFile f("# a comment\n100\t7\n100\t7\n5\t7\n100\t3\n");
    const auto inter = load_interactions(f.path);
    CHECK(inter.num_users == 2);
    CHECK(inter.num_items == 2);
    CHECK(inter.pairs.size() == 3);
    CHECK(inter.num_duplicates == 1);
    // ascending numeric compaction
    CHECK(inter.user_external_ids == std::vector<std::int64_t>{5, 100});
    CHECK(inter.item_external_ids == std::vector<std::int64_t>{3, 7});
}

TEST_CASE("load_interactions: malformed line reports its number") {
    TempFile f("a\t3\n");
    try {
        load_interactions(f.path);
        FAIL("expected data_error");
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find(":1") != std::string::npos);
    }
}

TEST_CASE("load_interactions: empty file is an error") {
    TempFile f("# only comments\n");
    CHECK_THROWS_AS(load_interactions(f.path), data_error);
}

TEST_CASE("interactions round-trip through the canonical format") {
    // Random pairs covering every user and item id, so compaction is identity.
    Rng rng(11);
    InteractionSet inter;
    inter.num_users = 23;
    inter.num_items = 17;
    std::set<std::pair<UserId, ItemId>> uniq;
    for (std::size_t u = 0; u < inter.num_users; ++u)
        uniq.emplace(static_cast<UserId>(u), static_cast<ItemId>(u % inter.num_items));
    for (std::size_t j = 0; j < inter.num_items; ++j)
        uniq.emplace(static_cast<UserId>(j % inter.num_users), static_cast<ItemId>(j));
    for (int k = 0; k < 60; ++k)
        uniq.emplace(static_cast<UserId>(rng.below(inter.num_users)),
                     static_cast<ItemId>(rng.below(inter.num_items)));
    inter.pairs.assign(uniq.begin(), uniq.end());

    TempFile f("");
    write_interactions(f.path, inter);
    const auto back = load_interactions(f.path);
    CHECK(back.num_users == inter.num_users);
    CHECK(back.num_items == inter.num_items);
    CHECK(back.pairs == inter.pairs);
}

TEST_CASE("canonical round-trip keeps never-interacted catalog items") {
    // Sparse Zipf sampling leaves some tail items with zero interactions; the
    // shape header keeps them in the catalog across a round-trip.
    const auto data = gen_synthetic({.n_users = 50,
                                     .n_items = 80,
                                     .n_clusters = 4,
                                     .s_dim = 6,
                                     .sparsity = 0.1,
                                     .noise = 0.0,
                                     .seed = 31});
    std::set<ItemId> covered;
    for (const auto& [u, j] : data.interactions.pairs) {
        (void)u;
        covered.insert(j);
    }
    REQUIRE(covered.size() < data.interactions.num_items);

    TempFile f("");
    write_interactions(f.path, data.interactions);
    const auto back = load_interactions(f.path);
    CHECK(back.num_users == 50);
    CHECK(back.num_items == 80);
    CHECK(back.pairs == data.interactions.pairs);
}

TEST_CASE("build_rating_matrix: sorted CSR rows") {
    InteractionSet inter;
    inter.num_users = 2;
    inter.num_items = 4;
    inter.pairs = {{0, 2}, {0, 0}, {1, 3}};
    std::sort(inter.pairs.begin(), inter.pairs.end());
    const auto m = build_rating_matrix(inter);
    CHECK(m.row_offsets == std::vector<std::size_t>{0, 2, 3});
    CHECK(m.row(0)[0] == 0);
    CHECK(m.row(0)[1] == 2);
    CHECK(m.row(1)[0] == 3);
}

TEST_CASE("load_features: dense mode") {
    TempFile f("2 3\n1 0 0\n0 1 0\n");
    const auto fm = load_features(f.path);
    CHECK(fm.num_items() == 2);
    CHECK(fm.feature_dim() == 3);
    CHECK(fm.values(0, 0) == 1.0);
    CHECK(fm.values(1, 1) == 1.0);
    CHECK(fm.values(1, 2) == 0.0);
}

TEST_CASE("load_features: triplet mode auto-detected") {
    TempFile f("3 5\n0 1 0.5\n2 4 -2.25\n");
    const auto fm = load_features(f.path);
    CHECK(fm.values(0, 1) == 0.5);
    CHECK(fm.values(2, 4) == -2.25);
    CHECK(fm.values(1, 2) == 0.0);
}

TEST_CASE("load_features: truncated dense file") {
    TempFile f("2 3\n1 0 0\n");
    CHECK_THROWS_AS(load_features(f.path), data_error);
}

TEST_CASE("load_features: catalog size cross-validation") {
    TempFile f("2 3\n1 0 0\n0 1 0\n");
    CHECK_THROWS_AS(load_features(f.path, 5), data_error);
    CHECK_NOTHROW(load_features(f.path, 2));
}

TEST_CASE("load_features: non-finite value reports coordinates") {
    TempFile f("1 2\nnan 0\n");
    CHECK_THROWS_AS(load_features(f.path), data_error);
}

TEST_CASE("features round-trip preserves doubles exactly") {
    FeatureMatrix fm;
    fm.values = Matrix(2, 3);
    Rng rng(5);
    for (auto& v : fm.values.a) v = rng.normal() * 1e-3;
    TempFile f("");
    write_features(f.path, fm);
    const auto back = load_features(f.path);
    CHECK(back.values.a == fm.values.a);
}

TEST_CASE("split_users: exact ratios at I = 10") {
    InteractionSet inter;
    inter.num_users = 10;
    inter.num_items = 3;
    const auto split = split_users(inter, SplitRatios{}, 7);
    CHECK(split.train_users.size() == 8);
    CHECK(split.val_users.size() == 1);
    CHECK(split.test_users.size() == 1);
}

TEST_CASE("split_users: floor/remainder rule at I = 5551") {
    InteractionSet inter;
    inter.num_users = 5551;
    inter.num_items = 3;
    const auto split = split_users(inter, SplitRatios{}, 1);
    CHECK(split.train_users.size() == 4441);
    CHECK(split.val_users.size() == 555);
    CHECK(split.test_users.size() == 555);

    // partition of all users
    std::set<UserId> all;
    for (auto u : split.train_users) all.insert(u);
    for (auto u : split.val_users) all.insert(u);
    for (auto u : split.test_users) all.insert(u);
    CHECK(all.size() == 5551);
}

TEST_CASE("split_users: deterministic and seed-sensitive") {
    InteractionSet inter;
    inter.num_users = 100;
    inter.num_items = 3;
    const auto a = split_users(inter, SplitRatios{}, 42);
    const auto b = split_users(inter, SplitRatios{}, 42);
    const auto c = split_users(inter, SplitRatios{}, 43);
    CHECK(a.train_users == b.train_users);
    CHECK(a.val_users == b.val_users);
    CHECK(a.test_users == b.test_users);
    CHECK(a.train_users != c.train_users);
}

TEST_CASE("split_users: bad ratios and tiny datasets rejected") {
    InteractionSet inter;
    inter.num_users = 100;
    inter.num_items = 3;
    CHECK_THROWS_AS(split_users(inter, SplitRatios{0, 0, 0}, 1), config_error);
    inter.num_users = 5;
    CHECK_THROWS_AS(split_users(inter, SplitRatios{}, 1), config_error);
}

TEST_CASE("split round-trips through the manifest") {
    InteractionSet inter;
    inter.num_users = 37;
    inter.num_items = 3;
    const auto split = split_users(inter, SplitRatios{}, 9);
    TempFile f("");
    write_split(f.path, split);
    const auto back = load_split(f.path, 37);
    CHECK(back.train_users == split.train_users);
    CHECK(back.val_users == split.val_users);
    CHECK(back.test_users == split.test_users);
}

TEST_CASE("holdout_items: rounding rules") {
    std::vector<ItemId> ten = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    auto p = holdout_items(0, ten, 0.2, 3);
    CHECK(p.input_items.size() == 8);
    CHECK(p.holdout_items.size() == 2);

    std::vector<ItemId> five = {10, 20, 30, 40, 50};
    p = holdout_items(1, five, 0.2, 3);
    CHECK(p.input_items.size() == 4);
    CHECK(p.holdout_items.size() == 1);

    std::vector<ItemId> two = {1, 2};
    p = holdout_items(2, two, 0.2, 3);
    CHECK(p.holdout_items.size() == 1);  // minimum of one when n >= 2

    std::vector<ItemId> one = {7};
    p = holdout_items(3, one, 0.2, 3);
    CHECK(p.holdout_items.empty());
    CHECK(p.excluded());
    CHECK(p.input_items == one);

    CHECK_THROWS_AS(holdout_items(4, std::span<const ItemId>{}, 0.2, 3), config_error);
}

TEST_CASE("holdout_items: partition property over random rows") {
    Rng rng(17);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + rng.below(30);
        std::set<ItemId> uniq;
        while (uniq.size() < n) uniq.insert(static_cast<ItemId>(rng.below(1000)));
        std::vector<ItemId> row(uniq.begin(), uniq.end());
        const auto p = holdout_items(static_cast<UserId>(t), row, 0.2, 99);

        std::vector<ItemId> merged = p.input_items;
        merged.insert(merged.end(), p.holdout_items.begin(), p.holdout_items.end());
        std::sort(merged.begin(), merged.end());
        CHECK(merged == row);

        std::set<ItemId> in(p.input_items.begin(), p.input_items.end());
        for (ItemId j : p.holdout_items) CHECK(!in.count(j));

        // same seed, same user -> same partition
        const auto q = holdout_items(static_cast<UserId>(t), row, 0.2, 99);
        CHECK(q.input_items == p.input_items);
        CHECK(q.holdout_items == p.holdout_items);
    }
}

TEST_CASE("mark_cold_items: removes exactly the cold columns") {
    const SyntheticData data = gen_synthetic({.n_users = 40,
                                              .n_items = 30,
                                              .n_clusters = 3,
                                              .s_dim = 5,
                                              .sparsity = 0.4,
                                              .noise = 0.1,
                                              .seed = 4});
    const auto part = mark_cold_items(data.interactions, 6, 123);
    CHECK(part.cold_item_ids.size() == 6);

    std::set<ItemId> cold(part.cold_item_ids.begin(), part.cold_item_ids.end());
    for (ItemId j : part.train_matrix.col_indices) CHECK(!cold.count(j));

    std::size_t removed_expected = 0;
    for (const auto& pr : data.interactions.pairs)
        if (cold.count(pr.second)) ++removed_expected;
    CHECK(part.removed_pairs.size() == removed_expected);
    CHECK(part.train_matrix.nnz() + part.removed_pairs.size() == data.interactions.pairs.size());

    CHECK_THROWS_AS(mark_cold_items(data.interactions, 0, 1), config_error);
    CHECK_THROWS_AS(mark_cold_items(data.interactions, 30, 1), config_error);
}

TEST_CASE("density_stats: toy counts and overall density") {
    InteractionSet inter;
    inter.num_users = 2;
    inter.num_items = 2;
    inter.pairs = {{0, 0}, {1, 0}};
    const auto stats = density_stats(build_rating_matrix(inter));
    CHECK(stats.per_item_counts == std::vector<std::uint64_t>{2, 0});
    CHECK(stats.total_interactions == 2);
    CHECK(stats.density == doctest::Approx(0.5));
}

TEST_CASE("density_stats: synthetic skew has median below mean") {
    const SyntheticData data = gen_synthetic({.n_users = 400,
                                              .n_items = 300,
                                              .n_clusters = 5,
                                              .s_dim = 8,
                                              .sparsity = 0.15,
                                              .noise = 0.05,
                                              .seed = 8});
    const double qs[] = {50.0};
    const auto stats = density_stats(build_rating_matrix(data.interactions), qs);
    const double mean = static_cast<double>(stats.total_interactions) /
                        static_cast<double>(stats.per_item_counts.size());
    CHECK(static_cast<double>(stats.percentiles[0].second) < mean);
}

TEST_CASE("gen_synthetic: limit case is block-diagonal") {
    const SyntheticConfig cfg{.n_users = 30,
                              .n_items = 20,
                              .n_clusters = 5,
                              .s_dim = 5,
                              .sparsity = 1.0,
                              .noise = 0.0,
                              .seed = 2};
    const auto data = gen_synthetic(cfg);
    // every user interacts with every item of their cluster and nothing else
    std::size_t per_cluster = cfg.n_items / cfg.n_clusters;
    CHECK(data.interactions.pairs.size() == cfg.n_users * per_cluster);
    for (const auto& [u, j] : data.interactions.pairs)
        CHECK(data.user_clusters[u] == data.item_clusters[j]);
}

TEST_CASE("gen_synthetic: features classify items by nearest centroid at zero noise") {
    const auto data = gen_synthetic({.n_users = 300,
                                     .n_items = 200,
                                     .n_clusters = 5,
                                     .s_dim = 20,
                                     .sparsity = 0.25,
                                     .noise = 0.0,
                                     .seed = 3});
    // centroids per cluster
    Matrix centroids(5, 20);
    std::vector<std::size_t> counts(5, 0);
    for (std::size_t j = 0; j < 200; ++j) {
        const auto c = data.item_clusters[j];
        for (std::size_t k = 0; k < 20; ++k) centroids(c, k) += data.features.values(j, k);
        ++counts[c];
    }
    for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t k = 0; k < 20; ++k) centroids(c, k) /= static_cast<double>(counts[c]);
    for (std::size_t j = 0; j < 200; ++j) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < 5; ++c) {
            double d = 0;
            for (std::size_t k = 0; k < 20; ++k) {
                const double diff = data.features.values(j, k) - centroids(c, k);
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        CHECK(best == data.item_clusters[j]);
    }
}

TEST_CASE("gen_synthetic: deterministic and validated") {
    const SyntheticConfig cfg{.n_users = 50,
                              .n_items = 40,
                              .n_clusters = 4,
                              .s_dim = 6,
                              .sparsity = 0.3,
                              .noise = 0.2,
                              .seed = 77};
    const auto a = gen_synthetic(cfg);
    const auto b = gen_synthetic(cfg);
    CHECK(a.interactions.pairs == b.interactions.pairs);
    CHECK(a.features.values.a == b.features.values.a);

    SyntheticConfig bad = cfg;
    bad.n_clusters = 60;
    CHECK_THROWS_AS(gen_synthetic(bad), config_error);
    bad = cfg;
    bad.s_dim = 2;
    CHECK_THROWS_AS(gen_synthetic(bad), config_error);
    bad = cfg;
    bad.sparsity = 0.0;
    CHECK_THROWS_AS(gen_synthetic(bad), config_error);
}

TEST_CASE("subsample_interactions: hits the target and keeps user coverage") {
    const auto data = gen_synthetic({.n_users = 120,
                                     .n_items = 100,
                                     .n_clusters = 4,
                                     .s_dim = 6,
                                     .sparsity = 0.5,
                                     .noise = 0.05,
                                     .seed = 6});
    const double target = 0.011;
    const auto sub = subsample_interactions(data.interactions, target, 5);
    CHECK(sub.density() <= target);
    CHECK(sub.num_users == data.interactions.num_users);
    CHECK(sub.num_items == data.interactions.num_items);

    std::vector<int> seen(sub.num_users, 0);
    for (const auto& [u, j] : sub.pairs) {
        (void)j;
        seen[u] = 1;
    }
    for (int s : seen) CHECK(s == 1);

    const auto again = subsample_interactions(data.interactions, target, 5);
    CHECK(again.pairs == sub.pairs);

    // already sparse enough: unchanged
    const auto same = subsample_interactions(sub, 0.5, 5);
    CHECK(same.pairs == sub.pairs);
}

TEST_CASE("load_user_histories: raw ids within the catalog") {
    TempFile f("11\t3\n11\t1\n4\t0\n11\t3\n");
    const auto hist = load_user_histories(f.path, 5);
    REQUIRE(hist.size() == 2);
    CHECK(hist[0].first == 4);
    CHECK(hist[0].second == std::vector<ItemId>{0});
    CHECK(hist[1].first == 11);
    CHECK(hist[1].second == std::vector<ItemId>{1, 3});

    TempFile g("0\t9\n");
    CHECK_THROWS_AS(load_user_histories(g.path, 5), data_error);
}
