#include <doctest.h>

#include <algorithm>
#include <set>

#include <cmath>

#include "mdcvae/data.hpp"
#include "mdcvae/errors.hpp"
#include "mdcvae/predictor.hpp"

using namespace mdcvae;

namespace {

Model tiny_model(TieMode mode, std::size_t items = 3, std::size_t s_dim = 4) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.k_u = 2;
    cfg.k_v = 2;
    cfg.dropout = 0.0;
    cfg.seed = 7;
    return make_model(cfg, items, s_dim);
}

}  // namespace

TEST_CASE("fold_in: mean embedding is deterministic and matches encode") {
    Model model = tiny_model(TieMode::symmetric);
    const std::vector<ItemId> input = {0, 2};
    const Matrix a = fold_in(model, input);
    const Matrix b = fold_in(model, input);
    CHECK(a.a == b.a);

    const std::span<const ItemId> rows[] = {input};
    CHECK(a.a == model.user_vae.encode(rows).mu.a);

    // empty history works off the bias path alone
    const Matrix empty = fold_in(model, {});
    CHECK(empty.rows == 1);
}

TEST_CASE("recommend: mask plus sort with id tie-breaks") {
    Model model = tiny_model(TieMode::normal);
    model.user_vae.embeddings().zero();  // logits equal the per-item bias
    model.user_vae.item_bias()(0, 0) = 9;
    model.user_vae.item_bias()(0, 1) = 5;
    model.user_vae.item_bias()(0, 2) = 7;

    const std::vector<ItemId> input = {0};
    const Ranking r = recommend(model, input, 2);
    CHECK(r.items == std::vector<ItemId>{2, 1});
    CHECK(!r.truncated);

    // equal logits rank by ascending id
    model.user_vae.item_bias().zero();
    const Ranking tie = recommend(model, {}, 3);
    CHECK(tie.items == std::vector<ItemId>{0, 1, 2});

    // more requested than available: flagged, not an error
    const Ranking all = recommend(model, input, 99);
    CHECK(all.items.size() == 2);
    CHECK(all.truncated);
}

TEST_CASE("recommend: fold-in items never appear and M >= 1 enforced") {
    Model model = tiny_model(TieMode::symmetric, 12, 4);
    Rng rng(8);
    for (auto& v : model.user_vae.embeddings().a) v = rng.normal();
    for (auto& v : model.user_vae.item_bias().a) v = rng.normal();

    for (int t = 0; t < 20; ++t) {
        std::set<ItemId> in;
        const std::size_t n = 1 + rng.below(5);
        while (in.size() < n) in.insert(static_cast<ItemId>(rng.below(12)));
        const std::vector<ItemId> input(in.begin(), in.end());
        const Ranking r = recommend(model, input, 12);
        for (ItemId j : r.items) CHECK(!in.count(j));
        CHECK(r.items.size() == 12 - input.size());
    }
    CHECK_THROWS_AS(recommend(model, {}, 0), config_error);
}

TEST_CASE("recommend: catalog permutation permutes the ranking consistently") {
    Model model = tiny_model(TieMode::symmetric, 8, 4);
    Rng rng(9);
    for (auto& v : model.user_vae.embeddings().a) v = rng.normal();
    for (auto& v : model.user_vae.item_bias().a) v = rng.normal();

    const std::vector<std::size_t> perm = {3, 7, 1, 0, 6, 2, 5, 4};  // new j holds old perm[j]
    Model permuted = tiny_model(TieMode::symmetric, 8, 4);
    for (std::size_t j = 0; j < 8; ++j) {
        std::copy_n(model.user_vae.embeddings().row(perm[j]), 2,
                    permuted.user_vae.embeddings().row(j));
        permuted.user_vae.item_bias()(0, j) = model.user_vae.item_bias()(0, perm[j]);
    }
    std::vector<std::size_t> inv(8);
    for (std::size_t j = 0; j < 8; ++j) inv[perm[j]] = j;

    // the same user history expressed in both id spaces
    const std::vector<ItemId> input = {2, 5};
    std::vector<ItemId> input_p;
    for (ItemId j : input) input_p.push_back(static_cast<ItemId>(inv[j]));
    std::sort(input_p.begin(), input_p.end());

    const Ranking a = recommend(model, input, 6);
    const Ranking b = recommend(permuted, input_p, 6);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t t = 0; t < a.items.size(); ++t) {
        CHECK(b.scores[t] == a.scores[t]);
        CHECK(perm[b.items[t]] == a.items[t]);
    }
}

TEST_CASE("extend_items: prefix rows are bit-equal and the base is untouched") {
    Model model = tiny_model(TieMode::symmetric, 3, 4);
    Rng rng(10);
    for (auto& v : model.user_vae.embeddings().a) v = rng.normal();
    for (auto& v : model.user_vae.item_bias().a) v = rng.normal();
    const Matrix v_before = model.user_vae.embeddings();

    FeatureMatrix nf;
    nf.values = Matrix(1, 4);
    for (auto& v : nf.values.a) v = rng.normal();
    const Model ext = extend_items(model, nf);

    CHECK(ext.num_items() == 4);
    CHECK(model.num_items() == 3);  // no mutation
    CHECK(model.user_vae.embeddings().a == v_before.a);
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(ext.user_vae.embeddings()(j, k) == model.user_vae.embeddings()(j, k));

    // surrogate rows are the content posterior means
    const auto post = model.item_vae.encode(nf.values);
    for (std::size_t k = 0; k < 2; ++k) CHECK(ext.user_vae.embeddings()(3, k) == post.mu(0, k));

    // new bias is the mean of the existing biases
    double mean = 0;
    for (std::size_t j = 0; j < 3; ++j) mean += model.user_vae.item_bias()(0, j);
    mean /= 3.0;
    CHECK(ext.user_vae.item_bias()(0, 3) == mean);

    // J' = 0 leaves the model unchanged
    FeatureMatrix empty;
    empty.values = Matrix(0, 4);
    const Model same = extend_items(model, empty);
    CHECK(same.num_items() == 3);
    CHECK(same.user_vae.embeddings().a == model.user_vae.embeddings().a);
}

TEST_CASE("extend_items: old-item logits are bit-identical for old-catalog users") {
    Model model = tiny_model(TieMode::symmetric, 6, 4);
    Rng rng(11);
    for (Matrix* p : model.user_vae.parameters())
        for (auto& v : p->a) v = rng.normal() * 0.3;
    FeatureMatrix nf;
    nf.values = Matrix(2, 4);
    for (auto& v : nf.values.a) v = rng.normal();
    const Model ext = extend_items(model, nf);

    const std::vector<ItemId> input = {1, 4};  // old items only
    const auto before = fold_in_logits(model, input);
    const auto after = fold_in_logits(ext, input);
    REQUIRE(after.size() == before.size() + 2);
    for (std::size_t j = 0; j < before.size(); ++j) CHECK(after[j] == before[j]);

    // relative order of old items is unchanged once new candidates are removed
    const Ranking r_before = recommend(model, input, 6);
    const Ranking r_after = recommend(ext, input, 8);
    std::vector<ItemId> old_only;
    for (ItemId j : r_after.items)
        if (j < 6) old_only.push_back(j);
    CHECK(old_only == r_before.items);
}

TEST_CASE("extend_items: normal mode is rejected, feature width checked") {
    Model model = tiny_model(TieMode::normal, 3, 4);
    FeatureMatrix nf;
    nf.values = Matrix(1, 4);
    CHECK_THROWS_AS(extend_items(model, nf), config_error);
    try {
        extend_items(model, nf);
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("symmetric") != std::string::npos);
        CHECK(std::string(e.what()).find("retrain") != std::string::npos);
    }

    Model sym = tiny_model(TieMode::symmetric, 3, 4);
    FeatureMatrix bad;
    bad.values = Matrix(1, 5);
    CHECK_THROWS_AS(extend_items(sym, bad), data_error);
}

TEST_CASE("evaluate_in_matrix: single-interaction users are excluded") {
    Model model = tiny_model(TieMode::symmetric, 10, 4);
    InteractionSet inter;
    inter.num_users = 3;
    inter.num_items = 10;
    inter.pairs = {{0, 1}, {1, 0}, {1, 2}, {1, 5}, {1, 7}, {2, 3}, {2, 4}};
    const RatingMatrix matrix = build_rating_matrix(inter);

    EvalOptions opts;
    opts.seed = 3;
    opts.recall_ms = {5};
    opts.ndcg_ms = {5};
    const std::vector<UserId> users = {0, 1, 2};
    const auto reports = evaluate_in_matrix(model, matrix, users, opts);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].metric == "recall");
    CHECK(reports[0].count == 2);  // user 0 has a single interaction
    CHECK(reports[1].metric == "ndcg");
}

TEST_CASE("cold rows sit closer to their content embeddings than normal rows") {
    // Cold embedding rows receive only the coupling pull (no positive
    // likelihood signal), so after training they track mu_zt more tightly
    // than normal rows do, on average.
    const auto data = gen_synthetic({.n_users = 100,
                                     .n_items = 80,
                                     .n_clusters = 4,
                                     .s_dim = 10,
                                     .sparsity = 0.3,
                                     .noise = 0.1,
                                     .seed = 14});
    const auto part = mark_cold_items(data.interactions, 8, 14);
    const auto split = split_users(data.interactions, SplitRatios{}, 14);

    // the separation appears once training has converged; early on the
    // softmax push on never-interacted columns still dominates
    TrainConfig cfg;
    cfg.mode = TieMode::symmetric;
    cfg.k_u = cfg.k_v = 10;
    cfg.lambda_v = 5.0;
    cfg.epochs = 200;
    cfg.batch_users = 40;
    cfg.batch_items = 40;
    cfg.pretrain_epochs = 5;
    cfg.seed = 14;
    const auto res = train(cfg, part.train_matrix, data.features, split);

    const auto post = res.model.item_vae.encode(data.features.values);
    std::vector<char> is_cold(80, 0);
    for (ItemId j : part.cold_item_ids) is_cold[j] = 1;
    double cold_dist = 0, normal_dist = 0;
    std::size_t n_cold = 0, n_normal = 0;
    for (std::size_t j = 0; j < 80; ++j) {
        double d = 0;
        for (std::size_t k = 0; k < 10; ++k) {
            const double diff = res.model.user_vae.embeddings()(j, k) - post.mu(j, k);
            d += diff * diff;
        }
        if (is_cold[j]) {
            cold_dist += std::sqrt(d);
            ++n_cold;
        } else {
            normal_dist += std::sqrt(d);
            ++n_normal;
        }
    }
    CHECK(cold_dist / n_cold <= normal_dist / n_normal);
}

TEST_CASE("coldstart_eval: pools are split and empty groups excluded") {
    const auto data = gen_synthetic({.n_users = 30,
                                     .n_items = 20,
                                     .n_clusters = 2,
                                     .s_dim = 4,
                                     .sparsity = 0.6,
                                     .noise = 0.0,
                                     .seed = 12});
    const auto part = mark_cold_items(data.interactions, 4, 9);
    Model model = tiny_model(TieMode::symmetric, 20, 4);

    std::vector<UserId> users;
    for (UserId u = 0; u < 30; ++u) users.push_back(u);
    EvalOptions opts;
    opts.seed = 5;
    opts.recall_ms = {5};
    opts.ndcg_ms = {5};
    const auto reports = coldstart_eval(model, part, users, opts);
    REQUIRE(reports.size() == 4);
    CHECK(reports[0].group == "normal");
    CHECK(reports[2].group == "cold");

    // CI averages only cover users who lost interactions to the partition
    std::set<UserId> with_cold;
    for (const auto& [u, j] : part.removed_pairs) {
        (void)j;
        with_cold.insert(u);
    }
    CHECK(reports[2].count == with_cold.size());
}
