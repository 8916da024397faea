#include "mdcvae/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "mdcvae/errors.hpp"
#include "mdcvae/predictor.hpp"
#include "mdcvae/rng.hpp"

namespace mdcvae {

void TrainConfig::validate() const {
    if (k_u == 0 || k_v == 0) throw config_error("k_u and k_v must be positive");
    if (lambda_v < 0 || lambda_w < 0 || lambda_x < 0)
        throw config_error("precisions lambda_v, lambda_w, lambda_x must be >= 0");
    if (beta_max < 0) throw config_error("beta_max must be >= 0");
    if (batch_users == 0 || batch_items == 0) throw config_error("batch sizes must be >= 1");
    if (!(learning_rate > 0)) throw config_error("learning_rate must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0, 1)");
    if (!content_enabled && lambda_v != 0.0)
        throw config_error("content_enabled=false requires lambda_v=0");
}

Model make_model(const TrainConfig& config, std::size_t num_items, std::size_t feature_dim) {
    config.validate();
    if (feature_dim == 0) {
        if (config.content_enabled)
            throw config_error("content_enabled requires an item feature matrix");
        feature_dim = 1;  // placeholder content branch for feature-less ablations
    }
    UserVaeSpec uspec;
    uspec.mode = config.mode;
    uspec.num_items = num_items;
    uspec.user_latent = config.k_u;
    uspec.item_latent = config.k_v;
    uspec.extra_hidden = config.uae_hidden_dims;
    uspec.dropout = config.dropout;
    uspec.normalize_input = config.normalize_input;

    ItemVaeSpec ispec;
    ispec.feature_dim = feature_dim;
    ispec.latent_dim = config.k_v;
    ispec.hidden_dims = config.item_vae_hidden_dims;
    ispec.likelihood = config.content_likelihood;
    ispec.lambda_x = config.lambda_x;

    Rng urng(derive_seed(config.seed, SeedStream::init_user_vae));
    Rng irng(derive_seed(config.seed, SeedStream::init_item_vae));
    return Model{config, feature_dim, UserVae(uspec, urng), ItemVae(ispec, irng)};
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

struct ValScores {
    double recall20 = 0.0, recall40 = 0.0, ndcg100 = 0.0, score = 0.0;
};

ValScores validation_scores(const Model& model, const RatingMatrix& ratings,
                            std::span<const UserId> val_users, std::uint64_t seed) {
    ValScores v;
    if (val_users.empty()) return v;
    EvalOptions opts;
    opts.seed = seed;
    opts.recall_ms = {20, 40};
    opts.ndcg_ms = {100};
    const auto reports = evaluate_in_matrix(model, ratings, val_users, opts);
    v.recall20 = reports[0].mean;
    v.recall40 = reports[1].mean;
    v.ndcg100 = reports[2].mean;
    v.score = (v.recall20 + v.recall40 + v.ndcg100) / 3.0;
    return v;
}

}  // namespace

TrainResult train(const TrainConfig& config, const RatingMatrix& ratings,
                  const FeatureMatrix& features, const UserSplit& split) {
    config.validate();
    if (config.content_enabled && features.num_items() != ratings.num_items)
        throw data_error("feature rows " + std::to_string(features.num_items()) +
                         " != catalog size " + std::to_string(ratings.num_items));

    Model model = make_model(config, ratings.num_items, features.feature_dim());

    if (config.content_enabled && config.pretrain_epochs > 0) {
        Rng prng(derive_seed(config.seed, SeedStream::pretrain));
        model.item_vae.pretrain_layerwise(features.values, config.pretrain_epochs,
                                          config.batch_items, config.learning_rate, prng);
    }

    TrainHistory history;
    if (config.epochs == 0) return {std::move(model), std::move(history)};

    Rng rng(derive_seed(config.seed, SeedStream::train_loop));
    const std::uint64_t holdout_seed = derive_seed(config.seed, SeedStream::holdout);
    Adam uae_adam(config.learning_rate);
    Adam ivae_adam(config.learning_rate);

    const std::size_t n_train = split.train_users.size();
    if (n_train == 0) throw config_error("train: empty training split");
    const std::size_t batches_per_epoch = ceil_div(n_train, config.batch_users);
    BetaSchedule schedule;
    schedule.beta_max = config.beta_max;
    schedule.anneal_steps =
        config.beta_anneal_steps >= 0
            ? config.beta_anneal_steps
            : static_cast<std::int64_t>(std::llround(
                  0.4 * static_cast<double>(config.epochs * batches_per_epoch)));

    const auto uae_params = model.user_vae.parameters();
    const auto ivae_params = model.item_vae.parameters();
    std::vector<Matrix> b_grads, t_grads;

    Model last_good = model;
    Model best = model;
    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::int64_t global_step = 0;

    std::vector<UserId> user_order(split.train_users.begin(), split.train_users.end());
    std::vector<ItemId> item_order(ratings.num_items);
    for (std::size_t j = 0; j < item_order.size(); ++j) item_order[j] = static_cast<ItemId>(j);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        bool bad = false;

        Matrix zt_hat;
        if (config.content_enabled) zt_hat = model.item_vae.encode(features.values).mu;

        rng.shuffle(user_order);
        try {
            for (std::size_t start = 0; start < n_train && !bad; start += config.batch_users) {
                const std::size_t cnt = std::min(config.batch_users, n_train - start);
                std::vector<std::span<const ItemId>> rows(cnt);
                for (std::size_t i = 0; i < cnt; ++i) rows[i] = ratings.row(user_order[start + i]);

                rec.beta = kl_anneal(global_step, schedule);
                ++global_step;
                const double bf = static_cast<double>(cnt) / static_cast<double>(n_train);
                const auto terms = model.user_vae.b_step(
                    rows, zt_hat, config.content_enabled ? config.lambda_v : 0.0, config.lambda_w,
                    rec.beta, bf, rng, b_grads);
                if (!std::isfinite(terms.loss)) {
                    bad = true;
                    break;
                }
                std::vector<const Matrix*> gp(b_grads.size());
                for (std::size_t k = 0; k < b_grads.size(); ++k) gp[k] = &b_grads[k];
                uae_adam.step(uae_params, gp);

                rec.mult_ll += terms.mult_ll;
                rec.kl += terms.kl;
                rec.coupling_b += terms.coupling;
                rec.weight_decay_b += terms.weight_decay;
            }

            if (config.content_enabled && !bad) {
                rng.shuffle(item_order);
                const std::size_t n_items = item_order.size();
                for (std::size_t start = 0; start < n_items && !bad; start += config.batch_items) {
                    const std::size_t cnt = std::min(config.batch_items, n_items - start);
                    Matrix x_batch(cnt, features.feature_dim());
                    Matrix v_hat(cnt, config.k_v);
                    const Matrix& v = model.user_vae.embeddings();
                    for (std::size_t i = 0; i < cnt; ++i) {
                        const ItemId j = item_order[start + i];
                        std::copy_n(features.values.row(j), features.feature_dim(), x_batch.row(i));
                        std::copy_n(v.row(j), config.k_v, v_hat.row(i));
                    }
                    const double bf = static_cast<double>(cnt) / static_cast<double>(n_items);
                    const auto terms = model.item_vae.t_step(x_batch, v_hat, config.lambda_v,
                                                             config.lambda_w, bf, rng, t_grads);
                    if (!std::isfinite(terms.loss)) {
                        bad = true;
                        break;
                    }
                    std::vector<const Matrix*> gp(t_grads.size());
                    for (std::size_t k = 0; k < t_grads.size(); ++k) gp[k] = &t_grads[k];
                    ivae_adam.step(ivae_params, gp);

                    rec.content_ll += terms.content_ll;
                    rec.content_kl += terms.kl;
                    rec.coupling_t += terms.coupling_expected;
                    rec.weight_decay_t += terms.weight_decay;
                }
            }
        } catch (const numerical_error&) {
            bad = true;
        }

        if (bad) {
            history.diverged = true;
            history.best_epoch = best_epoch;
            return {std::move(last_good), std::move(history)};
        }

        rec.map_objective = rec.mult_ll - rec.beta * rec.kl - rec.coupling_b -
                            rec.weight_decay_b + rec.content_ll - rec.content_kl -
                            rec.coupling_t - rec.weight_decay_t;

        const ValScores v = validation_scores(model, ratings, split.val_users, holdout_seed);
        rec.val_recall20 = v.recall20;
        rec.val_recall40 = v.recall40;
        rec.val_ndcg100 = v.ndcg100;
        rec.val_score = v.score;
        history.epochs.push_back(rec);

        last_good = model;
        if (v.score > best_score) {
            best_score = v.score;
            best = model;
            best_epoch = epoch;
        }
    }

    history.best_epoch = best_epoch;
    return {std::move(best), std::move(history)};
}

std::size_t validate_select(std::span<const double> scores) {
    if (scores.empty()) throw config_error("validate_select: no snapshots");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

std::vector<SweepRow> sweep(const TrainConfig& base, std::span<const std::size_t> hidden_grid,
                            std::span<const double> lambda_v_grid, const InteractionSet& inter,
                            const FeatureMatrix& features, const UserSplit& split,
                            std::size_t n_cold) {
    if (lambda_v_grid.empty()) throw config_error("sweep: empty lambda_v grid");
    std::vector<std::size_t> hiddens(hidden_grid.begin(), hidden_grid.end());
    if (hiddens.empty()) hiddens.push_back(base.k_v);

    std::vector<SweepRow> rows;
    for (std::size_t h : hiddens) {
        for (double lv : lambda_v_grid) {
            TrainConfig cfg = base;
            cfg.k_u = cfg.k_v = h;
            cfg.lambda_v = lv;

            SweepRow row;
            row.config = cfg;
            if (n_cold == 0) {
                const RatingMatrix mat = build_rating_matrix(inter);
                const TrainResult res = train(cfg, mat, features, split);
                if (!res.history.epochs.empty() && res.history.best_epoch > 0) {
                    const auto& rec = res.history.epochs[res.history.best_epoch - 1];
                    row.val_recall20 = rec.val_recall20;
                    row.val_recall40 = rec.val_recall40;
                    row.val_ndcg100 = rec.val_ndcg100;
                    row.val_score = rec.val_score;
                }
            } else {
                const ColdPartition part = mark_cold_items(inter, n_cold, cfg.seed);
                const TrainResult res = train(cfg, part.train_matrix, features, split);
                if (!res.history.epochs.empty() && res.history.best_epoch > 0) {
                    const auto& rec = res.history.epochs[res.history.best_epoch - 1];
                    row.val_recall20 = rec.val_recall20;
                    row.val_recall40 = rec.val_recall40;
                    row.val_ndcg100 = rec.val_ndcg100;
                    row.val_score = rec.val_score;
                }
                EvalOptions opts;
                opts.seed = derive_seed(cfg.seed, SeedStream::holdout);
                opts.recall_ms = {20};
                opts.ndcg_ms = {100};
                const auto reports = coldstart_eval(res.model, part, split.test_users, opts);
                for (const auto& rep : reports) {
                    if (rep.metric == "recall" && rep.group == "normal") row.ni_recall20 = rep.mean;
                    if (rep.metric == "recall" && rep.group == "cold") row.ci_recall20 = rep.mean;
                    if (rep.metric == "ndcg" && rep.group == "normal") row.ni_ndcg100 = rep.mean;
                    if (rep.metric == "ndcg" && rep.group == "cold") row.ci_ndcg100 = rep.mean;
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

}  // namespace

void write_history_csv(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for writing: " + path);
    out << "epoch,mult_ll,kl,beta,coupling_b,weight_decay_b,content_ll,content_kl,"
           "coupling_t,weight_decay_t,map_objective,val_recall20,val_recall40,val_ndcg100,"
           "val_score\n";
    for (const auto& r : history.epochs) {
        out << r.epoch << ',' << fmt_double(r.mult_ll) << ',' << fmt_double(r.kl) << ','
            << fmt_double(r.beta) << ',' << fmt_double(r.coupling_b) << ','
            << fmt_double(r.weight_decay_b) << ',' << fmt_double(r.content_ll) << ','
            << fmt_double(r.content_kl) << ',' << fmt_double(r.coupling_t) << ','
            << fmt_double(r.weight_decay_t) << ',' << fmt_double(r.map_objective) << ','
            << fmt_double(r.val_recall20) << ',' << fmt_double(r.val_recall40) << ','
            << fmt_double(r.val_ndcg100) << ',' << fmt_double(r.val_score) << '\n';
    }
}

}  // namespace mdcvae
