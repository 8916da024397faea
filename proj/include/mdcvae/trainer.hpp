#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdcvae/data.hpp"
#include "mdcvae/item_vae.hpp"
#include "mdcvae/user_vae.hpp"

namespace mdcvae {

struct TrainConfig {
    TieMode mode = TieMode::normal;
    std::size_t k_u = 100;
    std::size_t k_v = 100;
    std::vector<std::size_t> uae_hidden_dims;       // extra encoder hiddens
    std::vector<std::size_t> item_vae_hidden_dims;  // item VAE encoder hiddens
    double lambda_v = 1.0;
    double lambda_w = 1e-3;
    double lambda_x = 1.0;
    ContentLikelihood content_likelihood = ContentLikelihood::gaussian;
    double beta_max = 0.2;
    std::int64_t beta_anneal_steps = -1;  // < 0: anneal over the first 40% of steps
    std::size_t epochs = 100;
    std::size_t batch_users = 500;
    std::size_t batch_items = 500;
    double learning_rate = 1e-3;
    double dropout = 0.5;
    std::uint64_t seed = 1;
    std::size_t pretrain_epochs = 5;
    bool normalize_input = false;
    bool content_enabled = true;

    void validate() const;
};

struct Model {
    TrainConfig config;
    std::size_t feature_dim = 0;
    UserVae user_vae;
    ItemVae item_vae;

    std::size_t num_items() const { return user_vae.num_items(); }
};

Model make_model(const TrainConfig& config, std::size_t num_items, std::size_t feature_dim);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double mult_ll = 0.0;
    double kl = 0.0;
    double beta = 0.0;  // value at the last batch of the epoch
    double coupling_b = 0.0;
    double weight_decay_b = 0.0;
    double content_ll = 0.0;
    double content_kl = 0.0;
    double coupling_t = 0.0;
    double weight_decay_t = 0.0;
    double map_objective = 0.0;  // b-step + t-step objectives for the epoch
    double val_recall20 = 0.0;
    double val_recall40 = 0.0;
    double val_ndcg100 = 0.0;
    double val_score = 0.0;  // mean of the three, the model-selection signal
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    bool diverged = false;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epochs ran
};

struct TrainResult {
    Model model;  // best validation snapshot (pretrained-only when epochs = 0)
    TrainHistory history;
};

TrainResult train(const TrainConfig& config, const RatingMatrix& ratings,
                  const FeatureMatrix& features, const UserSplit& split);

// argmax of the mean of (Recall@20, Recall@40, NDCG@100); ties -> earliest.
std::size_t validate_select(std::span<const double> scores);

struct SweepRow {
    TrainConfig config;
    double val_recall20 = 0.0;
    double val_recall40 = 0.0;
    double val_ndcg100 = 0.0;
    double val_score = 0.0;
    // Filled when the sweep runs the cold-start protocol (n_cold > 0).
    double ni_recall20 = 0.0;
    double ci_recall20 = 0.0;
    double ni_ndcg100 = 0.0;
    double ci_ndcg100 = 0.0;
};

// One full train+validate per (hidden size, lambda_v) grid point. With
// n_cold > 0 each point trains on a cold-partitioned matrix and also reports
// normal-item / cold-item test metrics.
std::vector<SweepRow> sweep(const TrainConfig& base, std::span<const std::size_t> hidden_grid,
                            std::span<const double> lambda_v_grid, const InteractionSet& inter,
                            const FeatureMatrix& features, const UserSplit& split,
                            std::size_t n_cold = 0);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

std::string serialize_train_config(const TrainConfig& config);

void write_history_csv(const std::string& path, const TrainHistory& history);

}  // namespace mdcvae
