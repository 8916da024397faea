#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdcvae/data.hpp"
#include "mdcvae/nn.hpp"

namespace mdcvae {

enum class TieMode { normal, symmetric };

TieMode parse_tie_mode(const std::string& s);
std::string to_string(TieMode mode);

struct BetaSchedule {
    double beta_max = 0.2;
    std::int64_t anneal_steps = 0;  // 0: constant at beta_max
};

// beta = beta_max * min(1, step / anneal_steps)
double kl_anneal(std::int64_t step, const BetaSchedule& schedule);

struct UserVaeSpec {
    TieMode mode = TieMode::normal;
    std::size_t num_items = 0;    // J, current catalog size
    std::size_t user_latent = 0;  // K_u
    std::size_t item_latent = 0;  // K_v; first-layer width and decoder output
    std::vector<std::size_t> extra_hidden;  // encoder hiddens between K_v and the heads
    double dropout = 0.5;
    bool normalize_input = false;
};

struct UserStepOptions {
    bool dropout_enabled = true;
    const Matrix* fixed_eps = nullptr;
};

struct UserStepTerms {
    double mult_ll = 0.0;
    double kl = 0.0;
    double beta = 0.0;
    double coupling = 0.0;      // batch-fraction share of (lambda_v/2) |V - Zt_hat|^2
    double weight_decay = 0.0;  // batch-fraction share of (lambda_w/2) sum |W|^2
    double loss = 0.0;          // negated objective
};

// User-oriented VAE whose decoder last-layer weights are the stacked item
// embeddings V (J, K_v). In symmetric mode the encoder first layer reads the
// same storage, so the tie cannot drift.
class UserVae {
public:
    UserVae(UserVaeSpec spec, Rng& rng);

    const UserVaeSpec& spec() const { return spec_; }
    std::size_t num_items() const { return spec_.num_items; }

    Matrix& embeddings() { return items_V_; }
    const Matrix& embeddings() const { return items_V_; }
    Matrix& item_bias() { return item_bias_; }
    const Matrix& item_bias() const { return item_bias_; }
    // The encoder first-layer weight view, stored item-major (J, K_v).
    const Matrix& first_layer_weights() const {
        return spec_.mode == TieMode::symmetric ? items_V_ : enc_embed_;
    }
    bool tied_views_match() const {
        return spec_.mode != TieMode::symmetric || &first_layer_weights() == &items_V_;
    }

    // Posterior q(u | r) with dropout off; used for fold-in and evaluation.
    GaussianPosterior encode(std::span<const std::span<const ItemId>> rows) const;
    // h = MLP_gen(u), the decoder path up to (but excluding) the item layer.
    Matrix decode_hidden(const Matrix& u) const;
    // logits = h V^T + item bias
    Matrix logits_from_hidden(const Matrix& h) const;
    Matrix decode_logits(const Matrix& u) const;

    // Grows the catalog: appends embedding rows and per-item biases.
    void append_items(const Matrix& new_rows, double new_bias_value);

    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
    std::vector<std::string> parameter_names() const;

    using StepOptions = UserStepOptions;
    using StepTerms = UserStepTerms;

    // One batch of the UAE objective: multinomial reconstruction, beta-KL,
    // content coupling on V, and weight decay. zt_hat (J, K_v) is constant.
    StepTerms b_step(std::span<const std::span<const ItemId>> rows, const Matrix& zt_hat,
                     double lambda_v, double lambda_w, double beta, double batch_fraction,
                     Rng& rng, std::vector<Matrix>& grads, const StepOptions& opts = {});

private:
    friend struct UserVaeIo;

    GaussianPosterior encode_internal(std::span<const std::span<const ItemId>> rows,
                                      const std::vector<std::vector<double>>* scales,
                                      std::vector<Matrix>* acts, Matrix* ls_mask) const;

    UserVaeSpec spec_;
    Matrix enc_embed_;      // (J, K_v); unused storage in symmetric mode
    Matrix enc_bias_;       // (1, K_v); never tied
    std::vector<DenseLayer> enc_extra_;  // tanh
    DenseLayer mu_head_;
    DenseLayer ls_head_;
    std::vector<DenseLayer> dec_;  // K_u -> ... -> K_v, all tanh
    Matrix items_V_;               // (J, K_v)
    Matrix item_bias_;             // (1, J)
};

}  // namespace mdcvae
