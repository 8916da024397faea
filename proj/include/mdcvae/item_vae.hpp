#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdcvae/nn.hpp"

namespace mdcvae {

struct ItemStepOptions {
    const Matrix* fixed_eps = nullptr;  // frozen reparameterization noise
};

struct ItemStepTerms {
    double content_ll = 0.0;
    double kl = 0.0;
    double coupling = 0.0;      // (lambda_v/2) |v_hat - z|^2, inside the expectation
    // closed-form expectation of the coupling over the reparameterization
    // noise: (lambda_v/2) (|v_hat - mu|^2 + sum sigma^2); recorded, not trained on
    double coupling_expected = 0.0;
    double weight_decay = 0.0;  // batch-fraction share of (lambda_w/2) sum |W|^2
    double loss = 0.0;          // negated objective fed to the optimizer
};

struct ItemVaeSpec {
    std::size_t feature_dim = 0;             // S
    std::size_t latent_dim = 0;              // K_v
    std::vector<std::size_t> hidden_dims;    // encoder hiddens; decoder mirrors them
    ContentLikelihood likelihood = ContentLikelihood::gaussian;
    double lambda_x = 1.0;
};

// Content VAE over item feature rows: q(z_t | x) encoder with diagonal
// Gaussian heads, mirrored decoder p(x | z_t).
class ItemVae {
public:
    ItemVae(ItemVaeSpec spec, Rng& rng);

    const ItemVaeSpec& spec() const { return spec_; }

    GaussianPosterior encode(const Matrix& x) const;
    // gaussian: linear mean; bernoulli: sigmoid probabilities
    Matrix decode(const Matrix& z) const;

    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
    std::vector<std::string> parameter_names() const;

    using StepOptions = ItemStepOptions;
    using StepTerms = ItemStepTerms;

    // Loss and gradients (aligned with parameters()) of the negated objective
    // for one item batch. v_hat rows are constants aligned with x_batch rows.
    StepTerms t_step(const Matrix& x_batch, const Matrix& v_hat, double lambda_v,
                     double lambda_w, double batch_fraction, Rng& rng,
                     std::vector<Matrix>& grads, const StepOptions& opts = {});

    // Greedy stacked auto-encoder pass over encoder/decoder layer pairs, then
    // a joint fine-tune with the plain VAE objective (lambda_v = 0).
    void pretrain_layerwise(const Matrix& x, std::size_t epochs_per_stage,
                            std::size_t batch_items, double learning_rate, Rng& rng);

private:
    friend struct ItemVaeIo;

    ItemVaeSpec spec_;
    std::vector<DenseLayer> enc_;  // tanh hidden stack (may be empty)
    DenseLayer mu_head_;
    DenseLayer ls_head_;
    std::vector<DenseLayer> dec_;  // tanh hiddens + output layer
};

}  // namespace mdcvae
