#include "mdcvae/gradcheck.hpp"

#include "mdcvae/item_vae.hpp"
#include "mdcvae/user_vae.hpp"

namespace mdcvae {

namespace {

SuiteResult check_b_step(TieMode mode, std::uint64_t seed) {
    Rng rng(derive_seed(seed, SeedStream::gradcheck));

    UserVaeSpec spec;
    spec.mode = mode;
    spec.num_items = 10;
    spec.user_latent = 3;
    spec.item_latent = 4;
    spec.extra_hidden = {5};
    spec.dropout = 0.0;
    UserVae vae(spec, rng);

    // Small batch of rating rows over the toy catalog.
    std::vector<std::vector<ItemId>> row_data = {
        {0, 3, 7}, {1}, {2, 4, 5, 9}, {0, 8}, {6, 7}, {1, 2, 3},
    };
    std::vector<std::span<const ItemId>> rows(row_data.begin(), row_data.end());

    Matrix zt_hat(spec.num_items, spec.item_latent);
    for (double& v : zt_hat.a) v = rng.normal() * 0.5;
    const Matrix eps = draw_standard_normal(rows.size(), spec.user_latent, rng);

    const double lambda_v = 2.5, lambda_w = 0.3, beta = 0.7, bf = 0.37;
    UserVae::StepOptions opts;
    opts.dropout_enabled = false;
    opts.fixed_eps = &eps;

    std::vector<Matrix> grads;
    vae.b_step(rows, zt_hat, lambda_v, lambda_w, beta, bf, rng, grads, opts);
    const std::vector<Matrix> analytic = grads;

    auto params = vae.parameters();
    std::vector<const Matrix*> an;
    for (const auto& g : analytic) an.push_back(&g);

    auto objective = [&]() {
        std::vector<Matrix> scratch;
        return vae.b_step(rows, zt_hat, lambda_v, lambda_w, beta, bf, rng, scratch, opts).loss;
    };
    GradCheckOptions gopts;
    gopts.seed = seed;
    return {std::string("b_step_") + to_string(mode), finite_diff_check(objective, params, an, gopts)};
}

SuiteResult check_t_step(std::uint64_t seed) {
    Rng rng(derive_seed(seed + 1, SeedStream::gradcheck));

    ItemVaeSpec spec;
    spec.feature_dim = 6;
    spec.latent_dim = 4;
    spec.hidden_dims = {5};
    spec.lambda_x = 1.3;
    ItemVae vae(spec, rng);

    const std::size_t batch = 7;
    Matrix x(batch, spec.feature_dim);
    for (double& v : x.a) v = rng.normal();
    Matrix v_hat(batch, spec.latent_dim);
    for (double& v : v_hat.a) v = rng.normal() * 0.5;
    const Matrix eps = draw_standard_normal(batch, spec.latent_dim, rng);

    const double lambda_v = 1.7, lambda_w = 0.2, bf = 0.41;
    ItemVae::StepOptions opts;
    opts.fixed_eps = &eps;

    std::vector<Matrix> grads;
    vae.t_step(x, v_hat, lambda_v, lambda_w, bf, rng, grads, opts);
    const std::vector<Matrix> analytic = grads;

    auto params = vae.parameters();
    std::vector<const Matrix*> an;
    for (const auto& g : analytic) an.push_back(&g);

    auto objective = [&]() {
        std::vector<Matrix> scratch;
        return vae.t_step(x, v_hat, lambda_v, lambda_w, bf, rng, scratch, opts).loss;
    };
    GradCheckOptions gopts;
    gopts.seed = seed;
    return {"t_step", finite_diff_check(objective, params, an, gopts)};
}

}  // namespace

std::vector<SuiteResult> run_gradient_suites(std::uint64_t seed) {
    std::vector<SuiteResult> out;
    out.push_back(check_t_step(seed));
    out.push_back(check_b_step(TieMode::normal, seed));
    out.push_back(check_b_step(TieMode::symmetric, seed));
    return out;
}

}  // namespace mdcvae
