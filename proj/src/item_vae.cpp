#include "mdcvae/item_vae.hpp"

#include <algorithm>
#include <cmath>

#include "mdcvae/errors.hpp"
#include "mdcvae/kernels.hpp"

namespace mdcvae {

namespace {

void clamp_log_sigma(Matrix& ls, Matrix* mask = nullptr) {
    if (mask) *mask = Matrix(ls.rows, ls.cols);
    for (std::size_t i = 0; i < ls.size(); ++i) {
        const bool inside = std::abs(ls.a[i]) < kLogSigmaClamp;
        if (mask) mask->a[i] = inside ? 1.0 : 0.0;
        ls.a[i] = std::clamp(ls.a[i], -kLogSigmaClamp, kLogSigmaClamp);
    }
}

}  // namespace

ItemVae::ItemVae(ItemVaeSpec spec, Rng& rng) : spec_(std::move(spec)) {
    if (spec_.feature_dim == 0 || spec_.latent_dim == 0)
        throw config_error("item VAE needs positive feature and latent dims");

    std::size_t in = spec_.feature_dim;
    for (std::size_t h : spec_.hidden_dims) {
        enc_.emplace_back(h, in, Activation::tanh_act);
        init_glorot(enc_.back(), rng);
        in = h;
    }
    mu_head_ = DenseLayer(spec_.latent_dim, in, Activation::linear);
    init_glorot(mu_head_, rng);
    ls_head_ = DenseLayer(spec_.latent_dim, in, Activation::linear);
    init_glorot(ls_head_, rng);

    std::size_t dec_in = spec_.latent_dim;
    for (std::size_t l = spec_.hidden_dims.size(); l-- > 0;) {
        dec_.emplace_back(spec_.hidden_dims[l], dec_in, Activation::tanh_act);
        init_glorot(dec_.back(), rng);
        dec_in = spec_.hidden_dims[l];
    }
    dec_.emplace_back(spec_.feature_dim, dec_in,
                      spec_.likelihood == ContentLikelihood::bernoulli ? Activation::sigmoid
                                                                       : Activation::linear);
    init_glorot(dec_.back(), rng);
}

GaussianPosterior ItemVae::encode(const Matrix& x) const {
    if (x.cols != spec_.feature_dim)
        throw config_error("encode_content: feature width " + std::to_string(x.cols) +
                           " != configured " + std::to_string(spec_.feature_dim));
    Matrix cur = x;
    for (const auto& layer : enc_) {
        Matrix next;
        layer_forward(layer, cur, next);
        cur = std::move(next);
    }
    GaussianPosterior post;
    layer_forward(mu_head_, cur, post.mu);
    layer_forward(ls_head_, cur, post.log_sigma);
    clamp_log_sigma(post.log_sigma);
    return post;
}

Matrix ItemVae::decode(const Matrix& z) const {
    if (z.cols != spec_.latent_dim) throw config_error("decode_content: latent width mismatch");
    Matrix cur = z;
    for (const auto& layer : dec_) {
        Matrix next;
        layer_forward(layer, cur, next);
        cur = std::move(next);
    }
    return cur;
}

std::vector<Matrix*> ItemVae::parameters() {
    std::vector<Matrix*> out;
    for (auto& l : enc_) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    out.push_back(&mu_head_.W);
    out.push_back(&mu_head_.b);
    out.push_back(&ls_head_.W);
    out.push_back(&ls_head_.b);
    for (auto& l : dec_) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

std::vector<const Matrix*> ItemVae::parameters() const {
    auto mut = const_cast<ItemVae*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<std::string> ItemVae::parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
        out.push_back("ivae.enc." + std::to_string(l) + ".W");
        out.push_back("ivae.enc." + std::to_string(l) + ".b");
    }
    out.push_back("ivae.mu.W");
    out.push_back("ivae.mu.b");
    out.push_back("ivae.logsigma.W");
    out.push_back("ivae.logsigma.b");
    for (std::size_t l = 0; l < dec_.size(); ++l) {
        out.push_back("ivae.dec." + std::to_string(l) + ".W");
        out.push_back("ivae.dec." + std::to_string(l) + ".b");
    }
    return out;
}

ItemVae::StepTerms ItemVae::t_step(const Matrix& x_batch, const Matrix& v_hat, double lambda_v,
                                   double lambda_w, double batch_fraction, Rng& rng,
                                   std::vector<Matrix>& grads, const StepOptions& opts) {
    if (lambda_v < 0.0) throw config_error("lambda_v must be >= 0");
    if (v_hat.rows != x_batch.rows || v_hat.cols != spec_.latent_dim)
        throw config_error("t_step: v_hat rows must align with the item batch");

    const auto params = parameters();
    if (grads.size() != params.size()) {
        grads.clear();
        for (const Matrix* p : params) grads.emplace_back(p->rows, p->cols);
    }
    for (auto& g : grads) g.zero();

    // Forward through the encoder stack, keeping activations for backward.
    std::vector<Matrix> enc_acts(enc_.size());
    const Matrix* cur = &x_batch;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
        layer_forward(enc_[l], *cur, enc_acts[l]);
        cur = &enc_acts[l];
    }
    GaussianPosterior post;
    layer_forward(mu_head_, *cur, post.mu);
    layer_forward(ls_head_, *cur, post.log_sigma);
    Matrix ls_mask;
    clamp_log_sigma(post.log_sigma, &ls_mask);

    const Matrix eps = opts.fixed_eps
                           ? *opts.fixed_eps
                           : draw_standard_normal(post.mu.rows, post.mu.cols, rng);
    const Matrix z = sample_gaussian(post, eps);

    std::vector<Matrix> dec_acts(dec_.size());
    cur = &z;
    for (std::size_t l = 0; l < dec_.size(); ++l) {
        layer_forward(dec_[l], *cur, dec_acts[l]);
        cur = &dec_acts[l];
    }
    const Matrix& xhat = dec_acts.back();

    StepTerms terms;
    Matrix dxhat;
    terms.content_ll = content_ll(x_batch, xhat, spec_.likelihood, spec_.lambda_x, &dxhat).total;
    terms.kl = kl_total(post);
    terms.coupling = 0.5 * lambda_v * sq_distance(v_hat, z);
    double sigma_sq = 0.0;
    for (double ls : post.log_sigma.a) sigma_sq += std::exp(2.0 * ls);
    terms.coupling_expected = 0.5 * lambda_v * (sq_distance(v_hat, post.mu) + sigma_sq);

    double wsum = 0.0;
    for (const auto& l : enc_) wsum += frobenius_sq(l.W);
    wsum += frobenius_sq(mu_head_.W) + frobenius_sq(ls_head_.W);
    for (const auto& l : dec_) wsum += frobenius_sq(l.W);
    terms.weight_decay = batch_fraction * 0.5 * lambda_w * wsum;

    terms.loss = -terms.content_ll + terms.coupling + terms.kl + terms.weight_decay;

    // Backward. Gradient slots follow parameters() order:
    // enc pairs, mu head, ls head, dec pairs.
    const std::size_t g_mu = 2 * enc_.size();
    const std::size_t g_ls = g_mu + 2;
    const std::size_t g_dec = g_ls + 2;

    Matrix d = std::move(dxhat);
    for (std::size_t l = dec_.size(); l-- > 0;) {
        const Matrix& in = l == 0 ? z : dec_acts[l - 1];
        Matrix dx;
        layer_backward(dec_[l], in, dec_acts[l], d, grads[g_dec + 2 * l], grads[g_dec + 2 * l + 1], &dx);
        d = std::move(dx);
    }
    // d now holds dloss/dz from the reconstruction path; add the coupling pull.
    for (std::size_t i = 0; i < d.size(); ++i) d.a[i] += lambda_v * (z.a[i] - v_hat.a[i]);

    Matrix dmu(post.mu.rows, post.mu.cols);
    Matrix dls(post.mu.rows, post.mu.cols);
    kl_backward(post, 1.0, dmu, dls);
    for (std::size_t i = 0; i < d.size(); ++i) {
        dmu.a[i] += d.a[i];
        dls.a[i] += d.a[i] * eps.a[i] * std::exp(post.log_sigma.a[i]) * ls_mask.a[i];
    }

    const Matrix& head_in = enc_.empty() ? x_batch : enc_acts.back();
    Matrix d_enc_top(head_in.rows, head_in.cols);
    d_enc_top.zero();
    {
        Matrix dx;
        layer_backward(mu_head_, head_in, post.mu, dmu, grads[g_mu], grads[g_mu + 1], &dx);
        for (std::size_t i = 0; i < dx.size(); ++i) d_enc_top.a[i] += dx.a[i];
        layer_backward(ls_head_, head_in, post.log_sigma, dls, grads[g_ls], grads[g_ls + 1], &dx);
        for (std::size_t i = 0; i < dx.size(); ++i) d_enc_top.a[i] += dx.a[i];
    }
    d = std::move(d_enc_top);
    for (std::size_t l = enc_.size(); l-- > 0;) {
        const Matrix& in = l == 0 ? x_batch : enc_acts[l - 1];
        Matrix dx;
        layer_backward(enc_[l], in, enc_acts[l], d, grads[2 * l], grads[2 * l + 1], &dx);
        d = std::move(dx);
    }

    // Weight decay gradients (weights only, not biases).
    const double wd = batch_fraction * lambda_w;
    if (wd > 0.0) {
        std::size_t slot = 0;
        for (const auto& l : enc_) {
            kern::axpy(grads[slot].a.data(), wd, l.W.a.data(), l.W.size());
            slot += 2;
        }
        kern::axpy(grads[g_mu].a.data(), wd, mu_head_.W.a.data(), mu_head_.W.size());
        kern::axpy(grads[g_ls].a.data(), wd, ls_head_.W.a.data(), ls_head_.W.size());
        for (std::size_t l = 0; l < dec_.size(); ++l)
            kern::axpy(grads[g_dec + 2 * l].a.data(), wd, dec_[l].W.a.data(), dec_[l].W.size());
    }
    return terms;
}

void ItemVae::pretrain_layerwise(const Matrix& x, std::size_t epochs_per_stage,
                                 std::size_t batch_items, double learning_rate, Rng& rng) {
    if (epochs_per_stage == 0) return;
    if (x.cols != spec_.feature_dim) throw config_error("pretrain: feature width mismatch");
    const std::size_t n = x.rows;
    const std::size_t bs = std::max<std::size_t>(1, std::min(batch_items, n));

    // Greedy stages: (enc l, mirrored dec layer) trained as a plain
    // auto-encoder on the codes produced by the already-trained stack below.
    const std::size_t stages = enc_.size() + 1;
    Matrix codes = x;
    for (std::size_t stage = 0; stage < stages; ++stage) {
        const bool bottleneck = stage == enc_.size();
        DenseLayer& enc_layer = bottleneck ? mu_head_ : enc_[stage];
        DenseLayer& dec_layer = dec_[dec_.size() - 1 - stage];

        Matrix* pparams[4] = {&enc_layer.W, &enc_layer.b, &dec_layer.W, &dec_layer.b};
        Adam adam(learning_rate);
        std::vector<Matrix> g;
        for (auto* p : pparams) g.emplace_back(p->rows, p->cols);

        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;

        for (std::size_t epoch = 0; epoch < epochs_per_stage; ++epoch) {
            rng.shuffle(order);
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t cnt = std::min(bs, n - start);
                Matrix in(cnt, codes.cols);
                for (std::size_t i = 0; i < cnt; ++i)
                    std::copy_n(codes.row(order[start + i]), codes.cols, in.row(i));

                Matrix code, recon;
                layer_forward(enc_layer, in, code);
                layer_forward(dec_layer, code, recon);

                // 0.5 * mean squared error over the batch
                Matrix drecon(recon.rows, recon.cols);
                const double inv = 1.0 / static_cast<double>(cnt);
                for (std::size_t i = 0; i < recon.size(); ++i)
                    drecon.a[i] = (recon.a[i] - in.a[i]) * inv;

                for (auto& gm : g) gm.zero();
                Matrix dcode;
                layer_backward(dec_layer, code, recon, drecon, g[2], g[3], &dcode);
                layer_backward(enc_layer, in, code, dcode, g[0], g[1], nullptr);

                const Matrix* gp[4] = {&g[0], &g[1], &g[2], &g[3]};
                adam.step(pparams, gp);
            }
        }
        if (!bottleneck) {
            Matrix next;
            layer_forward(enc_layer, codes, next);
            codes = std::move(next);
        }
    }

    // Joint fine-tune as a plain VAE (no coupling).
    Adam adam(learning_rate);
    auto params = parameters();
    std::vector<Matrix> grads;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Matrix v_zero;
    for (std::size_t epoch = 0; epoch < epochs_per_stage; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t cnt = std::min(bs, n - start);
            Matrix in(cnt, x.cols);
            for (std::size_t i = 0; i < cnt; ++i)
                std::copy_n(x.row(order[start + i]), x.cols, in.row(i));
            v_zero = Matrix(cnt, spec_.latent_dim);
            t_step(in, v_zero, 0.0, 0.0, static_cast<double>(cnt) / static_cast<double>(n), rng,
                   grads);
            std::vector<const Matrix*> gp;
            for (const auto& gm : grads) gp.push_back(&gm);
            adam.step(params, gp);
        }
    }
}

}  // namespace mdcvae
