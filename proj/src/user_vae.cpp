#include "mdcvae/user_vae.hpp"

#include <algorithm>
#include <cmath>

#include "mdcvae/errors.hpp"
#include "mdcvae/kernels.hpp"

namespace mdcvae {

TieMode parse_tie_mode(const std::string& s) {
    if (s == "normal") return TieMode::normal;
    if (s == "symmetric") return TieMode::symmetric;
    throw config_error("unknown mode: " + s + " (expected normal|symmetric)");
}

std::string to_string(TieMode mode) {
    return mode == TieMode::normal ? "normal" : "symmetric";
}

double kl_anneal(std::int64_t step, const BetaSchedule& schedule) {
    if (step < 0) throw config_error("kl_anneal: negative step");
    if (schedule.beta_max < 0) throw config_error("beta_max must be >= 0");
    if (schedule.anneal_steps <= 0) return schedule.beta_max;
    const double frac = static_cast<double>(step) / static_cast<double>(schedule.anneal_steps);
    return schedule.beta_max * std::min(1.0, frac);
}

UserVae::UserVae(UserVaeSpec spec, Rng& rng) : spec_(std::move(spec)) {
    if (spec_.num_items == 0 || spec_.user_latent == 0 || spec_.item_latent == 0)
        throw config_error("user VAE needs positive item count and latent dims");
    if (spec_.dropout < 0.0 || spec_.dropout >= 1.0)
        throw config_error("dropout must be in [0, 1)");

    // Item-major first layer so a rating row is an embedding sum over rows.
    enc_embed_ = Matrix(spec_.num_items, spec_.item_latent);
    init_glorot(enc_embed_, rng);
    enc_bias_ = Matrix(1, spec_.item_latent);

    std::size_t in = spec_.item_latent;
    for (std::size_t h : spec_.extra_hidden) {
        enc_extra_.emplace_back(h, in, Activation::tanh_act);
        init_glorot(enc_extra_.back(), rng);
        in = h;
    }
    mu_head_ = DenseLayer(spec_.user_latent, in, Activation::linear);
    init_glorot(mu_head_, rng);
    ls_head_ = DenseLayer(spec_.user_latent, in, Activation::linear);
    init_glorot(ls_head_, rng);

    std::size_t dec_in = spec_.user_latent;
    for (std::size_t l = spec_.extra_hidden.size(); l-- > 0;) {
        dec_.emplace_back(spec_.extra_hidden[l], dec_in, Activation::tanh_act);
        init_glorot(dec_.back(), rng);
        dec_in = spec_.extra_hidden[l];
    }
    dec_.emplace_back(spec_.item_latent, dec_in, Activation::tanh_act);
    init_glorot(dec_.back(), rng);

    items_V_ = Matrix(spec_.num_items, spec_.item_latent);
    init_glorot(items_V_, rng);
    item_bias_ = Matrix(1, spec_.num_items);

    if (spec_.mode == TieMode::symmetric) enc_embed_ = Matrix();  // single storage: V only
}

GaussianPosterior UserVae::encode_internal(std::span<const std::span<const ItemId>> rows,
                                           const std::vector<std::vector<double>>* scales,
                                           std::vector<Matrix>* acts, Matrix* ls_mask) const {
    const Matrix& embed = first_layer_weights();
    const std::size_t n = rows.size();

    Matrix a0(n, spec_.item_latent);
    for (std::size_t i = 0; i < n; ++i) {
        double* out = a0.row(i);
        std::copy_n(enc_bias_.row(0), spec_.item_latent, out);
        const double base =
            spec_.normalize_input && !rows[i].empty()
                ? 1.0 / std::sqrt(static_cast<double>(rows[i].size()))
                : 1.0;
        for (std::size_t t = 0; t < rows[i].size(); ++t) {
            const ItemId j = rows[i][t];
            if (j >= spec_.num_items) throw config_error("rating row references item out of range");
            const double s = scales ? (*scales)[i][t] * base : base;
            if (s != 0.0) kern::axpy(out, s, embed.row(j), spec_.item_latent);
        }
    }
    for (double& v : a0.a) v = std::tanh(v);

    std::vector<Matrix> local;
    std::vector<Matrix>& store = acts ? *acts : local;
    store.clear();
    store.push_back(std::move(a0));
    for (const auto& layer : enc_extra_) {
        Matrix next;
        layer_forward(layer, store.back(), next);
        store.push_back(std::move(next));
    }

    GaussianPosterior post;
    layer_forward(mu_head_, store.back(), post.mu);
    layer_forward(ls_head_, store.back(), post.log_sigma);
    if (ls_mask) *ls_mask = Matrix(post.log_sigma.rows, post.log_sigma.cols);
    for (std::size_t i = 0; i < post.log_sigma.size(); ++i) {
        const bool inside = std::abs(post.log_sigma.a[i]) < kLogSigmaClamp;
        if (ls_mask) ls_mask->a[i] = inside ? 1.0 : 0.0;
        post.log_sigma.a[i] = std::clamp(post.log_sigma.a[i], -kLogSigmaClamp, kLogSigmaClamp);
    }
    return post;
}

GaussianPosterior UserVae::encode(std::span<const std::span<const ItemId>> rows) const {
    return encode_internal(rows, nullptr, nullptr, nullptr);
}

Matrix UserVae::decode_hidden(const Matrix& u) const {
    if (u.cols != spec_.user_latent) throw config_error("decode_users: latent width mismatch");
    Matrix cur = u;
    for (const auto& layer : dec_) {
        Matrix next;
        layer_forward(layer, cur, next);
        cur = std::move(next);
    }
    return cur;
}

Matrix UserVae::logits_from_hidden(const Matrix& h) const {
    Matrix logits(h.rows, spec_.num_items);
    matmul_nt(logits, h, items_V_);
    for (std::size_t i = 0; i < logits.rows; ++i)
        kern::axpy(logits.row(i), 1.0, item_bias_.row(0), spec_.num_items);
    return logits;
}

Matrix UserVae::decode_logits(const Matrix& u) const {
    return logits_from_hidden(decode_hidden(u));
}

void UserVae::append_items(const Matrix& new_rows, double new_bias_value) {
    if (new_rows.cols != spec_.item_latent)
        throw config_error("append_items: embedding width mismatch");
    Matrix v(spec_.num_items + new_rows.rows, spec_.item_latent);
    std::copy(items_V_.a.begin(), items_V_.a.end(), v.a.begin());
    std::copy(new_rows.a.begin(), new_rows.a.end(), v.a.begin() + items_V_.a.size());
    items_V_ = std::move(v);

    Matrix bias(1, spec_.num_items + new_rows.rows);
    std::copy(item_bias_.a.begin(), item_bias_.a.end(), bias.a.begin());
    for (std::size_t j = 0; j < new_rows.rows; ++j) bias.a[spec_.num_items + j] = new_bias_value;
    item_bias_ = std::move(bias);

    if (spec_.mode == TieMode::normal) {
        // The untied first layer has no information for the new items either;
        // extension is rejected upstream, but keep shapes consistent.
        Matrix e(spec_.num_items + new_rows.rows, spec_.item_latent);
        std::copy(enc_embed_.a.begin(), enc_embed_.a.end(), e.a.begin());
        enc_embed_ = std::move(e);
    }
    spec_.num_items += new_rows.rows;
}

std::vector<Matrix*> UserVae::parameters() {
    std::vector<Matrix*> out;
    if (spec_.mode == TieMode::normal) out.push_back(&enc_embed_);
    out.push_back(&enc_bias_);
    for (auto& l : enc_extra_) {
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
    out.push_back(&items_V_);
    out.push_back(&item_bias_);
    return out;
}

std::vector<const Matrix*> UserVae::parameters() const {
    auto mut = const_cast<UserVae*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<std::string> UserVae::parameter_names() const {
    std::vector<std::string> out;
    if (spec_.mode == TieMode::normal) out.push_back("uae.enc0.W");
    out.push_back("uae.enc0.b");
    for (std::size_t l = 0; l < enc_extra_.size(); ++l) {
        out.push_back("uae.enc." + std::to_string(l + 1) + ".W");
        out.push_back("uae.enc." + std::to_string(l + 1) + ".b");
    }
    out.push_back("uae.mu.W");
    out.push_back("uae.mu.b");
    out.push_back("uae.logsigma.W");
    out.push_back("uae.logsigma.b");
    for (std::size_t l = 0; l < dec_.size(); ++l) {
        out.push_back("uae.dec." + std::to_string(l) + ".W");
        out.push_back("uae.dec." + std::to_string(l) + ".b");
    }
    out.push_back("uae.items.V");
    out.push_back("uae.items.b");
    return out;
}

UserVae::StepTerms UserVae::b_step(std::span<const std::span<const ItemId>> rows,
                                   const Matrix& zt_hat, double lambda_v, double lambda_w,
                                   double beta, double batch_fraction, Rng& rng,
                                   std::vector<Matrix>& grads, const StepOptions& opts) {
    if (beta < 0.0) throw config_error("beta must be >= 0");
    if (lambda_v < 0.0) throw config_error("lambda_v must be >= 0");
    if (lambda_v > 0.0 && (zt_hat.rows != spec_.num_items || zt_hat.cols != spec_.item_latent))
        throw config_error("b_step: zt_hat must be (num_items, item_latent)");

    const auto params = parameters();
    if (grads.size() != params.size()) {
        grads.clear();
        for (const Matrix* p : params) grads.emplace_back(p->rows, p->cols);
    }
    for (auto& g : grads) g.zero();

    const std::size_t n = rows.size();

    // Inverted dropout scales per kept interaction, drawn in row order.
    std::vector<std::vector<double>> scales(n);
    const double keep = 1.0 - spec_.dropout;
    for (std::size_t i = 0; i < n; ++i) {
        scales[i].assign(rows[i].size(), 1.0);
        if (opts.dropout_enabled && spec_.dropout > 0.0)
            for (auto& s : scales[i]) s = rng.uniform() < spec_.dropout ? 0.0 : 1.0 / keep;
    }

    std::vector<Matrix> enc_acts;
    Matrix ls_mask;
    GaussianPosterior post = encode_internal(rows, &scales, &enc_acts, &ls_mask);

    const Matrix eps = opts.fixed_eps
                           ? *opts.fixed_eps
                           : draw_standard_normal(post.mu.rows, post.mu.cols, rng);
    const Matrix u = sample_gaussian(post, eps);

    std::vector<Matrix> dec_acts(dec_.size());
    const Matrix* cur = &u;
    for (std::size_t l = 0; l < dec_.size(); ++l) {
        layer_forward(dec_[l], *cur, dec_acts[l]);
        cur = &dec_acts[l];
    }
    const Matrix& h = dec_acts.back();
    Matrix logits = logits_from_hidden(h);

    StepTerms terms;
    terms.beta = beta;
    Matrix dlogits;
    terms.mult_ll = multinomial_ll(logits, rows, &dlogits).total;
    terms.kl = kl_total(post);
    if (lambda_v > 0.0) terms.coupling = batch_fraction * 0.5 * lambda_v * sq_distance(items_V_, zt_hat);

    double wsum = 0.0;
    if (spec_.mode == TieMode::normal) wsum += frobenius_sq(enc_embed_);
    for (const auto& l : enc_extra_) wsum += frobenius_sq(l.W);
    wsum += frobenius_sq(mu_head_.W) + frobenius_sq(ls_head_.W);
    for (const auto& l : dec_) wsum += frobenius_sq(l.W);
    terms.weight_decay = batch_fraction * 0.5 * lambda_w * wsum;

    terms.loss = -terms.mult_ll + beta * terms.kl + terms.coupling + terms.weight_decay;

    // Gradient slot layout mirrors parameters().
    std::size_t slot = 0;
    const std::size_t g_embed = spec_.mode == TieMode::normal ? slot++ : static_cast<std::size_t>(-1);
    const std::size_t g_enc_bias = slot++;
    const std::size_t g_extra = slot;
    slot += 2 * enc_extra_.size();
    const std::size_t g_mu = slot;
    slot += 2;
    const std::size_t g_ls = slot;
    slot += 2;
    const std::size_t g_dec = slot;
    slot += 2 * dec_.size();
    const std::size_t g_v = slot++;
    const std::size_t g_item_bias = slot++;

    // Item layer: dV += dlogits^T h, db += col sums, dh = dlogits V.
    matmul_tn_accum(grads[g_v], dlogits, h);
    add_col_sums(grads[g_item_bias].row(0), dlogits);
    Matrix dh(n, spec_.item_latent);
    dh.zero();
    matmul_nn_accum(dh, dlogits, items_V_);

    Matrix d = std::move(dh);
    for (std::size_t l = dec_.size(); l-- > 0;) {
        const Matrix& in = l == 0 ? u : dec_acts[l - 1];
        Matrix dx;
        layer_backward(dec_[l], in, dec_acts[l], d, grads[g_dec + 2 * l], grads[g_dec + 2 * l + 1], &dx);
        d = std::move(dx);
    }

    Matrix dmu(post.mu.rows, post.mu.cols);
    Matrix dls(post.mu.rows, post.mu.cols);
    kl_backward(post, beta, dmu, dls);
    for (std::size_t i = 0; i < d.size(); ++i) {
        dmu.a[i] += d.a[i];
        dls.a[i] += d.a[i] * eps.a[i] * std::exp(post.log_sigma.a[i]) * ls_mask.a[i];
    }

    const Matrix& head_in = enc_acts.back();
    Matrix d_top(head_in.rows, head_in.cols);
    d_top.zero();
    {
        Matrix dx;
        layer_backward(mu_head_, head_in, post.mu, dmu, grads[g_mu], grads[g_mu + 1], &dx);
        for (std::size_t i = 0; i < dx.size(); ++i) d_top.a[i] += dx.a[i];
        layer_backward(ls_head_, head_in, post.log_sigma, dls, grads[g_ls], grads[g_ls + 1], &dx);
        for (std::size_t i = 0; i < dx.size(); ++i) d_top.a[i] += dx.a[i];
    }
    d = std::move(d_top);
    for (std::size_t l = enc_extra_.size(); l-- > 0;) {
        Matrix dx;
        layer_backward(enc_extra_[l], enc_acts[l], enc_acts[l + 1], d, grads[g_extra + 2 * l],
                       grads[g_extra + 2 * l + 1], &dx);
        d = std::move(dx);
    }

    // First layer: tanh backward, then scatter into the embedding rows.
    const Matrix& a0 = enc_acts.front();
    Matrix dpre0(n, spec_.item_latent);
    kern::tanh_backward(dpre0.a.data(), d.a.data(), a0.a.data(), a0.size());
    add_col_sums(grads[g_enc_bias].row(0), dpre0);

    Matrix& g_first = spec_.mode == TieMode::symmetric ? grads[g_v] : grads[g_embed];
    for (std::size_t i = 0; i < n; ++i) {
        const double base =
            spec_.normalize_input && !rows[i].empty()
                ? 1.0 / std::sqrt(static_cast<double>(rows[i].size()))
                : 1.0;
        const double* dp = dpre0.row(i);
        for (std::size_t t = 0; t < rows[i].size(); ++t) {
            const double s = scales[i][t] * base;
            if (s != 0.0) kern::axpy(g_first.row(rows[i][t]), s, dp, spec_.item_latent);
        }
    }

    // Coupling pull on V and the weight decay terms.
    if (lambda_v > 0.0) {
        const double c = batch_fraction * lambda_v;
        for (std::size_t i = 0; i < items_V_.size(); ++i)
            grads[g_v].a[i] += c * (items_V_.a[i] - zt_hat.a[i]);
    }
    const double wd = batch_fraction * lambda_w;
    if (wd > 0.0) {
        if (spec_.mode == TieMode::normal)
            kern::axpy(grads[g_embed].a.data(), wd, enc_embed_.a.data(), enc_embed_.size());
        for (std::size_t l = 0; l < enc_extra_.size(); ++l)
            kern::axpy(grads[g_extra + 2 * l].a.data(), wd, enc_extra_[l].W.a.data(),
                       enc_extra_[l].W.size());
        kern::axpy(grads[g_mu].a.data(), wd, mu_head_.W.a.data(), mu_head_.W.size());
        kern::axpy(grads[g_ls].a.data(), wd, ls_head_.W.a.data(), ls_head_.W.size());
        for (std::size_t l = 0; l < dec_.size(); ++l)
            kern::axpy(grads[g_dec + 2 * l].a.data(), wd, dec_[l].W.a.data(), dec_[l].W.size());
    }
    return terms;
}

}  // namespace mdcvae
