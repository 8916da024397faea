#include "mdcvae/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>
#include <sstream>

#include "mdcvae/errors.hpp"
#include "mdcvae/kernels.hpp"

namespace mdcvae {

void init_glorot(Matrix& w, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& v : w.a) v = (2.0 * rng.uniform() - 1.0) * limit;
}

void init_glorot(DenseLayer& layer, Rng& rng) {
    init_glorot(layer.W, rng);
    layer.b.zero();
}

void layer_forward(const DenseLayer& layer, const Matrix& x, Matrix& y) {
    if (x.cols != layer.in_dim()) throw config_error("layer_forward: input width mismatch");
    if (y.rows != x.rows || y.cols != layer.out_dim()) y = Matrix(x.rows, layer.out_dim());
    matmul_nt(y, x, layer.W);
    for (std::size_t i = 0; i < y.rows; ++i) kern::axpy(y.row(i), 1.0, layer.b.row(0), y.cols);
    switch (layer.act) {
        case Activation::linear:
            break;
        case Activation::tanh_act:
            for (double& v : y.a) v = std::tanh(v);
            break;
        case Activation::sigmoid:
            for (double& v : y.a) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case Activation::softmax: {
            Matrix tmp = y;
            softmax_rows(tmp, y);
            break;
        }
    }
}

void layer_backward(const DenseLayer& layer, const Matrix& x, const Matrix& y,
                    const Matrix& dy, Matrix& dw, Matrix& db, Matrix* dx) {
    assert(y.same_shape(dy));
    Matrix dpre(dy.rows, dy.cols);
    switch (layer.act) {
        case Activation::linear:
        case Activation::softmax:  // fused head: dy is already d/dlogits
            dpre = dy;
            break;
        case Activation::tanh_act:
            kern::tanh_backward(dpre.a.data(), dy.a.data(), y.a.data(), y.size());
            break;
        case Activation::sigmoid:
            kern::sigmoid_backward(dpre.a.data(), dy.a.data(), y.a.data(), y.size());
            break;
    }
    matmul_tn_accum(dw, dpre, x);      // dW += dpre^T x
    add_col_sums(db.row(0), dpre);     // db += column sums
    if (dx) {
        if (dx->rows != x.rows || dx->cols != x.cols) *dx = Matrix(x.rows, x.cols);
        dx->zero();
        matmul_nn_accum(*dx, dpre, layer.W);
    }
}

std::vector<DenseLayer> make_mlp(const MlpSpec& spec, Rng& rng) {
    if (spec.layer_dims.size() < 2) throw config_error("MLP needs at least one layer");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
        const bool last = l + 2 == spec.layer_dims.size();
        layers.emplace_back(spec.layer_dims[l + 1], spec.layer_dims[l],
                            last ? spec.output_act : Activation::tanh_act);
        init_glorot(layers.back(), rng);
    }
    return layers;
}

MlpGrads make_grads(std::span<const DenseLayer> layers) {
    MlpGrads g;
    for (const auto& l : layers) {
        g.dw.emplace_back(l.W.rows, l.W.cols);
        g.db.emplace_back(1, l.out_dim());
    }
    return g;
}

Matrix mlp_forward(std::span<const DenseLayer> layers, const Matrix& x, MlpCache& cache) {
    cache.stamp = layers.data();
    cache.input = x;
    cache.activations.assign(layers.size(), Matrix{});
    const Matrix* cur = &x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layer_forward(layers[l], *cur, cache.activations[l]);
        cur = &cache.activations[l];
    }
    return *cur;
}

Matrix mlp_backward(std::span<const DenseLayer> layers, const MlpCache& cache,
                    const Matrix& dy, MlpGrads& grads) {
    if (cache.stamp != layers.data() || cache.activations.size() != layers.size())
        throw std::logic_error("mlp_backward: cache does not match this layer stack");
    Matrix d = dy;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Matrix& in = l == 0 ? cache.input : cache.activations[l - 1];
        Matrix dx;
        layer_backward(layers[l], in, cache.activations[l], d, grads.dw[l], grads.db[l], &dx);
        d = std::move(dx);
    }
    return d;
}

Matrix draw_standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix eps(rows, cols);
    for (double& v : eps.a) v = rng.normal();
    return eps;
}

Matrix sample_gaussian(const GaussianPosterior& post, const Matrix& eps) {
    assert(post.mu.same_shape(post.log_sigma) && post.mu.same_shape(eps));
    Matrix z(post.mu.rows, post.mu.cols);
    for (std::size_t i = 0; i < z.size(); ++i)
        z.a[i] = post.mu.a[i] + eps.a[i] * std::exp(post.log_sigma.a[i]);
    return z;
}

Matrix sample_gaussian(const GaussianPosterior& post, Rng& rng) {
    return sample_gaussian(post, draw_standard_normal(post.mu.rows, post.mu.cols, rng));
}

std::vector<double> kl_diag_gaussian(const GaussianPosterior& post) {
    assert(post.mu.same_shape(post.log_sigma));
    std::vector<double> out(post.mu.rows, 0.0);
    for (std::size_t i = 0; i < post.mu.rows; ++i) {
        const double* mu = post.mu.row(i);
        const double* ls = post.log_sigma.row(i);
        double acc = 0.0;
        for (std::size_t k = 0; k < post.mu.cols; ++k) {
            const double s2 = std::exp(2.0 * ls[k]);
            acc += mu[k] * mu[k] + s2 - 1.0 - 2.0 * ls[k];
        }
        out[i] = 0.5 * acc;
    }
    return out;
}

double kl_total(const GaussianPosterior& post) {
    auto per_row = kl_diag_gaussian(post);
    return kern::sum(per_row.data(), per_row.size());
}

void kl_backward(const GaussianPosterior& post, double scale, Matrix& dmu, Matrix& dlog_sigma) {
    assert(dmu.same_shape(post.mu) && dlog_sigma.same_shape(post.log_sigma));
    for (std::size_t i = 0; i < post.mu.size(); ++i) {
        dmu.a[i] += scale * post.mu.a[i];
        dlog_sigma.a[i] += scale * (std::exp(2.0 * post.log_sigma.a[i]) - 1.0);
    }
}

void softmax_rows(const Matrix& logits, Matrix& out) {
    if (!out.same_shape(logits)) out = Matrix(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* l = logits.row(i);
        double* o = out.row(i);
        const double m = kern::vmax(l, logits.cols);
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            o[j] = std::exp(l[j] - m);
            z += o[j];
        }
        kern::scal(o, 1.0 / z, logits.cols);
    }
}

MultinomialResult multinomial_ll(const Matrix& logits,
                                 std::span<const std::span<const ItemId>> rows,
                                 Matrix* grad_logits) {
    if (rows.size() != logits.rows) throw config_error("multinomial_ll: row count mismatch");
    MultinomialResult res;
    res.per_row.assign(rows.size(), 0.0);
    if (grad_logits && !grad_logits->same_shape(logits)) *grad_logits = Matrix(logits.rows, logits.cols);

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* l = logits.row(i);
        const double m = kern::vmax(l, logits.cols);
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) z += std::exp(l[j] - m);
        const double log_z = std::log(z);

        double ll = 0.0;
        for (ItemId j : rows[i]) ll += l[j] - m - log_z;
        res.per_row[i] = ll;
        res.total += ll;

        if (grad_logits) {
            double* g = grad_logits->row(i);
            const double n = static_cast<double>(rows[i].size());
            const double scale = n / z;
            for (std::size_t j = 0; j < logits.cols; ++j) g[j] = scale * std::exp(l[j] - m);
            for (ItemId j : rows[i]) g[j] -= 1.0;
        }
    }
    return res;
}

ContentLikelihood parse_content_likelihood(const std::string& s) {
    if (s == "gaussian") return ContentLikelihood::gaussian;
    if (s == "bernoulli") return ContentLikelihood::bernoulli;
    throw config_error("unknown content likelihood: " + s);
}

std::string to_string(ContentLikelihood mode) {
    return mode == ContentLikelihood::gaussian ? "gaussian" : "bernoulli";
}

ContentResult content_ll(const Matrix& x, const Matrix& xhat, ContentLikelihood mode,
                         double lambda_x, Matrix* grad_xhat) {
    if (!x.same_shape(xhat)) throw config_error("content_ll: shape mismatch");
    ContentResult res;
    res.per_row.assign(x.rows, 0.0);
    if (grad_xhat && !grad_xhat->same_shape(xhat)) *grad_xhat = Matrix(xhat.rows, xhat.cols);

    constexpr double kClampLo = 1e-7;
    constexpr double kClampHi = 1.0 - 1e-7;

    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        const double* hi = xhat.row(i);
        double* gi = grad_xhat ? grad_xhat->row(i) : nullptr;
        double ll = 0.0;
        if (mode == ContentLikelihood::gaussian) {
            for (std::size_t c = 0; c < x.cols; ++c) {
                const double d = xi[c] - hi[c];
                ll -= 0.5 * lambda_x * d * d;
                if (gi) gi[c] = lambda_x * (hi[c] - xi[c]);
            }
        } else {
            for (std::size_t c = 0; c < x.cols; ++c) {
                if (xi[c] < 0.0 || xi[c] > 1.0)
                    throw config_error("bernoulli content likelihood needs features in [0, 1]");
                const bool clamped = hi[c] < kClampLo || hi[c] > kClampHi;
                const double p = std::clamp(hi[c], kClampLo, kClampHi);
                ll += xi[c] * std::log(p) + (1.0 - xi[c]) * std::log(1.0 - p);
                if (gi) gi[c] = clamped ? 0.0 : -xi[c] / p + (1.0 - xi[c]) / (1.0 - p);
            }
        }
        res.per_row[i] = ll;
        res.total += ll;
    }
    return res;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
    if (params.size() != grads.size()) throw config_error("adam: params/grads size mismatch");
    if (m_.empty()) {
        for (const Matrix* g : grads) {
            m_.emplace_back(g->rows, g->cols);
            v_.emplace_back(g->rows, g->cols);
        }
    }
    if (m_.size() != params.size()) throw config_error("adam: parameter set changed size");

    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->same_shape(*grads[k]) || !m_[k].same_shape(*grads[k]))
            throw config_error("adam: gradient shape mismatch at tensor " + std::to_string(k));
        for (double g : grads[k]->a)
            if (!std::isfinite(g))
                throw numerical_error("adam: non-finite gradient in tensor " + std::to_string(k) +
                                      " at step " + std::to_string(t_ + 1));
    }

    ++t_;
    const double c1 = 1.0 / (1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const double c2 = 1.0 / (1.0 - std::pow(beta2_, static_cast<double>(t_)));
    for (std::size_t k = 0; k < params.size(); ++k)
        kern::adam_update(params[k]->a.data(), m_[k].a.data(), v_[k].a.data(),
                          grads[k]->a.data(), params[k]->size(), lr_, beta1_, beta2_, eps_, c1, c2);
}

GradCheckReport finite_diff_check(const std::function<double()>& objective,
                                  std::span<Matrix* const> params,
                                  std::span<const Matrix* const> analytic,
                                  const GradCheckOptions& opts) {
    if (params.size() != analytic.size())
        throw config_error("finite_diff_check: params/analytic size mismatch");

    std::size_t total = 0;
    for (const Matrix* p : params) total += p->size();

    std::vector<std::pair<std::size_t, std::size_t>> coords;  // (tensor, flat index)
    if (total <= opts.min_coords) {
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t i = 0; i < params[k]->size(); ++i) coords.emplace_back(k, i);
    } else {
        Rng rng(derive_seed(opts.seed, SeedStream::gradcheck));
        std::set<std::uint64_t> seen;
        while (coords.size() < opts.min_coords) {
            const std::uint64_t flat = rng.below(total);
            if (!seen.insert(flat).second) continue;
            std::uint64_t rest = flat;
            std::size_t k = 0;
            while (rest >= params[k]->size()) rest -= params[k]->size(), ++k;
            coords.emplace_back(k, static_cast<std::size_t>(rest));
        }
    }

    GradCheckReport report;
    report.coords_checked = coords.size();
    for (auto [k, i] : coords) {
        double& slot = params[k]->a[i];
        const double saved = slot;
        slot = saved + opts.h;
        const double f_plus = objective();
        slot = saved - opts.h;
        const double f_minus = objective();
        slot = saved;

        const double fd = (f_plus - f_minus) / (2.0 * opts.h);
        const double an = analytic[k]->a[i];
        const double mag = std::max(std::abs(fd), std::abs(an));
        const double err = mag < opts.abs_floor ? std::abs(fd - an) : std::abs(fd - an) / mag;
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            std::ostringstream os;
            os << "tensor " << k << " coord " << i << " analytic " << an << " fd " << fd;
            report.worst_coord = os.str();
        }
    }
    report.pass = report.max_rel_err < opts.tol;
    return report;
}

}  // namespace mdcvae
