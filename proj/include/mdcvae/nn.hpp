#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mdcvae/data.hpp"
#include "mdcvae/matrix.hpp"
#include "mdcvae/rng.hpp"

namespace mdcvae {

enum class Activation { linear, tanh_act, sigmoid, softmax };

// Fully connected layer, W is (out, in), b is (1, out).
struct DenseLayer {
    Matrix W;
    Matrix b;
    Activation act = Activation::linear;

    DenseLayer() = default;
    DenseLayer(std::size_t out, std::size_t in, Activation a)
        : W(out, in), b(1, out), act(a) {}
    std::size_t out_dim() const { return W.rows; }
    std::size_t in_dim() const { return W.cols; }
};

// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
void init_glorot(DenseLayer& layer, Rng& rng);
void init_glorot(Matrix& w, Rng& rng);

// y(n, out) = act(x(n, in) W^T + b)
void layer_forward(const DenseLayer& layer, const Matrix& x, Matrix& y);

// Given d(loss)/dY, cached input X and output Y, accumulate dW, db and
// (optionally) produce dX. For a softmax layer, dy must already be the
// gradient w.r.t. the logits (fused softmax head).
void layer_backward(const DenseLayer& layer, const Matrix& x, const Matrix& y,
                    const Matrix& dy, Matrix& dw, Matrix& db, Matrix* dx);

struct MlpSpec {
    std::vector<std::size_t> layer_dims;  // [in, h1, ..., out]
    Activation output_act = Activation::linear;
};

std::vector<DenseLayer> make_mlp(const MlpSpec& spec, Rng& rng);

struct MlpCache {
    const void* stamp = nullptr;  // identity of the layer stack it came from
    Matrix input;
    std::vector<Matrix> activations;
};

struct MlpGrads {
    std::vector<Matrix> dw;
    std::vector<Matrix> db;
};

MlpGrads make_grads(std::span<const DenseLayer> layers);

// Returns the output (copy of the last activation); fills the cache.
Matrix mlp_forward(std::span<const DenseLayer> layers, const Matrix& x, MlpCache& cache);

// Accumulates into grads; returns dX. Throws std::logic_error on a cache that
// does not belong to `layers` (stale-cache contract).
Matrix mlp_backward(std::span<const DenseLayer> layers, const MlpCache& cache,
                    const Matrix& dy, MlpGrads& grads);

struct GaussianPosterior {
    Matrix mu;         // (batch, K)
    Matrix log_sigma;  // (batch, K), clamped to [-10, 10] by the encoders
};

inline constexpr double kLogSigmaClamp = 10.0;

// z = mu + eps .* exp(log_sigma)
Matrix sample_gaussian(const GaussianPosterior& post, Rng& rng);
Matrix sample_gaussian(const GaussianPosterior& post, const Matrix& eps);
Matrix draw_standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

// KL(q || N(0, I)) per row: 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma).
std::vector<double> kl_diag_gaussian(const GaussianPosterior& post);
double kl_total(const GaussianPosterior& post);
// d(scale * KL)/dmu = scale*mu, d/dlog_sigma = scale*(sigma^2 - 1); accumulated.
void kl_backward(const GaussianPosterior& post, double scale, Matrix& dmu, Matrix& dlog_sigma);

void softmax_rows(const Matrix& logits, Matrix& out);

// Multinomial log-likelihood of binary rows under softmax(logits), summed per
// row via max-subtracted log-sum-exp. grad_logits (optional, assigned) is the
// gradient of the NEGATED total: n_i * softmax(logits_i) - r_i.
struct MultinomialResult {
    double total = 0.0;
    std::vector<double> per_row;
};
MultinomialResult multinomial_ll(const Matrix& logits,
                                 std::span<const std::span<const ItemId>> rows,
                                 Matrix* grad_logits = nullptr);

enum class ContentLikelihood { gaussian, bernoulli };

ContentLikelihood parse_content_likelihood(const std::string& s);
std::string to_string(ContentLikelihood mode);

// gaussian: -(lambda_x/2) * |x - xhat|^2 per row (constants dropped);
// bernoulli: sum x log p + (1-x) log(1-p), p = xhat clamped to [1e-7, 1-1e-7].
// grad_xhat (optional, assigned) is the gradient of the NEGATED total.
struct ContentResult {
    double total = 0.0;
    std::vector<double> per_row;
};
ContentResult content_ll(const Matrix& x, const Matrix& xhat, ContentLikelihood mode,
                         double lambda_x, Matrix* grad_xhat = nullptr);

// Bias-corrected Adam, descent on the supplied gradients. Moments are lazily
// shaped on the first step; a non-finite gradient aborts with diagnostics.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads);
    std::uint64_t steps_taken() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    std::size_t min_coords = 200;
    double abs_floor = 1e-6;  // below this on both sides, compare absolutely
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::size_t coords_checked = 0;
    std::string worst_coord;
};

// Central-difference check of analytic gradients on a random subsample of
// coordinates. The objective must be deterministic (frozen noise, no dropout).
GradCheckReport finite_diff_check(const std::function<double()>& objective,
                                  std::span<Matrix* const> params,
                                  std::span<const Matrix* const> analytic,
                                  const GradCheckOptions& opts = {});

}  // namespace mdcvae
