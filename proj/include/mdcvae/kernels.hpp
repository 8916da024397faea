#pragma once

#include <cstddef>
#include <string_view>

// Double-precision kernels behind all dense math in this project. Each kernel
// has a scalar reference implementation and, on x86-64, an AVX2 variant picked
// once at startup (override with MDCVAE_KERNELS=scalar|avx2 or force_backend).
// Transcendentals (exp, log, tanh) stay on scalar libm in both variants, so
// the variants differ only by the reassociation of vectorized reductions;
// elementwise kernels are bit-identical across backends.

namespace mdcvae::kern {

enum class Backend { scalar, avx2 };

Backend active_backend();
std::string_view backend_name();
bool avx2_supported();
void force_backend(Backend b);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sqnorm(const double* x, std::size_t n);
double vmax(const double* x, std::size_t n);  // n >= 1

// y += alpha * x
void axpy(double* y, double alpha, const double* x, std::size_t n);
// x *= alpha
void scal(double* x, double alpha, std::size_t n);
// dpre = dy * (1 - y^2) with y = tanh(pre)
void tanh_backward(double* dpre, const double* dy, const double* y, std::size_t n);
// dpre = dy * y * (1 - y) with y = sigmoid(pre)
void sigmoid_backward(double* dpre, const double* dy, const double* y, std::size_t n);
// Bias-corrected Adam descent step. c1 = 1/(1-beta1^t), c2 = 1/(1-beta2^t).
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sqnorm(const double* x, std::size_t n);
double vmax(const double* x, std::size_t n);
void axpy(double* y, double alpha, const double* x, std::size_t n);
void scal(double* x, double alpha, std::size_t n);
void tanh_backward(double* dpre, const double* dy, const double* y, std::size_t n);
void sigmoid_backward(double* dpre, const double* dy, const double* y, std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sqnorm(const double* x, std::size_t n);
double vmax(const double* x, std::size_t n);
void axpy(double* y, double alpha, const double* x, std::size_t n);
void scal(double* x, double alpha, std::size_t n);
void tanh_backward(double* dpre, const double* dy, const double* y, std::size_t n);
void sigmoid_backward(double* dpre, const double* dy, const double* y, std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2);
}  // namespace avx2
#endif

}  // namespace mdcvae::kern
