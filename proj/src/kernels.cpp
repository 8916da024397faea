#include "mdcvae/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "mdcvae/errors.hpp"

namespace mdcvae::kern {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sqnorm(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double vmax(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

void axpy(double* y, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scal(double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void tanh_backward(double* dpre, const double* dy, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dpre[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void sigmoid_backward(double* dpre, const double* dy, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dpre[i] = dy[i] * (y[i] * (1.0 - y[i]));
}

void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2) {
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * (gi * gi);
        const double mhat = m[i] * c1;
        const double vhat = v[i] * c2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

}  // namespace scalar

namespace {

struct KernelTable {
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*sqnorm)(const double*, std::size_t);
    double (*vmax)(const double*, std::size_t);
    void (*axpy)(double*, double, const double*, std::size_t);
    void (*scal)(double*, double, std::size_t);
    void (*tanh_backward)(double*, const double*, const double*, std::size_t);
    void (*sigmoid_backward)(double*, const double*, const double*, std::size_t);
    void (*adam_update)(double*, double*, double*, const double*, std::size_t,
                        double, double, double, double, double, double);
};

constexpr KernelTable kScalarTable = {
    scalar::dot,  scalar::sum,  scalar::sqnorm,        scalar::vmax,
    scalar::axpy, scalar::scal, scalar::tanh_backward, scalar::sigmoid_backward,
    scalar::adam_update,
};

#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table = {
    avx2::dot,  avx2::sum,  avx2::sqnorm,        avx2::vmax,
    avx2::axpy, avx2::scal, avx2::tanh_backward, avx2::sigmoid_backward,
    avx2::adam_update,
};
#endif

Backend pick_backend() {
    Backend b = avx2_supported() ? Backend::avx2 : Backend::scalar;
    if (const char* env = std::getenv("MDCVAE_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) b = Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) b = Backend::avx2;
    }
    return b;
}

struct Dispatch {
    Backend backend;
    const KernelTable* table;
    Dispatch() { set(pick_backend()); }
    void set(Backend b) {
        backend = b;
#if defined(__x86_64__) || defined(_M_X64)
        table = (b == Backend::avx2) ? &kAvx2Table : &kScalarTable;
#else
        table = &kScalarTable;
#endif
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Backend active_backend() { return dispatch().backend; }

std::string_view backend_name() {
    return dispatch().backend == Backend::avx2 ? "avx2" : "scalar";
}

void force_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_supported())
        throw config_error("avx2 kernels not supported on this CPU");
    dispatch().set(b);
}

double dot(const double* a, const double* b, std::size_t n) { return dispatch().table->dot(a, b, n); }
double sum(const double* x, std::size_t n) { return dispatch().table->sum(x, n); }
double sqnorm(const double* x, std::size_t n) { return dispatch().table->sqnorm(x, n); }
double vmax(const double* x, std::size_t n) { return dispatch().table->vmax(x, n); }
void axpy(double* y, double alpha, const double* x, std::size_t n) { dispatch().table->axpy(y, alpha, x, n); }
void scal(double* x, double alpha, std::size_t n) { dispatch().table->scal(x, alpha, n); }
void tanh_backward(double* dpre, const double* dy, const double* y, std::size_t n) {
    dispatch().table->tanh_backward(dpre, dy, y, n);
}
void sigmoid_backward(double* dpre, const double* dy, const double* y, std::size_t n) {
    dispatch().table->sigmoid_backward(dpre, dy, y, n);
}
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2) {
    dispatch().table->adam_update(p, m, v, g, n, lr, beta1, beta2, eps, c1, c2);
}

}  // namespace mdcvae::kern
