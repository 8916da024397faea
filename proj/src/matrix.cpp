#include "mdcvae/matrix.hpp"

#include <cassert>
#include <cmath>

#include "mdcvae/kernels.hpp"

namespace mdcvae {

void matmul_nt(Matrix& c, const Matrix& a, const Matrix& b) {
    assert(a.cols == b.cols);
    assert(c.rows == a.rows && c.cols == b.rows);
    const std::size_t k = a.cols;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) ci[j] = kern::dot(ai, b.row(j), k);
    }
}

void matmul_nn_accum(Matrix& c, const Matrix& a, const Matrix& b) {
    assert(a.cols == b.rows);
    assert(c.rows == a.rows && c.cols == b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t t = 0; t < a.cols; ++t) kern::axpy(ci, ai[t], b.row(t), b.cols);
    }
}

void matmul_tn_accum(Matrix& c, const Matrix& a, const Matrix& b) {
    assert(a.rows == b.rows);
    assert(c.rows == a.cols && c.cols == b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (std::size_t p = 0; p < a.cols; ++p) kern::axpy(c.row(p), ai[p], bi, b.cols);
    }
}

void add_col_sums(double* out, const Matrix& a) {
    for (std::size_t i = 0; i < a.rows; ++i) kern::axpy(out, 1.0, a.row(i), a.cols);
}

bool all_finite(const Matrix& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

double frobenius_sq(const Matrix& m) { return kern::sqnorm(m.a.data(), m.a.size()); }

double sq_distance(const Matrix& a, const Matrix& b) {
    assert(a.same_shape(b));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.a.size(); ++i) {
        const double d = a.a[i] - b.a[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace mdcvae
