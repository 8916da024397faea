#pragma once

#include <cstddef>
#include <vector>

namespace mdcvae {

// Row-major dense matrix of doubles. Rows are contiguous so the kernels can
// run straight over them.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double* row(std::size_t i) { return a.data() + i * cols; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }
    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
    std::size_t size() const { return a.size(); }
    void fill(double v) { a.assign(a.size(), v); }
    void zero() { fill(0.0); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// C(m,n) = A(m,k) * B(n,k)^T, i.e. C[i][j] = <A row i, B row j>.
void matmul_nt(Matrix& c, const Matrix& a, const Matrix& b);
// C(m,n) += A(m,k) * B(k,n), accumulated row-wise via axpy.
void matmul_nn_accum(Matrix& c, const Matrix& a, const Matrix& b);
// C(p,q) += A(m,p)^T * B(m,q); the dW = dY^T X pattern.
void matmul_tn_accum(Matrix& c, const Matrix& a, const Matrix& b);
// out(n) += column sums of A(m,n).
void add_col_sums(double* out, const Matrix& a);

bool all_finite(const Matrix& m);
double frobenius_sq(const Matrix& m);
// sum of squared differences, shapes must match
double sq_distance(const Matrix& a, const Matrix& b);

}  // namespace mdcvae
