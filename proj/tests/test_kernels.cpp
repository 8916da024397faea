#include <doctest.h>

#include <cmath>
#include <vector>

#include "mdcvae/kernels.hpp"
#include "mdcvae/rng.hpp"

using namespace mdcvae;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() * scale;
    return v;
}

const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 31, 64, 100, 257, 1000};

}  // namespace

TEST_CASE("scalar reductions: basic correctness") {
    const double a[] = {1.0, 2.0, 3.0};
    const double b[] = {4.0, -5.0, 6.0};
    CHECK(kern::scalar::dot(a, b, 3) == doctest::Approx(12.0));
    CHECK(kern::scalar::sum(a, 3) == doctest::Approx(6.0));
    CHECK(kern::scalar::sqnorm(b, 3) == doctest::Approx(77.0));
    CHECK(kern::scalar::vmax(b, 3) == 6.0);
}

TEST_CASE("avx2 variants match the scalar reference") {
    if (!kern::avx2_supported()) return;
    Rng rng(99);
    for (std::size_t n : kSizes) {
        auto x = random_vec(n, rng);
        auto y = random_vec(n, rng);

        if (n > 0) CHECK(kern::avx2::vmax(x.data(), n) == kern::scalar::vmax(x.data(), n));

        // Reductions may reassociate; bound the relative error tightly.
        const double ds = kern::scalar::dot(x.data(), y.data(), n);
        const double da = kern::avx2::dot(x.data(), y.data(), n);
        CHECK(std::abs(ds - da) <= 1e-12 * (1.0 + std::abs(ds)));
        const double ss = kern::scalar::sum(x.data(), n);
        const double sa = kern::avx2::sum(x.data(), n);
        CHECK(std::abs(ss - sa) <= 1e-12 * (1.0 + std::abs(ss)));
        const double qs = kern::scalar::sqnorm(x.data(), n);
        const double qa = kern::avx2::sqnorm(x.data(), n);
        CHECK(std::abs(qs - qa) <= 1e-12 * (1.0 + qs));

        // Elementwise kernels perform the same per-lane operation sequence
        // and must agree bit for bit.
        auto y1 = y, y2 = y;
        kern::scalar::axpy(y1.data(), 0.37, x.data(), n);
        kern::avx2::axpy(y2.data(), 0.37, x.data(), n);
        CHECK(y1 == y2);

        auto s1 = x, s2 = x;
        kern::scalar::scal(s1.data(), -1.7, n);
        kern::avx2::scal(s2.data(), -1.7, n);
        CHECK(s1 == s2);

        std::vector<double> t(n);
        for (auto& v : t) v = std::tanh(rng.normal());
        std::vector<double> d1(n), d2(n);
        kern::scalar::tanh_backward(d1.data(), x.data(), t.data(), n);
        kern::avx2::tanh_backward(d2.data(), x.data(), t.data(), n);
        CHECK(d1 == d2);

        std::vector<double> sg(n);
        for (auto& v : sg) v = 1.0 / (1.0 + std::exp(-rng.normal()));
        kern::scalar::sigmoid_backward(d1.data(), x.data(), sg.data(), n);
        kern::avx2::sigmoid_backward(d2.data(), x.data(), sg.data(), n);
        CHECK(d1 == d2);

        auto p1 = random_vec(n, rng), m1 = random_vec(n, rng, 0.1), v1 = random_vec(n, rng, 0.01);
        for (auto& v : v1) v = std::abs(v);
        auto g = random_vec(n, rng);
        auto p2 = p1, m2 = m1, v2 = v1;
        kern::scalar::adam_update(p1.data(), m1.data(), v1.data(), g.data(), n, 1e-3, 0.9, 0.999,
                                  1e-8, 1.0 / (1 - 0.9), 1.0 / (1 - 0.999));
        kern::avx2::adam_update(p2.data(), m2.data(), v2.data(), g.data(), n, 1e-3, 0.9, 0.999,
                                1e-8, 1.0 / (1 - 0.9), 1.0 / (1 - 0.999));
        CHECK(p1 == p2);
        CHECK(m1 == m2);
        CHECK(v1 == v2);
    }
}

TEST_CASE("dispatch: forcing a backend routes the wrappers") {
    const auto original = kern::active_backend();
    const double x[] = {1.0, 2.0, 3.0, 4.0, 5.0};

    kern::force_backend(kern::Backend::scalar);
    CHECK(kern::backend_name() == "scalar");
    CHECK(kern::sum(x, 5) == kern::scalar::sum(x, 5));

    if (kern::avx2_supported()) {
        kern::force_backend(kern::Backend::avx2);
        CHECK(kern::backend_name() == "avx2");
        CHECK(kern::sum(x, 5) == kern::avx2::sum(x, 5));
    }
    kern::force_backend(original);
}

TEST_CASE("vmax handles negative-only and unaligned tails") {
    Rng rng(3);
    for (std::size_t n : {1u, 2u, 3u, 5u, 9u, 13u}) {
        std::vector<double> x(n);
        for (auto& v : x) v = -1.0 - rng.uniform();
        double m = x[0];
        for (double v : x) m = std::max(m, v);
        CHECK(kern::vmax(x.data(), n) == m);
    }
}
