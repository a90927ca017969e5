#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "iconvec/kernels.h"

using namespace iconvec;

namespace {

std::vector<double> rand_vec(size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("gemm variants match the serial reference bit for bit") {
    std::mt19937_64 rng(5);
    const std::array<std::array<int, 3>, 4> shapes{{{58, 64, 64}, {226, 256, 512}, {7, 3, 5}, {1, 64, 64}}};
    for (auto [n, k, m] : shapes) {
        auto A = rand_vec(size_t(n) * k, rng);
        auto B = rand_vec(size_t(k) * m, rng);
        auto Bt = rand_vec(size_t(m) * k, rng);
        std::vector<double> C1(size_t(n) * m), C2(size_t(n) * m);

        kern::gemm_nn(A.data(), B.data(), C1.data(), n, k, m);
        kern::serial::gemm_nn(A.data(), B.data(), C2.data(), n, k, m);
        CHECK(C1 == C2);

        kern::gemm_nt(A.data(), Bt.data(), C1.data(), n, k, m);
        kern::serial::gemm_nt(A.data(), Bt.data(), C2.data(), n, k, m);
        CHECK(C1 == C2);

        auto An = rand_vec(size_t(n) * k, rng);
        auto Bn = rand_vec(size_t(n) * m, rng);
        std::vector<double> D1(size_t(k) * m), D2(size_t(k) * m);
        kern::gemm_tn(An.data(), Bn.data(), D1.data(), n, k, m);
        kern::serial::gemm_tn(An.data(), Bn.data(), D2.data(), n, k, m);
        CHECK(D1 == D2);

        // Accumulating form.
        kern::gemm_nn(A.data(), B.data(), C1.data(), n, k, m, true);
        kern::serial::gemm_nn(A.data(), B.data(), C2.data(), n, k, m, true);
        CHECK(C1 == C2);
    }
}

TEST_CASE("gemm_nn against a hand-rolled triple loop") {
    std::mt19937_64 rng(11);
    int n = 9, k = 7, m = 8;
    auto A = rand_vec(size_t(n) * k, rng);
    auto B = rand_vec(size_t(k) * m, rng);
    std::vector<double> C(size_t(n) * m);
    kern::gemm_nn(A.data(), B.data(), C.data(), n, k, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += A[i * k + p] * B[p * m + j];
            CHECK(C[i * m + j] == doctest::Approx(s).epsilon(1e-13));
        }
}

TEST_CASE("softmax rows with causal limits match the reference and sum to 1") {
    std::mt19937_64 rng(7);
    int rows = 58, cols = 58;
    auto x = rand_vec(size_t(rows) * cols, rng);
    auto y = x;
    std::vector<int> limits(rows);
    for (int i = 0; i < rows; ++i) limits[i] = i + 1;
    kern::softmax_rows(x.data(), rows, cols, limits.data());
    kern::serial::softmax_rows(y.data(), rows, cols, limits.data());
    CHECK(x == y);
    for (int i = 0; i < rows; ++i) {
        double s = 0;
        for (int j = 0; j < cols; ++j) {
            s += x[i * cols + j];
            if (j > i) CHECK(x[i * cols + j] == 0.0);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layernorm forward/backward match the reference bit for bit") {
    std::mt19937_64 rng(13);
    int rows = 37, cols = 64;
    auto x = rand_vec(size_t(rows) * cols, rng);
    auto gain = rand_vec(cols, rng);
    auto bias = rand_vec(cols, rng);
    auto dy = rand_vec(size_t(rows) * cols, rng);

    std::vector<double> y1(x.size()), y2(x.size()), mean1(rows), mean2(rows), rstd1(rows), rstd2(rows);
    kern::layernorm_rows(x.data(), gain.data(), bias.data(), y1.data(), mean1.data(), rstd1.data(),
                         rows, cols, 1e-5);
    kern::serial::layernorm_rows(x.data(), gain.data(), bias.data(), y2.data(), mean2.data(),
                                 rstd2.data(), rows, cols, 1e-5);
    CHECK(y1 == y2);

    std::vector<double> dx1(x.size()), dx2(x.size()), dg1(cols), dg2(cols), db1(cols), db2(cols);
    kern::layernorm_backward_rows(x.data(), gain.data(), mean1.data(), rstd1.data(), dy.data(),
                                  dx1.data(), dg1.data(), db1.data(), rows, cols);
    kern::serial::layernorm_backward_rows(x.data(), gain.data(), mean2.data(), rstd2.data(),
                                          dy.data(), dx2.data(), dg2.data(), db2.data(), rows, cols);
    CHECK(dx1 == dx2);
    CHECK(dg1 == dg2);
    CHECK(db1 == db2);
}

TEST_CASE("layernorm backward against central differences") {
    std::mt19937_64 rng(3);
    int rows = 3, cols = 8;
    auto x = rand_vec(size_t(rows) * cols, rng);
    auto gain = rand_vec(cols, rng);
    auto bias = rand_vec(cols, rng);
    auto dy = rand_vec(size_t(rows) * cols, rng);

    auto loss = [&](const std::vector<double>& xv) {
        std::vector<double> y(xv.size()), mean(rows), rstd(rows);
        kern::serial::layernorm_rows(xv.data(), gain.data(), bias.data(), y.data(), mean.data(),
                                     rstd.data(), rows, cols, 1e-5);
        double s = 0;
        for (size_t i = 0; i < y.size(); ++i) s += y[i] * dy[i];
        return s;
    };
    std::vector<double> y(x.size()), mean(rows), rstd(rows), dx(x.size()), dg(cols), db(cols);
    kern::serial::layernorm_rows(x.data(), gain.data(), bias.data(), y.data(), mean.data(),
                                 rstd.data(), rows, cols, 1e-5);
    kern::serial::layernorm_backward_rows(x.data(), gain.data(), mean.data(), rstd.data(), dy.data(),
                                          dx.data(), dg.data(), db.data(), rows, cols);
    const double h = 1e-6;
    for (size_t i = 0; i < x.size(); i += 5) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        double num = (loss(xp) - loss(xm)) / (2 * h);
        CHECK(dx[i] == doctest::Approx(num).epsilon(1e-5));
    }
}

TEST_CASE("gelu and its gradient") {
    std::mt19937_64 rng(17);
    auto x = rand_vec(100, rng);
    std::vector<double> y1(100), y2(100);
    kern::gelu(x.data(), y1.data(), 100);
    kern::serial::gelu(x.data(), y2.data(), 100);
    CHECK(y1 == y2);
    CHECK(y1[0] == doctest::Approx(0.5 * x[0] * (1 + std::erf(x[0] / std::sqrt(2.0)))).epsilon(1e-14));

    std::vector<double> dy(100, 1.0), dx(100, 0.0);
    kern::gelu_backward(x.data(), dy.data(), dx.data(), 100);
    const double h = 1e-6;
    for (int i = 0; i < 100; i += 9) {
        double yp, ym;
        double xp = x[i] + h, xm = x[i] - h;
        kern::serial::gelu(&xp, &yp, 1);
        kern::serial::gelu(&xm, &ym, 1);
        CHECK(dx[i] == doctest::Approx((yp - ym) / (2 * h)).epsilon(1e-6));
    }
}

}  // TEST_SUITE
