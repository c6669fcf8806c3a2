// The parallel kernels and the serial reference must agree bit for bit on
// every input: the canonical accumulation order is the contract that makes
// results independent of thread count.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "distillforge/kernels.hpp"
#include "distillforge/kernels_ref.hpp"
#include "distillforge/rng.hpp"

using namespace distillforge;

namespace {

std::vector<double> rvec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * 8) == 0);
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, 8) == 0; }

}  // namespace

TEST_CASE("reductions match the reference bitwise across sizes") {
    // straddle the reduction block boundary deliberately
    for (std::size_t n : {std::size_t(1), std::size_t(7), std::size_t(4095), std::size_t(4096),
                          std::size_t(4097), std::size_t(65536 + 13)}) {
        const auto x = rvec(n, 100 + n);
        const auto y = rvec(n, 200 + n);
        CHECK(bits_equal(kernels::blocked_sum(x.data(), n), ref::blocked_sum(x.data(), n)));
        CHECK(bits_equal(kernels::dot(x.data(), y.data(), n), ref::dot(x.data(), y.data(), n)));
        CHECK(bits_equal(kernels::sumsq(x.data(), n), ref::sumsq(x.data(), n)));
    }
}

TEST_CASE("dense kernels match the reference bitwise") {
    Rng shapes(42);
    for (int trial = 0; trial < 8; ++trial) {
        const int m = 1 + static_cast<int>(shapes.below(40));
        const int k = 1 + static_cast<int>(shapes.below(40));
        const int n = 1 + static_cast<int>(shapes.below(40));
        const auto a = rvec(static_cast<std::size_t>(m) * k, 7 * trial + 1);
        const auto b = rvec(static_cast<std::size_t>(k) * n, 7 * trial + 2);
        const auto bt = rvec(static_cast<std::size_t>(n) * k, 7 * trial + 3);
        const auto init = rvec(static_cast<std::size_t>(m) * n, 7 * trial + 4);

        for (bool acc : {false, true}) {
            auto c1 = init, c2 = init;
            kernels::gemm_nn(a.data(), b.data(), c1.data(), m, k, n, acc);
            ref::gemm_nn(a.data(), b.data(), c2.data(), m, k, n, acc);
            CHECK(bits_equal(c1, c2));

            auto d1 = init, d2 = init;
            kernels::gemm_nt(a.data(), bt.data(), d1.data(), m, k, n, acc);
            ref::gemm_nt(a.data(), bt.data(), d2.data(), m, k, n, acc);
            CHECK(bits_equal(d1, d2));
        }

        // gemm_tn: A is (k x m), result (m x n)
        const auto at = rvec(static_cast<std::size_t>(k) * m, 7 * trial + 5);
        const auto b2 = rvec(static_cast<std::size_t>(k) * n, 7 * trial + 6);
        auto e1 = init, e2 = init;
        kernels::gemm_tn(at.data(), b2.data(), e1.data(), m, k, n, true);
        ref::gemm_tn(at.data(), b2.data(), e2.data(), m, k, n, true);
        CHECK(bits_equal(e1, e2));
    }
}

TEST_CASE("gemm_nn against a plain triple loop") {
    const int m = 5, k = 9, n = 4;
    const auto a = rvec(static_cast<std::size_t>(m) * k, 11);
    const auto b = rvec(static_cast<std::size_t>(k) * n, 12);
    std::vector<double> want(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            want[i * n + j] = s;
        }
    std::vector<double> got(static_cast<std::size_t>(m) * n, 0.0);
    kernels::gemm_nn(a.data(), b.data(), got.data(), m, k, n, false);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("conv kernels match the reference bitwise") {
    Rng shapes(43);
    for (int trial = 0; trial < 4; ++trial) {
        const int rows = 1 + static_cast<int>(shapes.below(6));
        const int in_ch = 1 + static_cast<int>(shapes.below(3));
        const int h = 3 + static_cast<int>(shapes.below(6));
        const int w = 3 + static_cast<int>(shapes.below(6));
        const int out_ch = 1 + static_cast<int>(shapes.below(4));
        const int ks = shapes.below(2) ? 3 : 5;

        const auto x = rvec(static_cast<std::size_t>(rows) * in_ch * h * w, 900 + trial);
        const auto wgt = rvec(static_cast<std::size_t>(out_ch) * in_ch * ks * ks, 910 + trial);
        const auto bias = rvec(out_ch, 920 + trial);

        std::vector<double> y1(static_cast<std::size_t>(rows) * out_ch * h * w), y2 = y1;
        kernels::conv2d_forward(x.data(), wgt.data(), bias.data(), y1.data(), rows, in_ch, h, w,
                                out_ch, ks);
        ref::conv2d_forward(x.data(), wgt.data(), bias.data(), y2.data(), rows, in_ch, h, w,
                            out_ch, ks);
        CHECK(bits_equal(y1, y2));

        const auto dy = rvec(y1.size(), 930 + trial);
        std::vector<double> dx1(x.size()), dx2(x.size());
        kernels::conv2d_grad_input(dy.data(), wgt.data(), dx1.data(), rows, in_ch, h, w, out_ch,
                                   ks, false);
        ref::conv2d_grad_input(dy.data(), wgt.data(), dx2.data(), rows, in_ch, h, w, out_ch, ks,
                               false);
        CHECK(bits_equal(dx1, dx2));

        std::vector<double> dw1(wgt.size()), dw2(wgt.size());
        kernels::conv2d_grad_weight(x.data(), dy.data(), dw1.data(), rows, in_ch, h, w, out_ch,
                                    ks, false);
        ref::conv2d_grad_weight(x.data(), dy.data(), dw2.data(), rows, in_ch, h, w, out_ch, ks,
                                false);
        CHECK(bits_equal(dw1, dw2));

        std::vector<double> db1(out_ch), db2(out_ch);
        kernels::conv2d_grad_bias(dy.data(), db1.data(), rows, h, w, out_ch, false);
        ref::conv2d_grad_bias(dy.data(), db2.data(), rows, h, w, out_ch, false);
        CHECK(bits_equal(db1, db2));
    }
}

TEST_CASE("conv2d_forward against a direct padded sum") {
    const int rows = 2, in_ch = 2, h = 4, w = 5, out_ch = 3, ks = 3;
    const auto x = rvec(static_cast<std::size_t>(rows) * in_ch * h * w, 77);
    const auto wgt = rvec(static_cast<std::size_t>(out_ch) * in_ch * ks * ks, 78);
    const auto bias = rvec(out_ch, 79);
    std::vector<double> got(static_cast<std::size_t>(rows) * out_ch * h * w);
    kernels::conv2d_forward(x.data(), wgt.data(), bias.data(), got.data(), rows, in_ch, h, w,
                            out_ch, ks);
    const int pad = ks / 2;
    for (int r = 0; r < rows; ++r)
        for (int co = 0; co < out_ch; ++co)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    double s = bias[co];
                    for (int ci = 0; ci < in_ch; ++ci)
                        for (int ky = 0; ky < ks; ++ky)
                            for (int kx = 0; kx < ks; ++kx) {
                                const int sy = y + ky - pad, sx = xx + kx - pad;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                                s += x[((r * in_ch + ci) * h + sy) * w + sx] *
                                     wgt[((co * in_ch + ci) * ks + ky) * ks + kx];
                            }
                    const double want = s;
                    const double g = got[((r * out_ch + co) * h + y) * w + xx];
                    CHECK(g == doctest::Approx(want).epsilon(1e-12));
                }
}

TEST_CASE("elementwise and softmax kernels match the reference") {
    const std::size_t n = 3000;
    const auto x = rvec(n, 55);
    const auto y = rvec(n, 56);

    auto a1 = rvec(n, 57), a2 = a1;
    kernels::axpy(0.37, x.data(), a1.data(), n);
    ref::axpy(0.37, x.data(), a2.data(), n);
    CHECK(bits_equal(a1, a2));

    auto s1 = x, s2 = x;
    kernels::scale(1.7, s1.data(), n);
    ref::scale(1.7, s2.data(), n);
    CHECK(bits_equal(s1, s2));

    std::vector<double> h1(n), h2(n);
    kernels::hadamard(x.data(), y.data(), h1.data(), n, false);
    ref::hadamard(x.data(), y.data(), h2.data(), n, false);
    CHECK(bits_equal(h1, h2));

    const int rows = 17, cols = 11;
    const auto z = rvec(static_cast<std::size_t>(rows) * cols, 58);
    std::vector<double> p1(z.size()), p2(z.size());
    kernels::row_softmax(z.data(), p1.data(), rows, cols);
    ref::row_softmax(z.data(), p2.data(), rows, cols);
    CHECK(bits_equal(p1, p2));
    for (int r = 0; r < rows; ++r) {
        double s = 0;
        for (int c = 0; c < cols; ++c) {
            CHECK(p1[r * cols + c] > 0.0);
            s += p1[r * cols + c];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

    std::vector<double> c1(cols), c2(cols);
    kernels::colsum(z.data(), c1.data(), rows, cols, false);
    ref::colsum(z.data(), c2.data(), rows, cols, false);
    CHECK(bits_equal(c1, c2));
}

TEST_CASE("thread cap changes nothing") {
    const int m = 33, k = 47, n = 29;
    const auto a = rvec(static_cast<std::size_t>(m) * k, 64);
    const auto b = rvec(static_cast<std::size_t>(k) * n, 65);
    std::vector<double> base(static_cast<std::size_t>(m) * n, 0.0);
    kernels::gemm_nn(a.data(), b.data(), base.data(), m, k, n, false);

    const int saved = kernels::max_threads();
    for (int threads : {1, 2, 3, 8}) {
        kernels::set_max_threads(threads);
        std::vector<double> c(base.size(), 0.0);
        kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
        CHECK(bits_equal(c, base));
    }
    kernels::set_max_threads(saved);

    {
        kernels::ScopedSerial guard;
        std::vector<double> c(base.size(), 0.0);
        kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
        CHECK(bits_equal(c, base));
    }
}
