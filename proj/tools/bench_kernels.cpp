// Benchmark: OpenMP kernels vs the serial reference implementation.
// Also asserts bitwise equality between the two paths on every case, since
// the whole point of the canonical accumulation order is that threading
// never changes a single bit.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "distillforge/kernels.hpp"
#include "distillforge/kernels_ref.hpp"
#include "distillforge/rng.hpp"

using namespace distillforge;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        Timer t;
        f();
        best = std::min(best, t.ms());
    }
    return best;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * 8) == 0;
}

void report(const char* name, double serial_ms, double omp_ms, bool exact) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx   %s\n", name, serial_ms, omp_ms,
                serial_ms / omp_ms, exact ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
    std::printf("threads: %d\n", kernels::max_threads());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    {
        const int m = 256, k = 512, n = 256;
        const auto a = random_vec(static_cast<std::size_t>(m) * k, 1);
        const auto b = random_vec(static_cast<std::size_t>(k) * n, 2);
        std::vector<double> c1(static_cast<std::size_t>(m) * n), c2 = c1;
        const double ts = time_best_of(3, [&] { ref::gemm_nn(a.data(), b.data(), c1.data(), m, k, n, false); });
        const double tp = time_best_of(3, [&] { kernels::gemm_nn(a.data(), b.data(), c2.data(), m, k, n, false); });
        report("gemm_nn 256x512x256", ts, tp, bits_equal(c1, c2));
    }
    {
        const int m = 256, k = 256, n = 512;
        const auto a = random_vec(static_cast<std::size_t>(m) * k, 3);
        const auto b = random_vec(static_cast<std::size_t>(n) * k, 4);
        std::vector<double> c1(static_cast<std::size_t>(m) * n), c2 = c1;
        const double ts = time_best_of(3, [&] { ref::gemm_nt(a.data(), b.data(), c1.data(), m, k, n, false); });
        const double tp = time_best_of(3, [&] { kernels::gemm_nt(a.data(), b.data(), c2.data(), m, k, n, false); });
        report("gemm_nt 256x256x512", ts, tp, bits_equal(c1, c2));
    }
    {
        const int rows = 64, in_ch = 8, h = 16, w = 16, out_ch = 16, ks = 3;
        const auto x = random_vec(static_cast<std::size_t>(rows) * in_ch * h * w, 5);
        const auto wgt = random_vec(static_cast<std::size_t>(out_ch) * in_ch * ks * ks, 6);
        const auto bias = random_vec(out_ch, 7);
        std::vector<double> y1(static_cast<std::size_t>(rows) * out_ch * h * w), y2 = y1;
        const double ts = time_best_of(3, [&] {
            ref::conv2d_forward(x.data(), wgt.data(), bias.data(), y1.data(), rows, in_ch, h, w, out_ch, ks);
        });
        const double tp = time_best_of(3, [&] {
            kernels::conv2d_forward(x.data(), wgt.data(), bias.data(), y2.data(), rows, in_ch, h, w, out_ch, ks);
        });
        report("conv2d 64x8x16x16->16", ts, tp, bits_equal(y1, y2));
    }
    {
        const std::size_t n = 1u << 24;
        const auto x = random_vec(n, 8);
        double s1 = 0, s2 = 0;
        const double ts = time_best_of(3, [&] { s1 = ref::blocked_sum(x.data(), n); });
        const double tp = time_best_of(3, [&] { s2 = kernels::blocked_sum(x.data(), n); });
        report("blocked_sum 16M", ts, tp, std::memcmp(&s1, &s2, 8) == 0);
    }
    {
        const std::size_t n = 1u << 24;
        const auto x = random_vec(n, 9);
        const auto y = random_vec(n, 10);
        double s1 = 0, s2 = 0;
        const double ts = time_best_of(3, [&] { s1 = ref::dot(x.data(), y.data(), n); });
        const double tp = time_best_of(3, [&] { s2 = kernels::dot(x.data(), y.data(), n); });
        report("dot 16M", ts, tp, std::memcmp(&s1, &s2, 8) == 0);
    }
    return 0;
}
