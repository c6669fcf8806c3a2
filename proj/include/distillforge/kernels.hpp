#pragma once

// Data-parallel compute kernels (OpenMP). Every kernel commits to a canonical
// floating-point accumulation order:
//   - per-element outputs (gemm, conv, elementwise) are each produced by one
//     serial inner loop, so threading never reorders their arithmetic;
//   - scalar reductions accumulate fixed-size blocks in ascending block order.
// The serial mirrors in kernels_ref.hpp follow the identical order, so results
// are bitwise equal between the two paths and across thread counts. Keep both
// files in sync when touching either.

#include <cstddef>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "distillforge/matrix.hpp"

namespace distillforge::kernels {

inline constexpr std::size_t kReduceBlock = 4096;
// Minimum per-element work (approx. flops) before spawning a parallel region.
inline constexpr std::size_t kParallelGrain = 32768;

namespace detail {
inline int& max_threads_slot() {
    static int v = 0;  // 0 = library default
    return v;
}
inline int& serial_depth() {
    thread_local int d = 0;
    return d;
}
}  // namespace detail

inline void set_max_threads(int n) {
    detail::max_threads_slot() = n;
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return detail::max_threads_slot() > 0 ? detail::max_threads_slot() : omp_get_max_threads();
#else
    return 1;
#endif
}

// Forces the calling thread's kernel invocations to run serially. Used by
// fan-out code paths (expert generation, per-seed evaluation) so worker
// threads do not each spawn an OpenMP team.
struct ScopedSerial {
    ScopedSerial() { ++detail::serial_depth(); }
    ~ScopedSerial() { --detail::serial_depth(); }
    ScopedSerial(const ScopedSerial&) = delete;
    ScopedSerial& operator=(const ScopedSerial&) = delete;
};

inline bool parallel_allowed() {
#ifdef _OPENMP
    return detail::serial_depth() == 0 && max_threads() > 1;
#else
    return false;
#endif
}

// ---------------------------------------------------------------- reductions

// Canonical blocked sum: serial within each kReduceBlock chunk, chunk partials
// combined in ascending order.
template <typename T>
T blocked_sum(const T* x, std::size_t n) {
    const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
    if (nblocks <= 1) {
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    std::vector<T> partial(nblocks, T(0));
    const bool par = parallel_allowed() && n >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t hi = lo + kReduceBlock < n ? lo + kReduceBlock : n;
        T s = T(0);
        for (std::size_t i = lo; i < hi; ++i) s += x[i];
        partial[static_cast<std::size_t>(b)] = s;
    }
    T s = T(0);
    for (std::size_t b = 0; b < nblocks; ++b) s += partial[b];
    return s;
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
    const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
    if (nblocks <= 1) {
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
        return s;
    }
    std::vector<T> partial(nblocks, T(0));
    const bool par = parallel_allowed() && 2 * n >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t hi = lo + kReduceBlock < n ? lo + kReduceBlock : n;
        T s = T(0);
        for (std::size_t i = lo; i < hi; ++i) s += x[i] * y[i];
        partial[static_cast<std::size_t>(b)] = s;
    }
    T s = T(0);
    for (std::size_t b = 0; b < nblocks; ++b) s += partial[b];
    return s;
}

template <typename T>
T sumsq(const T* x, std::size_t n) {
    return dot(x, x, n);
}

// --------------------------------------------------------------- elementwise

template <typename T>
void axpy(T a, const T* x, T* y, std::size_t n) {
    const bool par = parallel_allowed() && n >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] += a * x[i];
}

template <typename T>
void scale(T a, T* x, std::size_t n) {
    const bool par = parallel_allowed() && n >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) x[i] *= a;
}

// out (+)= a .* b
template <typename T>
void hadamard(const T* a, const T* b, T* out, std::size_t n, bool accumulate) {
    const bool par = parallel_allowed() && n >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const T v = a[i] * b[i];
        out[i] = accumulate ? out[i] + v : v;
    }
}

// out (+)= a .* b .* c
template <typename T>
void hadamard3(const T* a, const T* b, const T* c, T* out, std::size_t n, bool accumulate) {
    const bool par = parallel_allowed() && n >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const T v = a[i] * b[i] * c[i];
        out[i] = accumulate ? out[i] + v : v;
    }
}

// -------------------------------------------------------------------- gemm
// Row-major throughout. Each output element is one serial k-loop.

// C (+)= A(m x k) * B(k x n)
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
    const bool par = parallel_allowed() &&
                     static_cast<std::size_t>(m) * k * n >= kParallelGrain && m > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            T s = T(0);
            for (int p = 0; p < k; ++p) s += arow[p] * b[static_cast<std::size_t>(p) * n + j];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// C (+)= A(m x k) * B(n x k)^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
    const bool par = parallel_allowed() &&
                     static_cast<std::size_t>(m) * k * n >= kParallelGrain && m > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * k;
            T s = T(0);
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// C (+)= A(k x m)^T * B(k x n)
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
    const bool par = parallel_allowed() &&
                     static_cast<std::size_t>(m) * k * n >= kParallelGrain && m > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            T s = T(0);
            for (int p = 0; p < k; ++p)
                s += a[static_cast<std::size_t>(p) * m + i] * b[static_cast<std::size_t>(p) * n + j];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// Z[r,:] += bias
template <typename T>
void add_bias_rows(T* z, const T* bias, int rows, int cols) {
    const bool par = parallel_allowed() && static_cast<std::size_t>(rows) * cols >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int r = 0; r < rows; ++r) {
        T* zr = z + static_cast<std::size_t>(r) * cols;
        for (int j = 0; j < cols; ++j) zr[j] += bias[j];
    }
}

// out[j] (+)= sum_r G[r,j]; serial over rows in ascending order per column.
template <typename T>
void colsum(const T* g, T* out, int rows, int cols, bool accumulate) {
    const bool par = parallel_allowed() &&
                     static_cast<std::size_t>(rows) * cols >= kParallelGrain && cols > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int j = 0; j < cols; ++j) {
        T s = T(0);
        for (int r = 0; r < rows; ++r) s += g[static_cast<std::size_t>(r) * cols + j];
        out[j] = accumulate ? out[j] + s : s;
    }
}

// ------------------------------------------------------------------- conv2d
// Stride 1, zero padding pad = ksize/2 (spatial dims preserved), layouts:
//   activations: [row][ch][y][x] flattened per matrix row
//   weights:     [out_ch][in_ch][ky][kx], bias: [out_ch]

template <typename T>
void conv2d_forward(const T* in, const T* w, const T* bias, T* out, int batch, int in_ch,
                    int h, int wd, int out_ch, int ksize) {
    const int pad = ksize / 2;
    const std::size_t in_plane = static_cast<std::size_t>(h) * wd;
    const std::size_t work =
        static_cast<std::size_t>(batch) * out_ch * in_plane * in_ch * ksize * ksize;
    const bool par = parallel_allowed() && work >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2) if (par)
#endif
    for (int b = 0; b < batch; ++b) {
        for (int co = 0; co < out_ch; ++co) {
            const T* inb = in + static_cast<std::size_t>(b) * in_ch * in_plane;
            T* outp = out + (static_cast<std::size_t>(b) * out_ch + co) * in_plane;
            const T* wco = w + static_cast<std::size_t>(co) * in_ch * ksize * ksize;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < wd; ++x) {
                    T s = bias ? bias[co] : T(0);
                    for (int ci = 0; ci < in_ch; ++ci) {
                        const T* plane = inb + static_cast<std::size_t>(ci) * in_plane;
                        const T* wk = wco + static_cast<std::size_t>(ci) * ksize * ksize;
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int yy = y + ky - pad;
                            if (yy < 0 || yy >= h) continue;
                            for (int kx = 0; kx < ksize; ++kx) {
                                const int xx = x + kx - pad;
                                if (xx < 0 || xx >= wd) continue;
                                s += plane[static_cast<std::size_t>(yy) * wd + xx] *
                                     wk[static_cast<std::size_t>(ky) * ksize + kx];
                            }
                        }
                    }
                    outp[static_cast<std::size_t>(y) * wd + x] = s;
                }
            }
        }
    }
}

// din (+)= correlation transpose of dout with w.
template <typename T>
void conv2d_grad_input(const T* dout, const T* w, T* din, int batch, int in_ch, int h, int wd,
                       int out_ch, int ksize, bool accumulate) {
    const int pad = ksize / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const std::size_t work =
        static_cast<std::size_t>(batch) * in_ch * plane * out_ch * ksize * ksize;
    const bool par = parallel_allowed() && work >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2) if (par)
#endif
    for (int b = 0; b < batch; ++b) {
        for (int ci = 0; ci < in_ch; ++ci) {
            T* dinp = din + (static_cast<std::size_t>(b) * in_ch + ci) * plane;
            const T* doutb = dout + static_cast<std::size_t>(b) * out_ch * plane;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < wd; ++x) {
                    T s = T(0);
                    for (int co = 0; co < out_ch; ++co) {
                        const T* dop = doutb + static_cast<std::size_t>(co) * plane;
                        const T* wk = w + (static_cast<std::size_t>(co) * in_ch + ci) * ksize * ksize;
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int yy = y - ky + pad;
                            if (yy < 0 || yy >= h) continue;
                            for (int kx = 0; kx < ksize; ++kx) {
                                const int xx = x - kx + pad;
                                if (xx < 0 || xx >= wd) continue;
                                s += dop[static_cast<std::size_t>(yy) * wd + xx] *
                                     wk[static_cast<std::size_t>(ky) * ksize + kx];
                            }
                        }
                    }
                    const std::size_t idx = static_cast<std::size_t>(y) * wd + x;
                    dinp[idx] = accumulate ? dinp[idx] + s : s;
                }
            }
        }
    }
}

// dw (+)= weight gradient; each weight element sums serially over (b, y, x).
template <typename T>
void conv2d_grad_weight(const T* in, const T* dout, T* dw, int batch, int in_ch, int h, int wd,
                        int out_ch, int ksize, bool accumulate) {
    const int pad = ksize / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const int nweights = out_ch * in_ch * ksize * ksize;
    const std::size_t work = static_cast<std::size_t>(nweights) * batch * plane;
    const bool par = parallel_allowed() && work >= kParallelGrain && nweights > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int wi = 0; wi < nweights; ++wi) {
        const int kx = wi % ksize;
        const int ky = (wi / ksize) % ksize;
        const int ci = (wi / (ksize * ksize)) % in_ch;
        const int co = wi / (ksize * ksize * in_ch);
        T s = T(0);
        for (int b = 0; b < batch; ++b) {
            const T* inp = in + (static_cast<std::size_t>(b) * in_ch + ci) * plane;
            const T* dop = dout + (static_cast<std::size_t>(b) * out_ch + co) * plane;
            for (int y = 0; y < h; ++y) {
                const int yy = y + ky - pad;
                if (yy < 0 || yy >= h) continue;
                for (int x = 0; x < wd; ++x) {
                    const int xx = x + kx - pad;
                    if (xx < 0 || xx >= wd) continue;
                    s += dop[static_cast<std::size_t>(y) * wd + x] *
                         inp[static_cast<std::size_t>(yy) * wd + xx];
                }
            }
        }
        dw[wi] = accumulate ? dw[wi] + s : s;
    }
}

// dbias[co] (+)= sum over (b, y, x) of dout.
template <typename T>
void conv2d_grad_bias(const T* dout, T* dbias, int batch, int h, int wd, int out_ch,
                      bool accumulate) {
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const bool par = parallel_allowed() &&
                     static_cast<std::size_t>(batch) * out_ch * plane >= kParallelGrain &&
                     out_ch > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int co = 0; co < out_ch; ++co) {
        T s = T(0);
        for (int b = 0; b < batch; ++b) {
            const T* dop = dout + (static_cast<std::size_t>(b) * out_ch + co) * plane;
            for (std::size_t i = 0; i < plane; ++i) s += dop[i];
        }
        dbias[co] = accumulate ? dbias[co] + s : s;
    }
}

// ------------------------------------------------------------------ softmax

// Row-wise softmax with max subtraction.
template <typename T>
void row_softmax(const T* z, T* s, int rows, int cols) {
    const bool par = parallel_allowed() && static_cast<std::size_t>(rows) * cols >= kParallelGrain;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int r = 0; r < rows; ++r) {
        const T* zr = z + static_cast<std::size_t>(r) * cols;
        T* sr = s + static_cast<std::size_t>(r) * cols;
        T m = zr[0];
        for (int j = 1; j < cols; ++j)
            if (zr[j] > m) m = zr[j];
        T sum = T(0);
        for (int j = 0; j < cols; ++j) {
            sr[j] = std::exp(zr[j] - m);
            sum += sr[j];
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < cols; ++j) sr[j] *= inv;
    }
}

}  // namespace distillforge::kernels
