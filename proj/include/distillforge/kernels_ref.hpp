#pragma once

// Serial reference implementations of every kernel in kernels.hpp, in the same
// canonical accumulation order. Kept for tests and the kernel benchmark: the
// test suite asserts bitwise equality between this path and the OpenMP path.

#include <cmath>
#include <cstddef>
#include <vector>

#include "distillforge/kernels.hpp"

namespace distillforge::ref {

using kernels::kReduceBlock;

template <typename T>
T blocked_sum(const T* x, std::size_t n) {
    const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
    if (nblocks <= 1) {
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    std::vector<T> partial(nblocks, T(0));
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t lo = b * kReduceBlock;
        const std::size_t hi = lo + kReduceBlock < n ? lo + kReduceBlock : n;
        T s = T(0);
        for (std::size_t i = lo; i < hi; ++i) s += x[i];
        partial[b] = s;
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
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t lo = b * kReduceBlock;
        const std::size_t hi = lo + kReduceBlock < n ? lo + kReduceBlock : n;
        T s = T(0);
        for (std::size_t i = lo; i < hi; ++i) s += x[i] * y[i];
        partial[b] = s;
    }
    T s = T(0);
    for (std::size_t b = 0; b < nblocks; ++b) s += partial[b];
    return s;
}

template <typename T>
T sumsq(const T* x, std::size_t n) {
    return dot(x, x, n);
}

template <typename T>
void axpy(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale(T a, T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

template <typename T>
void hadamard(const T* a, const T* b, T* out, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < n; ++i) {
        const T v = a[i] * b[i];
        out[i] = accumulate ? out[i] + v : v;
    }
}

template <typename T>
void hadamard3(const T* a, const T* b, const T* c, T* out, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < n; ++i) {
        const T v = a[i] * b[i] * c[i];
        out[i] = accumulate ? out[i] + v : v;
    }
}

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
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

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
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

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
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

template <typename T>
void add_bias_rows(T* z, const T* bias, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        T* zr = z + static_cast<std::size_t>(r) * cols;
        for (int j = 0; j < cols; ++j) zr[j] += bias[j];
    }
}

template <typename T>
void colsum(const T* g, T* out, int rows, int cols, bool accumulate) {
    for (int j = 0; j < cols; ++j) {
        T s = T(0);
        for (int r = 0; r < rows; ++r) s += g[static_cast<std::size_t>(r) * cols + j];
        out[j] = accumulate ? out[j] + s : s;
    }
}

template <typename T>
void conv2d_forward(const T* in, const T* w, const T* bias, T* out, int batch, int in_ch, int h,
                    int wd, int out_ch, int ksize) {
    const int pad = ksize / 2;
    const std::size_t in_plane = static_cast<std::size_t>(h) * wd;
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

template <typename T>
void conv2d_grad_input(const T* dout, const T* w, T* din, int batch, int in_ch, int h, int wd,
                       int out_ch, int ksize, bool accumulate) {
    const int pad = ksize / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
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

template <typename T>
void conv2d_grad_weight(const T* in, const T* dout, T* dw, int batch, int in_ch, int h, int wd,
                        int out_ch, int ksize, bool accumulate) {
    const int pad = ksize / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const int nweights = out_ch * in_ch * ksize * ksize;
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

template <typename T>
void conv2d_grad_bias(const T* dout, T* dbias, int batch, int h, int wd, int out_ch,
                      bool accumulate) {
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    for (int co = 0; co < out_ch; ++co) {
        T s = T(0);
        for (int b = 0; b < batch; ++b) {
            const T* dop = dout + (static_cast<std::size_t>(b) * out_ch + co) * plane;
            for (std::size_t i = 0; i < plane; ++i) s += dop[i];
        }
        dbias[co] = accumulate ? dbias[co] + s : s;
    }
}

template <typename T>
void row_softmax(const T* z, T* s, int rows, int cols) {
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

}  // namespace distillforge::ref
