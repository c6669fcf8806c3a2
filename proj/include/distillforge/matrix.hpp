#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "distillforge/errors.hpp"

namespace distillforge {

// Dense row-major matrix. Thin container; arithmetic lives in the kernels.
template <typename T>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    T* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const T* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    void fill(T v) { data.assign(data.size(), v); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

template <typename T>
bool all_finite(std::span<const T> v) {
    for (const T& x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
    return all_finite(std::span<const T>(m.data));
}

}  // namespace distillforge
