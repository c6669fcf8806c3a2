#pragma once

// In-memory image-classification datasets: a synthetic "toy" generator with
// controllable class separation, per-channel normalization, and seeded
// stratified subsetting. Images are row vectors in channel-major order
// [ch][y][x]; values live in [0,1] before normalization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "distillforge/errors.hpp"
#include "distillforge/kernels.hpp"
#include "distillforge/matrix.hpp"
#include "distillforge/rng.hpp"

namespace distillforge::datakit {

struct ChannelLayout {
    int channels = 1;
    int height = 0;
    int width = 0;

    int dim() const { return channels * height * width; }
    bool operator==(const ChannelLayout&) const = default;
};

// Per-channel affine normalization stats, x_norm = (x - mean) / stddev.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    static NormStats identity(int channels) {
        NormStats s;
        s.mean.assign(channels, 0.0);
        s.stddev.assign(channels, 1.0);
        return s;
    }
    // Center-of-range convention for [0,1] image data.
    static NormStats image_default(int channels) {
        NormStats s;
        s.mean.assign(channels, 0.5);
        s.stddev.assign(channels, 0.5);
        return s;
    }
    void validate(int channels) const {
        if (static_cast<int>(mean.size()) != channels ||
            static_cast<int>(stddev.size()) != channels)
            throw ShapeError("normalization stats sized for " + std::to_string(mean.size()) +
                             " channels, data has " + std::to_string(channels));
        for (std::size_t c = 0; c < stddev.size(); ++c)
            if (!(stddev[c] > 0.0))
                throw ValidationError("channel " + std::to_string(c) +
                                      " has nonpositive stddev; cannot normalize");
    }
};

template <typename T>
struct Dataset {
    Matrix<T> images;         // one row per example
    std::vector<int> labels;  // class index per row
    int classes = 0;
    ChannelLayout layout;
    NormStats stats;          // stats the rows are currently normalized with
    bool normalized = false;

    int size() const { return images.rows; }

    void validate() const {
        if (images.rows != static_cast<int>(labels.size()))
            throw ShapeError("image rows != label count");
        if (images.cols != layout.dim())
            throw ShapeError("image dim " + std::to_string(images.cols) + " != layout dim " +
                             std::to_string(layout.dim()));
        if (classes < 2) throw ValidationError("dataset needs at least 2 classes");
        for (int y : labels)
            if (y < 0 || y >= classes) throw ValidationError("label outside class range");
        const auto counts = class_counts();
        for (int c = 0; c < classes; ++c)
            if (counts[c] == 0)
                throw ValidationError("class " + std::to_string(c) + " has no examples");
        if (!all_finite(images)) throw NumericError("dataset contains non-finite pixels");
    }

    std::vector<int> class_counts() const {
        std::vector<int> c(classes, 0);
        for (int y : labels) ++c[y];
        return c;
    }

    std::string digest() const {
        std::uint64_t h = fnv1a64(&classes, sizeof(classes));
        h = fnv1a64(&layout.channels, sizeof(int), h);
        h = fnv1a64(&layout.height, sizeof(int), h);
        h = fnv1a64(&layout.width, sizeof(int), h);
        h = fnv1a64(labels.data(), labels.size() * sizeof(int), h);
        h = fnv1a64(images.data.data(), images.size() * sizeof(T), h);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

// ------------------------------------------------------------------ toy data

// Class prototypes are placed along distinct coordinate axes so every pair of
// prototypes is exactly `separation` apart; examples are prototype + Gaussian
// pixel noise, clipped to [0,1] around a mid-gray base.
struct ToySpec {
    int classes = 4;
    int per_class = 100;
    ChannelLayout layout{2, 8, 8};
    double separation = 1.6;  // pairwise prototype distance
    double noise = 0.25;      // per-pixel Gaussian sigma
    std::uint64_t seed = 1;

    void validate() const {
        if (classes < 2) throw ValidationError("toy dataset needs at least 2 classes");
        if (per_class < 1) throw ValidationError("toy dataset needs at least 1 example per class");
        if (layout.dim() < classes)
            throw ValidationError("toy image dim must be >= class count for distinct prototypes");
        if (!(separation > 0.0) || !(noise > 0.0))
            throw ValidationError("toy separation and noise must be positive");
    }
};

template <typename T>
Dataset<T> make_toy_dataset(const ToySpec& spec) {
    spec.validate();
    const int dim = spec.layout.dim();
    const int n = spec.classes * spec.per_class;
    Rng rng(spec.seed);

    // Class c offsets axis c by (separation / sqrt(2)), which makes every
    // pairwise prototype distance sqrt(2) * separation / sqrt(2) = separation
    // exactly. The prototypes depend only on (classes, separation), never on
    // the seed, so two draws with different seeds are fresh samples from the
    // same mixture — the usual train/test relationship.
    const double amp = spec.separation / std::sqrt(2.0);
    Matrix<double> protos(spec.classes, dim, 0.5);
    for (int c = 0; c < spec.classes; ++c) protos.at(c, c) += amp;

    Dataset<T> ds;
    ds.classes = spec.classes;
    ds.layout = spec.layout;
    ds.stats = NormStats::identity(spec.layout.channels);
    ds.images = Matrix<T>(n, dim);
    ds.labels.resize(n);
    for (int c = 0; c < spec.classes; ++c) {
        for (int k = 0; k < spec.per_class; ++k) {
            const int r = c * spec.per_class + k;
            ds.labels[r] = c;
            T* row = ds.images.row(r);
            for (int j = 0; j < dim; ++j) {
                const double x = protos.at(c, j) + spec.noise * rng.normal();
                row[j] = static_cast<T>(std::min(1.0, std::max(0.0, x)));
            }
        }
    }
    ds.validate();
    return ds;
}

// -------------------------------------------------------------- normalization

// Per-channel population mean and stddev over every pixel of the dataset.
template <typename T>
NormStats compute_stats(const Matrix<T>& images, const ChannelLayout& layout) {
    if (images.cols != layout.dim()) throw ShapeError("image dim != layout dim");
    if (images.rows == 0) throw ValidationError("cannot compute stats of an empty dataset");
    const int plane = layout.height * layout.width;
    NormStats stats;
    stats.mean.resize(layout.channels);
    stats.stddev.resize(layout.channels);
    std::vector<double> vals(static_cast<std::size_t>(images.rows) * plane);
    for (int ch = 0; ch < layout.channels; ++ch) {
        std::size_t k = 0;
        for (int r = 0; r < images.rows; ++r) {
            const T* p = images.row(r) + ch * plane;
            for (int i = 0; i < plane; ++i) vals[k++] = static_cast<double>(p[i]);
        }
        const double mean = kernels::blocked_sum(vals.data(), vals.size()) /
                            static_cast<double>(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double d = vals[i] - mean;
            vals[i] = d * d;
        }
        const double var = kernels::blocked_sum(vals.data(), vals.size()) /
                           static_cast<double>(vals.size());
        stats.mean[ch] = mean;
        stats.stddev[ch] = std::sqrt(var);
        if (!(stats.stddev[ch] > 0.0))
            throw ValidationError("channel " + std::to_string(ch) +
                                  " has zero variance; cannot normalize");
    }
    return stats;
}

template <typename T>
void normalize_rows(Matrix<T>& images, const ChannelLayout& layout, const NormStats& stats) {
    stats.validate(layout.channels);
    if (images.cols != layout.dim()) throw ShapeError("image dim != layout dim");
    const int plane = layout.height * layout.width;
    for (int r = 0; r < images.rows; ++r) {
        T* row = images.row(r);
        for (int ch = 0; ch < layout.channels; ++ch) {
            const T mu = static_cast<T>(stats.mean[ch]);
            const T inv = static_cast<T>(1.0 / stats.stddev[ch]);
            T* p = row + ch * plane;
            for (int i = 0; i < plane; ++i) p[i] = (p[i] - mu) * inv;
        }
    }
}

template <typename T>
void denormalize_rows(Matrix<T>& images, const ChannelLayout& layout, const NormStats& stats) {
    stats.validate(layout.channels);
    if (images.cols != layout.dim()) throw ShapeError("image dim != layout dim");
    const int plane = layout.height * layout.width;
    for (int r = 0; r < images.rows; ++r) {
        T* row = images.row(r);
        for (int ch = 0; ch < layout.channels; ++ch) {
            const T mu = static_cast<T>(stats.mean[ch]);
            const T sd = static_cast<T>(stats.stddev[ch]);
            T* p = row + ch * plane;
            for (int i = 0; i < plane; ++i) p[i] = p[i] * sd + mu;
        }
    }
}

template <typename T>
void normalize(Dataset<T>& ds, const NormStats& stats) {
    if (ds.normalized) throw ValidationError("dataset is already normalized");
    normalize_rows(ds.images, ds.layout, stats);
    ds.stats = stats;
    ds.normalized = true;
}

// Stats computed from the data itself when none are supplied.
template <typename T>
void normalize(Dataset<T>& ds) {
    normalize(ds, compute_stats(ds.images, ds.layout));
}

template <typename T>
void denormalize(Dataset<T>& ds) {
    if (!ds.normalized) throw ValidationError("dataset is not normalized");
    denormalize_rows(ds.images, ds.layout, ds.stats);
    ds.stats = NormStats::identity(ds.layout.channels);
    ds.normalized = false;
}

// ------------------------------------------------------------------ subsets

// Seeded per-class pick from candidate row pools: shuffle each pool, truncate
// to `per_class`, sort ascending, concatenate in class order. Sorting makes a
// whole-class pick reproduce the original row order.
inline std::vector<int> pick_per_class(std::vector<std::vector<int>> by_class, int per_class,
                                       std::uint64_t seed, const std::string& pool_name) {
    if (per_class < 1) throw ValidationError("per-class subset size must be >= 1");
    for (std::size_t c = 0; c < by_class.size(); ++c)
        if (static_cast<int>(by_class[c].size()) < per_class)
            throw ValidationError("class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) + " " + pool_name +
                                  ", need " + std::to_string(per_class));
    std::vector<int> picked;
    picked.reserve(by_class.size() * per_class);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(c) + 1));
        rng.shuffle(by_class[c]);
        by_class[c].resize(per_class);
        std::sort(by_class[c].begin(), by_class[c].end());
        picked.insert(picked.end(), by_class[c].begin(), by_class[c].end());
    }
    return picked;
}

// Seeded stratified pick of `per_class` examples from each class.
template <typename T>
std::vector<int> stratified_indices(const Dataset<T>& ds, int per_class, std::uint64_t seed) {
    std::vector<std::vector<int>> by_class(ds.classes);
    for (int r = 0; r < ds.size(); ++r) by_class[ds.labels[r]].push_back(r);
    return pick_per_class(std::move(by_class), per_class, seed, "examples");
}

template <typename T>
Dataset<T> take_rows(const Dataset<T>& ds, const std::vector<int>& rows) {
    Dataset<T> out;
    out.classes = ds.classes;
    out.layout = ds.layout;
    out.stats = ds.stats;
    out.normalized = ds.normalized;
    out.images = Matrix<T>(static_cast<int>(rows.size()), ds.images.cols);
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        if (r < 0 || r >= ds.size()) throw ValidationError("subset row index out of range");
        std::copy(ds.images.row(r), ds.images.row(r) + ds.images.cols,
                  out.images.row(static_cast<int>(i)));
        out.labels[i] = ds.labels[r];
    }
    return out;
}

template <typename T>
Dataset<T> stratified_subset(const Dataset<T>& ds, int per_class, std::uint64_t seed) {
    return take_rows(ds, stratified_indices(ds, per_class, seed));
}

}  // namespace distillforge::datakit
