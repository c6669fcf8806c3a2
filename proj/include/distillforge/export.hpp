#pragma once

// Distilled-dataset persistence and grid rendering.
//
// A distilled artifact is a directory:
//   images.bin       magic "DIMG" | u32 version | u32 rows | u32 cols
//                    | u8 dtype (4|8) | row-major little-endian values
//   labels.txt       hard mode: one integer per line
//   soft_labels.bin  soft mode: the label logits, same layout as images.bin
//                    (logits rather than softmax rows, so round trips are
//                    bitwise; the softmax is recomputed on load)
//   meta.txt         `key = value` lines: classes, ipc, mode, alpha,
//                    normalization stats, channel layout
//
// Grids render as binary PPM (P6), one cell per synthetic sample, classes
// down, samples-per-class across.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "distillforge/errors.hpp"
#include "distillforge/io.hpp"
#include "distillforge/synthetic.hpp"

namespace distillforge::datakit {

inline constexpr char kDimgMagic[4] = {'D', 'I', 'M', 'G'};
inline constexpr std::uint32_t kDimgVersion = 1;

namespace detail {

inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
void write_matrix_bin(const std::filesystem::path& path, const Matrix<T>& m) {
    io::Writer w;
    w.raw(kDimgMagic, 4);
    w.u32(kDimgVersion);
    w.u32(static_cast<std::uint32_t>(m.rows));
    w.u32(static_cast<std::uint32_t>(m.cols));
    w.u8(static_cast<std::uint8_t>(sizeof(T)));
    w.raw(m.data.data(), m.size() * sizeof(T));
    io::write_file_atomic(path, w.bytes.data(), w.bytes.size());
}

template <typename T>
Matrix<T> read_matrix_bin(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    io::Reader r(bytes, path.filename().string());
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kDimgMagic, 4) != 0)
        throw ParseError(ParseError::Code::bad_magic, r.name + " is not a distilled image file");
    const std::uint32_t version = r.u32();
    if (version != kDimgVersion)
        throw ParseError(ParseError::Code::bad_version,
                         r.name + " has unsupported version " + std::to_string(version));
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    const std::uint8_t dtype = r.u8();
    if (dtype != 4 && dtype != 8)
        throw ParseError(ParseError::Code::malformed,
                         r.name + " has unknown dtype tag " + std::to_string(dtype));
    if (dtype != sizeof(T))
        throw ParseError(ParseError::Code::malformed,
                         r.name + " stores " + std::to_string(dtype * 8) +
                             "-bit values, reader expects " + std::to_string(sizeof(T) * 8));
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
        throw ParseError(ParseError::Code::malformed, r.name + " claims an implausible shape");
    Matrix<T> m(static_cast<int>(rows), static_cast<int>(cols));
    r.need(m.size() * sizeof(T));
    r.raw(m.data.data(), m.size() * sizeof(T));
    if (r.at != r.size)
        throw ParseError(ParseError::Code::malformed,
                         r.name + " has " + std::to_string(r.size - r.at) + " trailing bytes");
    return m;
}

inline std::string join_channels(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += g17(v[i]);
    }
    return out;
}

inline std::vector<double> split_channels(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::strtod(s.substr(pos, comma - pos).c_str(), nullptr));
        pos = comma + 1;
    }
    return out;
}

}  // namespace detail

template <typename T>
void export_distilled(const std::filesystem::path& dir, const distill::SyntheticDataset<T>& syn) {
    syn.validate();
    std::filesystem::create_directories(dir);
    detail::write_matrix_bin(dir / "images.bin", syn.images);
    if (syn.mode == diffnet::LabelMode::hard) {
        std::string text;
        for (int y : syn.hard_labels) text += std::to_string(y) + "\n";
        io::write_text_atomic(dir / "labels.txt", text);
    } else {
        detail::write_matrix_bin(dir / "soft_labels.bin", syn.label_logits);
    }
    std::string meta;
    meta += "classes = " + std::to_string(syn.classes) + "\n";
    meta += "ipc = " + std::to_string(syn.ipc) + "\n";
    meta += std::string("mode = ") + (syn.mode == diffnet::LabelMode::hard ? "hard" : "soft") + "\n";
    meta += "alpha = " + detail::g17(static_cast<double>(syn.alpha)) + "\n";
    meta += "channels = " + std::to_string(syn.layout.channels) + "\n";
    meta += "height = " + std::to_string(syn.layout.height) + "\n";
    meta += "width = " + std::to_string(syn.layout.width) + "\n";
    meta += "norm_mean = " + detail::join_channels(syn.stats.mean) + "\n";
    meta += "norm_std = " + detail::join_channels(syn.stats.stddev) + "\n";
    io::write_text_atomic(dir / "meta.txt", meta);
}

template <typename T>
distill::SyntheticDataset<T> import_distilled(const std::filesystem::path& dir) {
    const std::string meta = io::read_text(dir / "meta.txt");
    distill::SyntheticDataset<T> syn;
    bool saw_mode = false;
    std::size_t pos = 0;
    while (pos < meta.size()) {
        std::size_t eol = meta.find('\n', pos);
        if (eol == std::string::npos) eol = meta.size();
        const std::string line = meta.substr(pos, eol - pos);
        pos = eol + 1;
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 3);
        if (key == "classes") syn.classes = std::atoi(val.c_str());
        else if (key == "ipc") syn.ipc = std::atoi(val.c_str());
        else if (key == "mode") {
            if (val != "hard" && val != "soft")
                throw ParseError(ParseError::Code::malformed,
                                 "meta.txt: unknown label mode '" + val + "'");
            syn.mode = val == "hard" ? diffnet::LabelMode::hard : diffnet::LabelMode::soft;
            saw_mode = true;
        } else if (key == "alpha") syn.alpha = static_cast<T>(std::strtod(val.c_str(), nullptr));
        else if (key == "channels") syn.layout.channels = std::atoi(val.c_str());
        else if (key == "height") syn.layout.height = std::atoi(val.c_str());
        else if (key == "width") syn.layout.width = std::atoi(val.c_str());
        else if (key == "norm_mean") syn.stats.mean = detail::split_channels(val);
        else if (key == "norm_std") syn.stats.stddev = detail::split_channels(val);
        else throw ParseError(ParseError::Code::malformed, "meta.txt: unknown key '" + key + "'");
    }
    if (!saw_mode || syn.classes < 2 || syn.ipc < 1)
        throw ParseError(ParseError::Code::malformed,
                         "meta.txt is missing classes / ipc / mode");

    syn.images = detail::read_matrix_bin<T>(dir / "images.bin");
    if (syn.images.rows != syn.classes * syn.ipc)
        throw ValidationError("images.bin holds " + std::to_string(syn.images.rows) +
                              " rows, meta.txt claims " + std::to_string(syn.classes * syn.ipc));

    if (syn.mode == diffnet::LabelMode::hard) {
        const std::string text = io::read_text(dir / "labels.txt");
        std::size_t p = 0;
        while (p < text.size()) {
            std::size_t eol = text.find('\n', p);
            if (eol == std::string::npos) eol = text.size();
            const std::string line = text.substr(p, eol - p);
            p = eol + 1;
            if (line.empty()) continue;
            char* end = nullptr;
            const long y = std::strtol(line.c_str(), &end, 10);
            if (end == line.c_str() || *end != '\0')
                throw ParseError(ParseError::Code::malformed,
                                 "labels.txt: '" + line + "' is not an integer");
            syn.hard_labels.push_back(static_cast<int>(y));
        }
        if (static_cast<int>(syn.hard_labels.size()) != syn.images.rows)
            throw ValidationError("labels.txt holds " + std::to_string(syn.hard_labels.size()) +
                                  " labels, images.bin holds " + std::to_string(syn.images.rows) +
                                  " rows");
    } else {
        syn.label_logits = detail::read_matrix_bin<T>(dir / "soft_labels.bin");
    }
    syn.validate();
    return syn;
}

// ------------------------------------------------------------------ grids

namespace detail {

// De-normalize one sample, clip to [0,1], and write its RGB cell into the
// canvas: 1 channel renders gray, 2 channels fill R and G, 3 map to RGB.
template <typename T>
void blit_cell(const T* sample, const ChannelLayout& layout, const NormStats& stats,
               std::vector<unsigned char>& canvas, int canvas_w, int y0, int x0) {
    const int hw = layout.height * layout.width;
    for (int y = 0; y < layout.height; ++y)
        for (int x = 0; x < layout.width; ++x) {
            unsigned char rgb[3] = {0, 0, 0};
            for (int ch = 0; ch < layout.channels; ++ch) {
                double v = static_cast<double>(sample[ch * hw + y * layout.width + x]);
                v = v * stats.stddev[ch] + stats.mean[ch];
                v = std::min(1.0, std::max(0.0, v));
                const auto byte = static_cast<unsigned char>(std::lround(255.0 * v));
                if (layout.channels == 1) {
                    rgb[0] = rgb[1] = rgb[2] = byte;
                } else {
                    rgb[ch] = byte;
                }
            }
            const std::size_t at =
                (static_cast<std::size_t>(y0 + y) * canvas_w + (x0 + x)) * 3;
            canvas[at + 0] = rgb[0];
            canvas[at + 1] = rgb[1];
            canvas[at + 2] = rgb[2];
        }
}

inline void write_ppm(const std::filesystem::path& path, const std::vector<unsigned char>& canvas,
                      int w, int h) {
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", w, h);
    std::vector<unsigned char> bytes(header, header + n);
    bytes.insert(bytes.end(), canvas.begin(), canvas.end());
    io::write_file_atomic(path, bytes.data(), bytes.size());
}

}  // namespace detail

// One grid: classes down, samples-per-class across, pixel dimensions exactly
// (classes * cell height, ipc * cell width).
template <typename T>
void export_image_grid(const distill::SyntheticDataset<T>& syn, const std::filesystem::path& path) {
    syn.validate();
    if (syn.layout.channels > 3)
        throw ValidationError("cannot render " + std::to_string(syn.layout.channels) +
                              " channels as RGB");
    if (syn.images.cols != syn.layout.dim())
        throw ShapeError("synthetic rows are not reshapeable to the channel layout");
    const int w = syn.ipc * syn.layout.width;
    const int h = syn.classes * syn.layout.height;
    std::vector<unsigned char> canvas(static_cast<std::size_t>(w) * h * 3, 0);
    for (int c = 0; c < syn.classes; ++c)
        for (int i = 0; i < syn.ipc; ++i)
            detail::blit_cell(syn.images.row(c * syn.ipc + i), syn.layout, syn.stats, canvas, w,
                              c * syn.layout.height, i * syn.layout.width);
    detail::write_ppm(path, canvas, w, h);
}

// Side-by-side variant: the initial state's grid on the left, the final on
// the right, split by a 2-pixel white gutter.
template <typename T>
void export_image_grid_pair(const distill::SyntheticDataset<T>& initial,
                            const distill::SyntheticDataset<T>& final_state,
                            const std::filesystem::path& path) {
    initial.validate();
    final_state.validate();
    if (initial.classes != final_state.classes || initial.ipc != final_state.ipc ||
        !(initial.layout == final_state.layout))
        throw ShapeError("initial and final synthetic sets disagree on shape");
    if (initial.layout.channels > 3)
        throw ValidationError("cannot render " + std::to_string(initial.layout.channels) +
                              " channels as RGB");
    const int gw = initial.ipc * initial.layout.width;
    const int h = initial.classes * initial.layout.height;
    const int gutter = 2;
    const int w = 2 * gw + gutter;
    std::vector<unsigned char> canvas(static_cast<std::size_t>(w) * h * 3, 255);
    for (int c = 0; c < initial.classes; ++c)
        for (int i = 0; i < initial.ipc; ++i) {
            const int row = c * initial.ipc + i;
            detail::blit_cell(initial.images.row(row), initial.layout, initial.stats, canvas, w,
                              c * initial.layout.height, i * initial.layout.width);
            detail::blit_cell(final_state.images.row(row), final_state.layout, final_state.stats,
                              canvas, w, c * initial.layout.height,
                              gw + gutter + i * initial.layout.width);
        }
    detail::write_ppm(path, canvas, w, h);
}

}  // namespace distillforge::datakit
