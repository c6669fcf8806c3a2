#pragma once

// Trajectory buffer persistence. Little-endian layout:
//   magic "TRJB" | u32 version (=1) | str spec digest | str dataset digest
//   | u64 seed | u32 n | u64 P | u8 dtype (4=single, 8=double)
//   | (n+1) x P values | u32 CRC32 of all preceding bytes
// where str = u32 byte length + UTF-8 bytes. Training hyper-parameters and
// per-epoch metrics ride in a text sidecar `<path>.meta.txt` so the buffer
// itself stays exactly this layout; a missing sidecar reads as defaults.

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "distillforge/errors.hpp"
#include "distillforge/io.hpp"
#include "distillforge/traj.hpp"

namespace distillforge::trajstore {

inline constexpr char kTrajMagic[4] = {'T', 'R', 'J', 'B'};
inline constexpr std::uint32_t kTrajVersion = 1;

struct BufferHeader {
    std::uint32_t version = 0;
    std::string spec_digest;
    std::string dataset_digest;
    std::uint64_t seed = 0;
    std::uint32_t epochs = 0;  // n; the buffer holds n+1 snapshots
    std::uint64_t params = 0;
    std::uint8_t dtype = 0;    // bytes per value
};

namespace detail {

inline std::uint32_t crc_of(const unsigned char* p, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

inline BufferHeader parse_header(io::Reader& r) {
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kTrajMagic, 4) != 0)
        throw ParseError(ParseError::Code::bad_magic, r.name + " is not a trajectory buffer");
    BufferHeader h;
    h.version = r.u32();
    if (h.version != kTrajVersion)
        throw ParseError(ParseError::Code::bad_version,
                         r.name + " has unsupported version " + std::to_string(h.version));
    h.spec_digest = r.str();
    h.dataset_digest = r.str();
    h.seed = r.u64();
    h.epochs = r.u32();
    h.params = r.u64();
    h.dtype = r.u8();
    if (h.dtype != 4 && h.dtype != 8)
        throw ParseError(ParseError::Code::malformed,
                         r.name + " has unknown dtype tag " + std::to_string(h.dtype));
    if (h.params == 0 || h.params > (1ull << 40) || h.epochs > (1u << 24))
        throw ParseError(ParseError::Code::malformed,
                         r.name + " header claims an implausible snapshot shape");
    return h;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

template <typename T>
void write_buffer(const Trajectory<T>& traj, const std::filesystem::path& path) {
    traj.validate();
    io::Writer w;
    w.raw(kTrajMagic, 4);
    w.u32(kTrajVersion);
    w.str(traj.spec_digest);
    w.str(traj.dataset_digest);
    w.u64(traj.seed);
    w.u32(static_cast<std::uint32_t>(traj.epochs()));
    w.u64(traj.params());
    w.u8(static_cast<std::uint8_t>(sizeof(T)));
    for (const auto& snap : traj.snapshots) w.raw(snap.data(), snap.size() * sizeof(T));
    const std::uint32_t crc = detail::crc_of(w.bytes.data(), w.bytes.size());
    w.u32(crc);
    io::write_file_atomic(path, w.bytes.data(), w.bytes.size());

    std::string meta;
    meta += "lr = " + detail::format_double(traj.train.lr) + "\n";
    meta += "momentum = " + detail::format_double(traj.train.momentum) + "\n";
    meta += "batch = " + std::to_string(traj.train.batch) + "\n";
    meta += "epochs = " + std::to_string(traj.train.epochs) + "\n";
    for (std::size_t e = 0; e < traj.epoch_stats.size(); ++e)
        meta += "epoch_" + std::to_string(e) + " = " + detail::format_double(traj.epoch_stats[e].loss) +
                " " + detail::format_double(traj.epoch_stats[e].accuracy) + "\n";
    io::write_text_atomic(path.string() + ".meta.txt", meta);
}

inline BufferHeader read_buffer_header(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    io::Reader r(bytes, path.filename().string());
    return detail::parse_header(r);
}

template <typename T>
Trajectory<T> read_buffer(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    io::Reader r(bytes, path.filename().string());
    const BufferHeader h = detail::parse_header(r);
    if (h.dtype != sizeof(T))
        throw ParseError(ParseError::Code::malformed,
                         r.name + " stores " + std::to_string(h.dtype * 8) +
                             "-bit values, reader expects " + std::to_string(sizeof(T) * 8));

    const std::size_t count = (static_cast<std::size_t>(h.epochs) + 1) * h.params;
    r.need(count * sizeof(T) + 4);  // payload + trailing checksum
    Trajectory<T> traj;
    traj.spec_digest = h.spec_digest;
    traj.dataset_digest = h.dataset_digest;
    traj.seed = h.seed;
    traj.snapshots.assign(h.epochs + 1, std::vector<T>(h.params));
    for (auto& snap : traj.snapshots) r.raw(snap.data(), snap.size() * sizeof(T));

    const std::size_t body = r.at;
    const std::uint32_t stored = r.u32();
    if (r.at != r.size)
        throw ParseError(ParseError::Code::malformed,
                         r.name + " has " + std::to_string(r.size - r.at) + " trailing bytes");
    const std::uint32_t computed = detail::crc_of(bytes.data(), body);
    if (stored != computed) {
        char msg[128];
        std::snprintf(msg, sizeof(msg), "%s checksum mismatch: stored %08x, computed %08x",
                      r.name.c_str(), stored, computed);
        throw ParseError(ParseError::Code::checksum_mismatch, msg);
    }

    traj.train.seed = h.seed;
    traj.train.epochs = static_cast<int>(h.epochs);
    const std::filesystem::path meta_path = path.string() + ".meta.txt";
    if (std::filesystem::exists(meta_path)) {
        const std::string text = io::read_text(meta_path);
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            const std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            const std::size_t eq = line.find(" = ");
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 3);
            if (key == "lr") traj.train.lr = std::strtod(val.c_str(), nullptr);
            else if (key == "momentum") traj.train.momentum = std::strtod(val.c_str(), nullptr);
            else if (key == "batch") traj.train.batch = std::atoi(val.c_str());
            else if (key == "epochs") traj.train.epochs = std::atoi(val.c_str());
            else if (key.rfind("epoch_", 0) == 0) {
                const std::size_t idx = std::strtoull(key.c_str() + 6, nullptr, 10);
                if (traj.epoch_stats.size() <= idx) traj.epoch_stats.resize(idx + 1);
                char* end = nullptr;
                traj.epoch_stats[idx].loss = std::strtod(val.c_str(), &end);
                traj.epoch_stats[idx].accuracy = std::strtod(end, nullptr);
            }
        }
    }
    traj.validate();
    return traj;
}

}  // namespace distillforge::trajstore
