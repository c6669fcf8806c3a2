#pragma once

// Shared file plumbing: whole-file reads, atomic writes (temp + rename), and
// little-endian scalar packing used by the binary formats.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "distillforge/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swaps");

namespace distillforge::io {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw IoError("cannot open " + path.string() + " for reading");
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<unsigned char> buf(size > 0 ? static_cast<std::size_t>(size) : 0);
    if (!buf.empty() && std::fread(buf.data(), 1, buf.size(), f) != buf.size()) {
        std::fclose(f);
        throw IoError("short read on " + path.string());
    }
    std::fclose(f);
    return buf;
}

// Write via a sibling temp file then rename, so readers never see a torn file.
inline void write_file_atomic(const std::filesystem::path& path, const void* data,
                              std::size_t size) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    std::FILE* f = std::fopen(tmp.string().c_str(), "wb");
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    if (size && std::fwrite(data, 1, size, f) != size) {
        std::fclose(f);
        std::remove(tmp.string().c_str());
        throw IoError("short write on " + tmp.string());
    }
    if (std::fclose(f) != 0) {
        std::remove(tmp.string().c_str());
        throw IoError("close failed on " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.string().c_str());
        throw IoError("rename to " + path.string() + " failed: " + ec.message());
    }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

inline std::string read_text(const std::filesystem::path& path) {
    const auto buf = read_file(path);
    return std::string(buf.begin(), buf.end());
}

// ------------------------------------------------------------ byte packing

struct Writer {
    std::vector<unsigned char> bytes;

    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct Reader {
    const unsigned char* p;
    std::size_t size;
    std::size_t at = 0;
    std::string name;  // for error messages

    Reader(const std::vector<unsigned char>& buf, std::string name_)
        : p(buf.data()), size(buf.size()), name(std::move(name_)) {}

    void need(std::size_t n) const {
        if (at + n > size)
            throw ParseError(ParseError::Code::truncated,
                             name + " truncated: expected " + std::to_string(at + n) +
                                 " bytes, found " + std::to_string(size));
    }
    void raw(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, p + at, n);
        at += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p + at), n);
        at += n;
        return s;
    }
};

}  // namespace distillforge::io
