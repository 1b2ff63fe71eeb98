#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "tribyol/error.hpp"

namespace tribyol::io {

namespace fs = std::filesystem;

inline std::vector<uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf((size_t)size);
    in.read(reinterpret_cast<char*>(buf.data()), size);
    if (!in) throw DataError("short read on " + path.string());
    return buf;
}

inline void write_file(const fs::path& path, const void* data, size_t len) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(static_cast<const char*>(data), (std::streamsize)len);
    if (!out) throw DataError("short write on " + path.string());
}

inline void write_file(const fs::path& path, const std::string& s) {
    write_file(path, s.data(), s.size());
}

inline std::string read_text(const fs::path& path) {
    auto raw = read_file(path);
    return std::string(raw.begin(), raw.end());
}

// Transparently inflate gzip members; raw data passes through untouched.
inline std::vector<uint8_t> maybe_gunzip(std::vector<uint8_t> raw) {
    if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw DataError("zlib init failed");
    std::vector<uint8_t> out;
    out.reserve(raw.size() * 4);
    std::vector<uint8_t> chunk(1 << 16);
    zs.next_in = raw.data();
    zs.avail_in = (uInt)raw.size();
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk.data();
        zs.avail_out = (uInt)chunk.size();
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw DataError("gzip decode failed");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

// Tiny binary writer/reader for the checkpoint and split blobs.
class BinWriter {
public:
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i64(int64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void bytes(const void* p, size_t n) { raw(p, n); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    const std::vector<uint8_t>& buffer() const { return buf; }

private:
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    std::vector<uint8_t> buf;
};

class BinReader {
public:
    explicit BinReader(const std::vector<uint8_t>& data) : buf(data) {}

    uint32_t u32() { return get<uint32_t>(); }
    uint64_t u64() { return get<uint64_t>(); }
    int64_t i64() { return get<int64_t>(); }
    float f32() { return get<float>(); }
    void bytes(void* p, size_t n) {
        need(n);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::string str() {
        const uint64_t n = u64();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
    size_t remaining() const { return buf.size() - pos; }

private:
    template <typename T>
    T get() {
        T v;
        bytes(&v, sizeof(T));
        return v;
    }
    void need(size_t n) const {
        if (pos + n > buf.size()) throw DataError("truncated binary stream");
    }
    const std::vector<uint8_t>& buf;
    size_t pos = 0;
};

} // namespace tribyol::io
