#pragma once

// "OTNS v1" named-tensor container:
//   magic "OTNS" | u32 version=1 | u32 ndim | ndim x u32 dims | u32 dtype (0 = float32)
//   | row-major little-endian payload | u32 name_length | UTF-8 name
// All integers little-endian.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ouro/tensor.hpp"

namespace ouro {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadMagicError : ParseError {
    explicit BadMagicError(const std::string& m) : ParseError("otns: bad magic: " + m) {}
};
struct VersionError : ParseError {
    explicit VersionError(const std::string& m) : ParseError("otns: version mismatch: " + m) {}
};
struct TruncatedError : ParseError {
    explicit TruncatedError(const std::string& m) : ParseError("otns: truncated payload: " + m) {}
};

struct NamedTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
    std::string name;
};

namespace detail {
inline void put_u32(std::string& out, std::uint32_t x) {
    char b[4] = {char(x & 0xff), char((x >> 8) & 0xff), char((x >> 16) & 0xff), char((x >> 24) & 0xff)};
    out.append(b, 4);
}
inline std::uint32_t get_u32(const std::string& s, std::size_t& off, const std::string& what) {
    if (off + 4 > s.size()) throw TruncatedError(what);
    std::uint32_t x = std::uint32_t(std::uint8_t(s[off])) | std::uint32_t(std::uint8_t(s[off + 1])) << 8 |
                      std::uint32_t(std::uint8_t(s[off + 2])) << 16 | std::uint32_t(std::uint8_t(s[off + 3])) << 24;
    off += 4;
    return x;
}
}  // namespace detail

inline std::string otns_serialize(const NamedTensor& t) {
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.data.size()) throw std::invalid_argument("otns: dims/data size mismatch");
    std::string out;
    out.append("OTNS", 4);
    detail::put_u32(out, 1);
    detail::put_u32(out, std::uint32_t(t.dims.size()));
    for (auto d : t.dims) detail::put_u32(out, d);
    detail::put_u32(out, 0);  // dtype float32
    // assumes little-endian host (x86)
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
    detail::put_u32(out, std::uint32_t(t.name.size()));
    out.append(t.name);
    return out;
}

inline NamedTensor otns_deserialize(const std::string& s, const std::string& ctx = "") {
    std::size_t off = 0;
    if (s.size() < 4 || s.compare(0, 4, "OTNS") != 0) throw BadMagicError(ctx);
    off = 4;
    std::uint32_t ver = detail::get_u32(s, off, ctx);
    if (ver != 1) throw VersionError(ctx + " (got version " + std::to_string(ver) + ")");
    std::uint32_t ndim = detail::get_u32(s, off, ctx);
    if (ndim > 8) throw ParseError("otns: implausible ndim: " + ctx);
    NamedTensor t;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.dims.push_back(detail::get_u32(s, off, ctx));
        n *= t.dims.back();
    }
    std::uint32_t dtype = detail::get_u32(s, off, ctx);
    if (dtype != 0) throw ParseError("otns: unsupported dtype " + std::to_string(dtype) + ": " + ctx);
    if (off + n * sizeof(float) > s.size()) throw TruncatedError(ctx);
    t.data.resize(n);
    std::memcpy(t.data.data(), s.data() + off, n * sizeof(float));
    off += n * sizeof(float);
    std::uint32_t namelen = detail::get_u32(s, off, ctx);
    if (off + namelen > s.size()) throw TruncatedError(ctx + " (name)");
    t.name.assign(s, off, namelen);
    return t;
}

inline void write_tensor(const NamedTensor& t, const std::filesystem::path& path) {
    for (float x : t.data)
        if (!std::isfinite(x)) throw std::invalid_argument("otns: non-finite value writing " + path.string());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("otns: cannot open for write: " + path.string());
    auto s = otns_serialize(t);
    f.write(s.data(), std::streamsize(s.size()));
    if (!f) throw std::runtime_error("otns: write failed: " + path.string());
}

inline NamedTensor read_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("otns: cannot open: " + path.string());
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return otns_deserialize(s, path.string());
}

inline void write_tensor(const TensorF& t, const std::string& name, const std::filesystem::path& path) {
    NamedTensor nt;
    nt.dims = {std::uint32_t(t.h), std::uint32_t(t.w), std::uint32_t(t.c)};
    nt.data = t.v;
    nt.name = name;
    write_tensor(nt, path);
}

inline TensorF read_tensor_hwc(const std::filesystem::path& path, std::string* name_out = nullptr) {
    NamedTensor nt = read_tensor(path);
    if (nt.dims.size() != 3) throw ParseError("otns: expected rank-3 tensor: " + path.string());
    TensorF t(int(nt.dims[0]), int(nt.dims[1]), int(nt.dims[2]));
    t.v = std::move(nt.data);
    if (name_out) *name_out = nt.name;
    return t;
}

}  // namespace ouro
