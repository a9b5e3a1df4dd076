#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "s3d/tensor.hpp"

namespace s3d {
namespace io {

// Binary tensor format ".s3dt":
//   magic "S3DT" | u8 dtype (0=float32, 1=float64) | u8 rank |
//   rank x little-endian u32 dims | row-major little-endian payload.
// Checkpoint: little-endian u32 record count, then (u32 name length,
// UTF-8 name, embedded .s3dt tensor) records.
//
// All writes go through explicit little-endian byte packing so files are
// byte-stable across platforms.

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

template <typename T>
constexpr std::uint8_t dtype_code() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "tensor files hold float32 or float64");
    return std::is_same_v<T, float> ? 0 : 1;
}

template <typename T>
void put_scalar_le(std::string& buf, T v) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    // assume little-endian storage of IEEE floats on write targets; byte-swap
    // would go here for big-endian hosts
    buf.append(reinterpret_cast<const char*>(raw), sizeof(T));
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + path);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw FormatError("short write to " + path);
}

} // namespace detail

template <typename T>
std::string encode_tensor(const Tensor<T>& t) {
    std::string buf;
    buf += "S3DT";
    buf.push_back(static_cast<char>(detail::dtype_code<T>()));
    buf.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.dims()) detail::put_u32(buf, static_cast<std::uint32_t>(d));
    buf.reserve(buf.size() + t.size() * sizeof(T));
    for (std::size_t i = 0; i < t.size(); ++i) detail::put_scalar_le(buf, t[i]);
    return buf;
}

// Parses one tensor starting at offset; advances offset past it.
template <typename T>
Tensor<T> decode_tensor(const std::string& buf, std::size_t& offset, const std::string& origin) {
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const std::size_t n = buf.size();
    if (offset + 6 > n || std::memcmp(p + offset, "S3DT", 4) != 0)
        throw FormatError("bad tensor magic in " + origin);
    const std::uint8_t dtype = p[offset + 4];
    const std::uint8_t rank = p[offset + 5];
    if (dtype != detail::dtype_code<T>())
        throw FormatError("dtype mismatch in " + origin + ": file has code " +
                          std::to_string(int(dtype)));
    offset += 6;
    Dims dims(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (offset + 4 > n) throw FormatError("truncated dims in " + origin);
        dims[i] = detail::get_u32(p + offset);
        if (dims[i] == 0) throw FormatError("zero extent in " + origin);
        offset += 4;
    }
    const std::size_t count = numel(dims);
    if (offset + count * sizeof(T) > n) throw FormatError("truncated payload in " + origin);
    std::vector<T> data(count);
    std::memcpy(data.data(), buf.data() + offset, count * sizeof(T));
    offset += count * sizeof(T);
    return Tensor<T>::from_data(std::move(dims), std::move(data));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    detail::write_file(path, encode_tensor(t));
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::string buf = detail::read_file(path);
    std::size_t off = 0;
    Tensor<T> t = decode_tensor<T>(buf, off, path);
    if (off != buf.size()) throw FormatError("trailing bytes in " + path);
    return t;
}

// ---------------------------------------------------------------------------
// checkpoints

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& records) {
    std::string buf;
    detail::put_u32(buf, static_cast<std::uint32_t>(records.size()));
    for (const auto& [name, t] : records) {
        detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        buf += encode_tensor(t);
    }
    detail::write_file(path, buf);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> load_checkpoint(const std::string& path) {
    std::string buf = detail::read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (buf.size() < 4) throw FormatError("truncated checkpoint " + path);
    const std::uint32_t count = detail::get_u32(p);
    std::size_t off = 4;
    std::vector<std::pair<std::string, Tensor<T>>> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (off + 4 > buf.size()) throw FormatError("truncated record header in " + path);
        const std::uint32_t len = detail::get_u32(p + off);
        off += 4;
        if (off + len > buf.size()) throw FormatError("truncated record name in " + path);
        std::string name = buf.substr(off, len);
        off += len;
        records.emplace_back(std::move(name), decode_tensor<T>(buf, off, path));
    }
    if (off != buf.size()) throw FormatError("trailing bytes in checkpoint " + path);
    return records;
}

// ---------------------------------------------------------------------------
// netpbm images

// image [3,H,W] with values in [0,1] -> binary P6, maxval 255
template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& img) {
    check_shape(img.rank() == 3 && img.extent(0) == 3,
                "write_ppm expects [3,H,W], got " + dims_str(img.dims()));
    const std::size_t H = img.extent(1), W = img.extent(2);
    std::string buf = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    buf.reserve(buf.size() + 3 * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                T v = img[(c * H + y) * W + x];
                v = std::min(std::max(v, T(0)), T(1));
                buf.push_back(static_cast<char>(
                    static_cast<int>(std::lround(static_cast<double>(v) * 255.0))));
            }
    detail::write_file(path, buf);
}

namespace detail {
inline void skip_pnm_space(const std::string& buf, std::size_t& i) {
    while (i < buf.size()) {
        if (std::isspace(static_cast<unsigned char>(buf[i]))) {
            ++i;
        } else if (buf[i] == '#') {
            while (i < buf.size() && buf[i] != '\n') ++i;
        } else {
            break;
        }
    }
}
inline std::size_t read_pnm_int(const std::string& buf, std::size_t& i, const std::string& path) {
    skip_pnm_space(buf, i);
    std::size_t v = 0;
    bool any = false;
    while (i < buf.size() && std::isdigit(static_cast<unsigned char>(buf[i]))) {
        v = v * 10 + static_cast<std::size_t>(buf[i] - '0');
        ++i;
        any = true;
    }
    if (!any) throw FormatError("bad pnm header in " + path);
    return v;
}
} // namespace detail

template <typename T>
Tensor<T> read_ppm(const std::string& path) {
    std::string buf = detail::read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6') throw FormatError("not a P6 ppm: " + path);
    std::size_t i = 2;
    const std::size_t W = detail::read_pnm_int(buf, i, path);
    const std::size_t H = detail::read_pnm_int(buf, i, path);
    const std::size_t maxval = detail::read_pnm_int(buf, i, path);
    if (maxval != 255) throw FormatError("unsupported maxval in " + path);
    ++i; // single whitespace after maxval
    if (i + 3 * H * W > buf.size()) throw FormatError("truncated pixel data in " + path);
    std::vector<T> data(3 * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                data[(c * H + y) * W + x] =
                    static_cast<T>(static_cast<unsigned char>(buf[i + (y * W + x) * 3 + c])) /
                    T(255);
    return Tensor<T>::from_data({3, H, W}, std::move(data));
}

// binary mask [H,W] of {0,1} -> binary P4 (1 = black = inside)
template <typename T>
void write_pbm(const std::string& path, const Tensor<T>& mask) {
    check_shape(mask.rank() == 2, "write_pbm expects [H,W], got " + dims_str(mask.dims()));
    const std::size_t H = mask.extent(0), W = mask.extent(1);
    std::string buf = "P4\n" + std::to_string(W) + " " + std::to_string(H) + "\n";
    const std::size_t rowbytes = (W + 7) / 8;
    for (std::size_t y = 0; y < H; ++y) {
        std::string row(rowbytes, '\0');
        for (std::size_t x = 0; x < W; ++x)
            if (mask[y * W + x] > T(0.5)) row[x / 8] |= static_cast<char>(0x80 >> (x % 8));
        buf += row;
    }
    detail::write_file(path, buf);
}

template <typename T>
Tensor<T> read_pbm(const std::string& path) {
    std::string buf = detail::read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '4') throw FormatError("not a P4 pbm: " + path);
    std::size_t i = 2;
    const std::size_t W = detail::read_pnm_int(buf, i, path);
    const std::size_t H = detail::read_pnm_int(buf, i, path);
    ++i;
    const std::size_t rowbytes = (W + 7) / 8;
    if (i + rowbytes * H > buf.size()) throw FormatError("truncated mask data in " + path);
    std::vector<T> data(H * W, T(0));
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            if (buf[i + y * rowbytes + x / 8] & static_cast<char>(0x80 >> (x % 8)))
                data[y * W + x] = T(1);
    return Tensor<T>::from_data({H, W}, std::move(data));
}

// grayscale [H,W] in [0,1] -> binary P5, maxval 255
template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& img) {
    check_shape(img.rank() == 2, "write_pgm expects [H,W], got " + dims_str(img.dims()));
    const std::size_t H = img.extent(0), W = img.extent(1);
    std::string buf = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    for (std::size_t i = 0; i < H * W; ++i) {
        T v = std::min(std::max(img[i], T(0)), T(1));
        buf.push_back(
            static_cast<char>(static_cast<int>(std::lround(static_cast<double>(v) * 255.0))));
    }
    detail::write_file(path, buf);
}

} // namespace io
} // namespace s3d
