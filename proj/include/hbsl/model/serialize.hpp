#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/model/parameters.hpp"

namespace hbsl::model {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagic[4] = {'S', 'W', 'M', 'L'};

namespace wire {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

template <std::unsigned_integral T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

/// Bounds-checked little-endian reader over a byte span.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <std::unsigned_integral T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }

    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw InputError("truncated record: wanted " + std::to_string(n) + " more bytes");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace wire

/// Layout: "SWML", u32 version, u32 tensor count, then per tensor
/// (u32 name length, name bytes, u32 rank, u64 dims...), then every tensor's
/// values as little-endian f64 in row-major order, in slot order.
inline std::vector<std::uint8_t> serialize(const ModelParameters& params) {
    std::vector<std::uint8_t> out;
    out.reserve(64 + params.parameter_count() * 8);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    wire::put_le<std::uint32_t>(out, kFormatVersion);
    wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kSlotCount));
    for (const auto& t : params.tensors()) {
        wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) wire::put_le<std::uint64_t>(out, d);
    }
    for (const auto& t : params.tensors())
        for (double v : t.values) wire::put_f64(out, v);
    return out;
}

inline ModelParameters deserialize(std::span<const std::uint8_t> bytes) {
    wire::Reader in(bytes);
    if (in.str(4) != std::string(kMagic, 4)) throw InputError("deserialize: bad magic, expected SWML");
    const auto version = in.le<std::uint32_t>();
    if (version != kFormatVersion) throw InputError("deserialize: unsupported format version " + std::to_string(version));
    const auto count = in.le<std::uint32_t>();
    if (count != kSlotCount) throw InputError("deserialize: expected 10 tensors, found " + std::to_string(count));

    std::vector<std::vector<std::size_t>> shapes(kSlotCount);
    for (std::size_t i = 0; i < kSlotCount; ++i) {
        const auto len = in.le<std::uint32_t>();
        const auto name = in.str(len);
        if (name != kSlotNames[i]) {
            throw InputError("deserialize: tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                             std::string(kSlotNames[i]) + "'");
        }
        const auto rank = in.le<std::uint32_t>();
        if (rank > 2) throw InputError("deserialize: tensor '" + name + "' has rank " + std::to_string(rank));
        for (std::uint32_t r = 0; r < rank; ++r) shapes[i].push_back(static_cast<std::size_t>(in.le<std::uint64_t>()));
    }
    if (shapes[0].size() != 2) throw InputError("deserialize: embedding must be rank 2");
    const ModelDims dims{shapes[0][0], shapes[0][1], shapes[static_cast<std::size_t>(Slot::b_h_fwd)].empty()
                                                         ? 0
                                                         : shapes[static_cast<std::size_t>(Slot::b_h_fwd)][0]};
    ModelParameters params(dims);
    for (std::size_t i = 0; i < kSlotCount; ++i) {
        if (params.tensors()[i].shape != shapes[i]) {
            throw InputError("deserialize: inconsistent shape for tensor '" + std::string(kSlotNames[i]) + "'");
        }
    }
    if (in.remaining() != params.parameter_count() * 8) {
        throw InputError("deserialize: payload holds " + std::to_string(in.remaining()) + " bytes, expected " +
                         std::to_string(params.parameter_count() * 8));
    }
    for (auto& t : params.tensors())
        for (double& v : t.values) v = in.f64();
    return params;
}

inline void save_parameters(const ModelParameters& params, const std::string& path) {
    const auto bytes = serialize(params);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + path);
}

inline ModelParameters load_parameters(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace hbsl::model
