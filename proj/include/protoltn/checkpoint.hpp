#pragma once

// Parameter checkpoint: a flat little-endian binary format.
//
//   magic   8 bytes  "PLTNCKPT"
//   version u32      currently 1
//   count   u32      number of parameters
//   then per parameter, in order:
//     name_len u32, name bytes, rank u32, dims u64 each,
//     data     float64 x numel
// All integers and floats little-endian, written explicitly byte by byte so
// the format does not depend on host endianness.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "protoltn/errors.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {
namespace detail {

inline constexpr char kCheckpointMagic[8] = {'P', 'L', 'T', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    out.write(bytes, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
    static_assert(std::is_unsigned_v<T>);
    unsigned char bytes[sizeof(T)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(T));
    if (!in) throw IoError(path + ": truncated checkpoint");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
}

inline void write_f64_le(std::ostream& out, double v) {
    write_le(out, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64_le(std::istream& in, const std::string& path) {
    return std::bit_cast<double>(read_le<std::uint64_t>(in, path));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<Parameter>& params) {
    std::set<std::string> names;
    for (const Parameter& p : params)
        if (!names.insert(p.name).second)
            throw ContractError("save_checkpoint: duplicate parameter name " + p.name);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::write_le<std::uint32_t>(out, 1);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter& p : params) {
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t d : p.value.shape()) detail::write_le<std::uint64_t>(out, d);
        for (double v : p.value.data()) detail::write_f64_le(out, v);
    }
    if (!out) throw IoError("write failed for " + path);
}

// Returns (name, constant tensor) pairs in file order.
inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError(path + ": not a checkpoint file");
    const auto version = detail::read_le<std::uint32_t>(in, path);
    if (version != 1)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    const auto count = detail::read_le<std::uint32_t>(in, path);
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw IoError(path + ": truncated checkpoint");
        const auto rank = detail::read_le<std::uint32_t>(in, path);
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(detail::read_le<std::uint64_t>(in, path));
            numel *= d;
        }
        std::vector<double> data(numel);
        for (auto& v : data) v = detail::read_f64_le(in, path);
        out.emplace_back(std::move(name), Tensor::constant(std::move(shape), std::move(data)));
    }
    return out;
}

// Copies checkpoint values into matching parameters; every parameter must be
// present with identical shape.
inline void apply_checkpoint(std::vector<Parameter>& params,
                             const std::vector<std::pair<std::string, Tensor>>& loaded) {
    for (Parameter& p : params) {
        const Tensor* found = nullptr;
        for (const auto& [name, tensor] : loaded)
            if (name == p.name) found = &tensor;
        if (found == nullptr)
            throw ContractError("checkpoint is missing parameter " + p.name);
        if (found->shape() != p.value.shape())
            throw DimensionError("checkpoint shape mismatch for " + p.name);
        auto dst = p.value.mutable_data();
        auto src = found->data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

}  // namespace protoltn
