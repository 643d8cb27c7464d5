// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/tns_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace depthconv {

namespace {

constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kDtypeF64 = 0x01;

static_assert(std::endian::native == std::endian::little, "tns codec assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_tns(const Tensor& t) {
    if (t.rank() > 255) throw FormatError("tns: rank exceeds 255");
    std::vector<std::uint8_t> out{'T', 'N', 'S', 'R', kVersion, kDtypeF64,
                                  static_cast<std::uint8_t>(t.rank())};
    for (auto extent : t.shape()) {
        if (extent > static_cast<std::int64_t>(UINT32_MAX)) throw FormatError("tns: extent exceeds u32");
        put_u32(out, static_cast<std::uint32_t>(extent));
    }
    const auto data = t.data();
    const auto offset = out.size();
    out.resize(offset + data.size() * sizeof(double));
    std::memcpy(out.data() + offset, data.data(), data.size() * sizeof(double));
    return out;
}

Tensor decode_tns(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    if (bytes.size() < 7 || std::memcmp(bytes.data(), "TNSR", 4) != 0) throw FormatError("tns: bad magic");
    if (bytes[4] != kVersion) throw FormatError("tns: unsupported version " + std::to_string(bytes[4]));
    if (bytes[5] != kDtypeF64) throw FormatError("tns: unsupported dtype " + std::to_string(bytes[5]));
    const std::size_t rank = bytes[6];
    std::size_t pos = 7;
    if (bytes.size() < pos + 4 * rank) throw FormatError("tns: truncated header");
    Shape shape(rank);
    for (std::size_t i = 0; i < rank; ++i, pos += 4) shape[i] = get_u32(bytes.data() + pos);
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    if (bytes.size() < pos + n * sizeof(double)) throw FormatError("tns: truncated payload");
    std::vector<double> data(n);
    std::memcpy(data.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    if (consumed) *consumed = pos;
    return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_tns(const std::filesystem::path& path, const Tensor& t) { write_file_bytes(path, encode_tns(t)); }

Tensor read_tns(const std::filesystem::path& path) { return decode_tns(read_file_bytes(path)); }

}  // namespace depthconv
