// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// ".tns" tensor files: "TNSR", version 0x01, dtype 0x01 (float64 LE), rank
// byte, rank x u32 LE extents, then the row-major payload.
#pragma once

#include "depthconv/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace depthconv {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_tns(const Tensor& t);
Tensor decode_tns(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

void write_tns(const std::filesystem::path& path, const Tensor& t);
Tensor read_tns(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace depthconv
