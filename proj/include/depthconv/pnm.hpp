// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Netpbm storage of samples:
//   <prefix>_rgb.ppm     P6, 8 bit
//   <prefix>_depth.pgm   P5, 16 bit big-endian millimetres, 0 = hole
//   <prefix>_labels.pgm  P5, 8 bit class ids, 255 = ignore
#pragma once

#include "depthconv/image.hpp"
#include "depthconv/scenegen.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace depthconv {

class PnmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PnmImage {
    int width = 0, height = 0, channels = 1;
    int maxval = 255;
    std::vector<std::uint16_t> values;  // row-major, interleaved channels
};

std::vector<std::uint8_t> encode_pnm(const PnmImage& image);
PnmImage decode_pnm(const std::vector<std::uint8_t>& bytes);

void write_ppm(const std::string& path, const RgbImage& rgb);
RgbImage read_ppm(const std::string& path);

// Returns the number of pixels clamped to 65.535 m.
std::int64_t write_depth_pgm(const std::string& path, const DepthMap& depth);
DepthMap read_depth_pgm(const std::string& path);

void write_label_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_label_pgm(const std::string& path);

struct SamplePaths {
    std::string rgb, depth, labels;
};

SamplePaths sample_paths(const std::string& prefix);

// Writes the three files; warns on stderr when depth had to be clamped.
void write_sample(const std::string& prefix, const Sample& sample);
Sample read_sample(const std::string& prefix);
Sample read_sample(const SamplePaths& paths);

}  // namespace depthconv
