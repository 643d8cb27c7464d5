// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/pnm.hpp"

#include "depthconv/tns_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <string>

namespace depthconv {

std::vector<std::uint8_t> encode_pnm(const PnmImage& image) {
    if (image.channels != 1 && image.channels != 3) throw PnmError("pnm: channels must be 1 or 3");
    if (image.maxval < 1 || image.maxval > 65535) throw PnmError("pnm: bad maxval");
    const auto count = static_cast<std::size_t>(image.width) * image.height * image.channels;
    if (image.values.size() != count) throw PnmError("pnm: value count does not match header");
    const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                               " " + std::to_string(image.height) + "\n" + std::to_string(image.maxval) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const bool wide = image.maxval > 255;
    out.reserve(out.size() + count * (wide ? 2 : 1));
    for (auto v : image.values) {
        if (v > image.maxval) throw PnmError("pnm: value exceeds maxval");
        if (wide) out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

PnmImage decode_pnm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) {
        skip_space();
        long value = 0;
        std::size_t digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1 << 24) throw PnmError(std::string("pnm: ") + what + " too large");
            ++pos;
            ++digits;
        }
        if (digits == 0) throw PnmError(std::string("pnm: malformed header, expected ") + what);
        return static_cast<int>(value);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw PnmError("pnm: malformed header, expected P5 or P6");
    }
    pos = 2;
    PnmImage image;
    image.channels = bytes[1] == '6' ? 3 : 1;
    image.width = read_int("width");
    image.height = read_int("height");
    image.maxval = read_int("maxval");
    if (image.width < 1 || image.height < 1) throw PnmError("pnm: empty image");
    if (image.maxval < 1 || image.maxval > 65535) throw PnmError("pnm: bad maxval");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw PnmError("pnm: malformed header");
    ++pos;
    const bool wide = image.maxval > 255;
    const auto count = static_cast<std::size_t>(image.width) * image.height * image.channels;
    if (bytes.size() - pos < count * (wide ? 2 : 1)) throw PnmError("pnm: truncated pixel data");
    image.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t v = bytes[pos++];
        if (wide) v = static_cast<std::uint16_t>((v << 8) | bytes[pos++]);
        if (v > image.maxval) throw PnmError("pnm: value exceeds maxval");
        image.values[i] = v;
    }
    return image;
}

namespace {

PnmImage read_pnm(const std::string& path, int channels) {
    auto image = decode_pnm(read_file_bytes(path));
    if (image.channels != channels) throw PnmError(path + ": unexpected channel count");
    return image;
}

}  // namespace

void write_ppm(const std::string& path, const RgbImage& rgb) {
    PnmImage image{static_cast<int>(rgb.width()), static_cast<int>(rgb.height()), 3, 255, {}};
    image.values.reserve(static_cast<std::size_t>(image.width) * image.height * 3);
    for (Eigen::Index y = 0; y < rgb.height(); ++y) {
        for (Eigen::Index x = 0; x < rgb.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(rgb.channel(c)(y, x), 0.0, 1.0);
                image.values.push_back(static_cast<std::uint16_t>(std::lround(v * 255.0)));
            }
        }
    }
    write_file_bytes(path, encode_pnm(image));
}

RgbImage read_ppm(const std::string& path) {
    const auto image = read_pnm(path, 3);
    RgbImage rgb;
    for (int c = 0; c < 3; ++c) rgb.channel(c) = Plane(image.height, image.width);
    std::size_t i = 0;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) rgb.channel(c)(y, x) = image.values[i++] / static_cast<double>(image.maxval);
        }
    }
    return rgb;
}

std::int64_t write_depth_pgm(const std::string& path, const DepthMap& depth) {
    PnmImage image{static_cast<int>(depth.width()), static_cast<int>(depth.height()), 1, 65535, {}};
    std::int64_t clamped = 0;
    for (Eigen::Index y = 0; y < depth.height(); ++y) {
        for (Eigen::Index x = 0; x < depth.width(); ++x) {
            std::uint16_t mm = 0;
            if (depth.valid(y, x)) {
                const double v = std::round(depth.values(y, x) * 1000.0);
                if (v > 65535.0) ++clamped;
                // A positive depth never rounds to the hole code.
                mm = static_cast<std::uint16_t>(std::clamp(v, 1.0, 65535.0));
            }
            image.values.push_back(mm);
        }
    }
    write_file_bytes(path, encode_pnm(image));
    return clamped;
}

DepthMap read_depth_pgm(const std::string& path) {
    const auto image = read_pnm(path, 1);
    DepthMap depth(image.height, image.width, 0.0);
    for (int i = 0; i < image.width * image.height; ++i) {
        depth.values.data()[i] = image.values[static_cast<std::size_t>(i)] / 1000.0;
    }
    return depth;
}

void write_label_pgm(const std::string& path, const LabelMap& labels) {
    PnmImage image{static_cast<int>(labels.cols()), static_cast<int>(labels.rows()), 1, 255, {}};
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const auto v = labels.data()[i];
        if (v < 0 || v > 255) throw PnmError(path + ": label out of 8-bit range");
        image.values.push_back(static_cast<std::uint16_t>(v));
    }
    write_file_bytes(path, encode_pnm(image));
}

LabelMap read_label_pgm(const std::string& path) {
    const auto image = read_pnm(path, 1);
    if (image.maxval > 255) throw PnmError(path + ": label map must be 8 bit");
    LabelMap labels(image.height, image.width);
    for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = image.values[static_cast<std::size_t>(i)];
    return labels;
}

SamplePaths sample_paths(const std::string& prefix) {
    return {prefix + "_rgb.ppm", prefix + "_depth.pgm", prefix + "_labels.pgm"};
}

void write_sample(const std::string& prefix, const Sample& sample) {
    const auto paths = sample_paths(prefix);
    write_ppm(paths.rgb, sample.rgb);
    const auto clamped = write_depth_pgm(paths.depth, sample.depth);
    if (clamped > 0) {
        std::cerr << "warning: " << paths.depth << ": " << clamped << " depth values above 65.535 m clamped\n";
    }
    write_label_pgm(paths.labels, sample.labels);
}

Sample read_sample(const std::string& prefix) { return read_sample(sample_paths(prefix)); }

Sample read_sample(const SamplePaths& paths) {
    Sample s{read_ppm(paths.rgb), read_depth_pgm(paths.depth), read_label_pgm(paths.labels)};
    if (s.depth.height() != s.rgb.height() || s.depth.width() != s.rgb.width() ||
        s.labels.rows() != s.rgb.height() || s.labels.cols() != s.rgb.width()) {
        throw PnmError(paths.rgb + ": sample files disagree in size");
    }
    return s;
}

}  // namespace depthconv
