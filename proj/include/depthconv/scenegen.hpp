// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic RGB-D scenes: fronto-parallel textured rectangles in front of a
// textured background plane, rendered through a pinhole camera with a
// z-buffer. Each class has a fixed physical texture period, so its apparent
// period scales as mu * period / z.
#pragma once

#include "depthconv/geometry.hpp"
#include "depthconv/image.hpp"
#include "depthconv/json_util.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace depthconv {

enum class TextureKind { checker, stripes, noise };

std::string to_string(TextureKind kind);
TextureKind parse_texture_kind(const std::string& s);

struct ClassSpec {
    std::string name;
    TextureKind texture = TextureKind::stripes;
    double period = 0.2;  // metres
    Eigen::Vector3d color_a{0.1, 0.1, 0.1};
    Eigen::Vector3d color_b{0.9, 0.9, 0.9};
    double width = 0.8;  // physical extent, metres
    double height = 0.8;
};

struct SceneSpec {
    int width = 64;
    int height = 64;
    CameraIntrinsics camera = CameraIntrinsics::centered(64.0, 64, 64);
    int min_objects = 2;
    int max_objects = 5;
    double z_min = 1.0;
    double z_max = 5.0;          // background plane depth
    double background_gap = 0.5;  // objects lie in [z_min, z_max - gap]
    std::vector<ClassSpec> classes;
    int background_class = 0;
    double haze = 0.0;  // attenuation per metre; 0 disables
    Eigen::Vector3d haze_color{0.7, 0.75, 0.8};
    int supersample = 2;
    std::uint64_t seed = 1;

    void validate() const;
    int num_classes() const { return static_cast<int>(classes.size()); }
};

// The benchmark scene used by the experiments: a noise background and two
// texture families, each at a fine and a coarse physical period.
SceneSpec default_scene_spec();

struct Sample {
    RgbImage rgb;
    DepthMap depth;
    LabelMap labels;
};

// One placed rectangle.
struct SceneObject {
    int class_id = 0;
    double x = 0.0, y = 0.0, z = 1.0;  // centre in camera coordinates
    double phase_x = 0.0, phase_y = 0.0;
    std::uint64_t texture_seed = 0;
};

std::uint64_t sample_seed(const SceneSpec& spec, std::int64_t index);

// Object layout of sample `index` (pure function of spec and index).
std::vector<SceneObject> layout_scene(const SceneSpec& spec, std::int64_t index);

// Renders an explicit object list.
Sample render_scene(const SceneSpec& spec, const std::vector<SceneObject>& objects, std::uint64_t background_seed);

Sample generate_scene(const SceneSpec& spec, std::int64_t index);

// Texture intensity in [0, 1] at local metric coordinates on an object.
double texture_value(TextureKind kind, double period, double x, double y, std::uint64_t seed);

Json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const Json& j);

}  // namespace depthconv
