// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/scenegen.hpp"

#include "depthconv/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace depthconv {

std::string to_string(TextureKind kind) {
    switch (kind) {
        case TextureKind::checker: return "checker";
        case TextureKind::stripes: return "stripes";
        case TextureKind::noise: return "noise";
    }
    return "?";
}

TextureKind parse_texture_kind(const std::string& s) {
    if (s == "checker" || s == "checkerboard") return TextureKind::checker;
    if (s == "stripes") return TextureKind::stripes;
    if (s == "noise") return TextureKind::noise;
    throw ConfigError("unknown texture kind \"" + s + "\"");
}

void SceneSpec::validate() const {
    if (width < 1 || height < 1) throw ConfigError("scene: image size must be positive");
    camera.validate();
    if (min_objects < 0 || max_objects < min_objects) throw ConfigError("scene: bad object count range");
    if (!(z_min > 0.0)) throw ConfigError("scene: z_min must be positive");
    if (!(background_gap >= 0.0) || !(z_max - background_gap >= z_min)) {
        throw ConfigError("scene: need z_min <= z_max - background_gap");
    }
    if (classes.empty()) throw ConfigError("scene: no classes");
    if (classes.size() >= static_cast<std::size_t>(kIgnoreLabel)) throw ConfigError("scene: too many classes");
    if (background_class < 0 || background_class >= num_classes()) {
        throw ConfigError("scene: background_class out of range");
    }
    if (max_objects > 0 && num_classes() < 2) throw ConfigError("scene: objects need a foreground class");
    for (const auto& c : classes) {
        if (!(c.period > 0.0) || !(c.width > 0.0) || !(c.height > 0.0)) {
            throw ConfigError("scene: class \"" + c.name + "\" needs positive period and size");
        }
    }
    if (!(haze >= 0.0)) throw ConfigError("scene: haze must be non-negative");
    if (supersample < 1) throw ConfigError("scene: supersample must be >= 1");
}

SceneSpec default_scene_spec() {
    SceneSpec spec;
    spec.width = 64;
    spec.height = 64;
    spec.camera = CameraIntrinsics::centered(64.0, 64, 64);
    spec.min_objects = 2;
    spec.max_objects = 4;
    spec.z_min = 1.0;
    spec.z_max = 6.0;
    spec.background_gap = 1.5;
    spec.haze = 0.15;
    const Eigen::Vector3d warm_a{0.75, 0.25, 0.15}, warm_b{0.95, 0.8, 0.35};
    const Eigen::Vector3d cool_a{0.15, 0.25, 0.7}, cool_b{0.7, 0.85, 0.95};
    spec.classes = {
        {"background", TextureKind::noise, 0.6, {0.35, 0.4, 0.3}, {0.5, 0.55, 0.45}, 1.0, 1.0},
        {"stripes_fine", TextureKind::stripes, 0.2, warm_a, warm_b, 0.5, 0.5},
        {"stripes_coarse", TextureKind::stripes, 0.4, warm_a, warm_b, 1.0, 1.0},
        {"checker_fine", TextureKind::checker, 0.2, cool_a, cool_b, 0.5, 0.5},
        {"checker_coarse", TextureKind::checker, 0.4, cool_a, cool_b, 1.0, 1.0},
    };
    spec.background_class = 0;
    spec.seed = 7;
    return spec;
}

std::uint64_t sample_seed(const SceneSpec& spec, std::int64_t index) {
    return hash_combine(spec.seed, static_cast<std::uint64_t>(index));
}

namespace {

double lattice_value(std::uint64_t seed, std::int64_t i, std::int64_t j) {
    const auto h = hash_combine(hash_combine(seed, static_cast<std::uint64_t>(i)), static_cast<std::uint64_t>(j));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

double texture_value(TextureKind kind, double period, double x, double y, std::uint64_t seed) {
    switch (kind) {
        case TextureKind::stripes: {
            const double f = x / period - std::floor(x / period);
            return f < 0.5 ? 0.0 : 1.0;
        }
        case TextureKind::checker: {
            const auto a = static_cast<std::int64_t>(std::floor(2.0 * x / period));
            const auto b = static_cast<std::int64_t>(std::floor(2.0 * y / period));
            return ((a + b) % 2 + 2) % 2 == 0 ? 0.0 : 1.0;
        }
        case TextureKind::noise: {
            const double gx = x / period, gy = y / period;
            const auto i = static_cast<std::int64_t>(std::floor(gx));
            const auto j = static_cast<std::int64_t>(std::floor(gy));
            const double fx = smooth(gx - static_cast<double>(i)), fy = smooth(gy - static_cast<double>(j));
            const double top = (1 - fx) * lattice_value(seed, i, j) + fx * lattice_value(seed, i + 1, j);
            const double bot = (1 - fx) * lattice_value(seed, i, j + 1) + fx * lattice_value(seed, i + 1, j + 1);
            return (1 - fy) * top + fy * bot;
        }
    }
    return 0.0;
}

std::vector<SceneObject> layout_scene(const SceneSpec& spec, std::int64_t index) {
    spec.validate();
    std::mt19937_64 rng(sample_seed(spec, index));
    const auto count = uniform_int(rng, spec.min_objects, spec.max_objects);
    std::vector<int> foreground;
    for (int c = 0; c < spec.num_classes(); ++c) {
        if (c != spec.background_class) foreground.push_back(c);
    }
    const double log_lo = std::log(spec.z_min), log_hi = std::log(spec.z_max - spec.background_gap);
    std::vector<SceneObject> objects;
    for (std::int64_t k = 0; k < count; ++k) {
        SceneObject o;
        o.class_id = foreground[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(foreground.size()) - 1))];
        o.z = std::exp(uniform(rng, log_lo, log_hi));
        const double u = uniform(rng, 0.0, spec.width - 1.0);
        const double v = uniform(rng, 0.0, spec.height - 1.0);
        o.x = (u - spec.camera.cu) * o.z / spec.camera.mu;
        o.y = (v - spec.camera.cv) * o.z / spec.camera.mu;
        const double period = spec.classes[static_cast<std::size_t>(o.class_id)].period;
        o.phase_x = uniform(rng, 0.0, period);
        o.phase_y = uniform(rng, 0.0, period);
        o.texture_seed = rng();
        objects.push_back(o);
    }
    return objects;
}

Sample render_scene(const SceneSpec& spec, const std::vector<SceneObject>& objects, std::uint64_t background_seed) {
    spec.validate();
    for (const auto& o : objects) {
        if (o.class_id < 0 || o.class_id >= spec.num_classes() || !(o.z > 0.0)) {
            throw ConfigError("render_scene: invalid object");
        }
    }
    // Front to back; ties keep list order.
    std::vector<std::size_t> order(objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return objects[a].z < objects[b].z; });

    const auto& cam = spec.camera;
    const auto& bg = spec.classes[static_cast<std::size_t>(spec.background_class)];

    // Nearest surface along the ray through (u, v): object index or -1 for background.
    auto hit = [&](double u, double v) -> std::ptrdiff_t {
        for (auto i : order) {
            const auto& o = objects[i];
            const auto& c = spec.classes[static_cast<std::size_t>(o.class_id)];
            const double x = (u - cam.cu) * o.z / cam.mu, y = (v - cam.cv) * o.z / cam.mu;
            if (std::abs(x - o.x) <= 0.5 * c.width && std::abs(y - o.y) <= 0.5 * c.height) {
                return static_cast<std::ptrdiff_t>(i);
            }
        }
        return -1;
    };

    auto shade = [&](double u, double v) -> Eigen::Vector3d {
        const auto i = hit(u, v);
        double z, t;
        const ClassSpec* c;
        if (i < 0) {
            z = spec.z_max;
            c = &bg;
            const double x = (u - cam.cu) * z / cam.mu, y = (v - cam.cv) * z / cam.mu;
            t = texture_value(c->texture, c->period, x, y, background_seed);
        } else {
            const auto& o = objects[static_cast<std::size_t>(i)];
            z = o.z;
            c = &spec.classes[static_cast<std::size_t>(o.class_id)];
            const double x = (u - cam.cu) * z / cam.mu - o.x + o.phase_x;
            const double y = (v - cam.cv) * z / cam.mu - o.y + o.phase_y;
            t = texture_value(c->texture, c->period, x, y, o.texture_seed);
        }
        Eigen::Vector3d rgb = (1.0 - t) * c->color_a + t * c->color_b;
        if (spec.haze > 0.0) {
            const double keep = std::exp(-spec.haze * z);
            rgb = keep * rgb + (1.0 - keep) * spec.haze_color;
        }
        return rgb;
    };

    const int h = spec.height, w = spec.width, s = spec.supersample;
    Sample out;
    out.rgb.r = Plane::Zero(h, w);
    out.rgb.g = Plane::Zero(h, w);
    out.rgb.b = Plane::Zero(h, w);
    out.depth = DepthMap(h, w, spec.z_max);
    out.labels = LabelMap::Constant(h, w, spec.background_class);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const auto i = hit(u, v);
            if (i >= 0) {
                out.depth.values(v, u) = objects[static_cast<std::size_t>(i)].z;
                out.labels(v, u) = objects[static_cast<std::size_t>(i)].class_id;
            }
            Eigen::Vector3d acc = Eigen::Vector3d::Zero();
            for (int sy = 0; sy < s; ++sy) {
                for (int sx = 0; sx < s; ++sx) {
                    acc += shade(u + (sx + 0.5) / s - 0.5, v + (sy + 0.5) / s - 0.5);
                }
            }
            acc /= static_cast<double>(s * s);
            // Quantised to 8-bit levels so that the image file round-trip is exact.
            for (int c = 0; c < 3; ++c) {
                out.rgb.channel(c)(v, u) = std::round(std::clamp(acc[c], 0.0, 1.0) * 255.0) / 255.0;
            }
        }
    }
    return out;
}

Sample generate_scene(const SceneSpec& spec, std::int64_t index) {
    const auto objects = layout_scene(spec, index);
    return render_scene(spec, objects, hash_combine(sample_seed(spec, index), 0x62676eULL));
}

namespace {

Json vec3_json(const Eigen::Vector3d& v) { return Json::array({v[0], v[1], v[2]}); }

Eigen::Vector3d vec3_from(const Json& j, const std::string& context) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(context + ": expected an array of 3 numbers");
    try {
        return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(context + ": " + e.what());
    }
}

}  // namespace

Json to_json(const SceneSpec& spec) {
    Json classes = Json::array();
    for (const auto& c : spec.classes) {
        classes.push_back({{"name", c.name},
                           {"texture", to_string(c.texture)},
                           {"period", c.period},
                           {"color_a", vec3_json(c.color_a)},
                           {"color_b", vec3_json(c.color_b)},
                           {"width", c.width},
                           {"height", c.height}});
    }
    return {{"width", spec.width},
            {"height", spec.height},
            {"camera", {{"mu", spec.camera.mu}, {"cu", spec.camera.cu}, {"cv", spec.camera.cv}}},
            {"min_objects", spec.min_objects},
            {"max_objects", spec.max_objects},
            {"z_min", spec.z_min},
            {"z_max", spec.z_max},
            {"background_gap", spec.background_gap},
            {"classes", classes},
            {"background_class", spec.background_class},
            {"haze", spec.haze},
            {"haze_color", vec3_json(spec.haze_color)},
            {"supersample", spec.supersample},
            {"seed", spec.seed}};
}

SceneSpec scene_spec_from_json(const Json& j) {
    const std::string ctx = "scene";
    reject_unknown_keys(j,
                        {"width", "height", "camera", "min_objects", "max_objects", "z_min", "z_max",
                         "background_gap", "classes", "background_class", "haze", "haze_color", "supersample",
                         "seed"},
                        ctx);
    SceneSpec spec = default_scene_spec();
    spec.width = get_or(j, "width", spec.width, ctx);
    spec.height = get_or(j, "height", spec.height, ctx);
    spec.camera = CameraIntrinsics::centered(spec.camera.mu, spec.width, spec.height);
    if (j.contains("camera")) {
        const auto& c = j.at("camera");
        reject_unknown_keys(c, {"mu", "cu", "cv"}, ctx + ".camera");
        spec.camera.mu = get_or(c, "mu", spec.camera.mu, ctx + ".camera");
        spec.camera.cu = get_or(c, "cu", spec.camera.cu, ctx + ".camera");
        spec.camera.cv = get_or(c, "cv", spec.camera.cv, ctx + ".camera");
    }
    spec.min_objects = get_or(j, "min_objects", spec.min_objects, ctx);
    spec.max_objects = get_or(j, "max_objects", spec.max_objects, ctx);
    spec.z_min = get_or(j, "z_min", spec.z_min, ctx);
    spec.z_max = get_or(j, "z_max", spec.z_max, ctx);
    spec.background_gap = get_or(j, "background_gap", spec.background_gap, ctx);
    if (j.contains("classes")) {
        const auto& arr = j.at("classes");
        if (!arr.is_array()) throw ConfigError(ctx + ".classes: expected an array");
        spec.classes.clear();
        for (const auto& cj : arr) {
            const std::string cctx = ctx + ".classes[" + std::to_string(spec.classes.size()) + "]";
            reject_unknown_keys(cj, {"name", "texture", "period", "color_a", "color_b", "width", "height"}, cctx);
            ClassSpec c;
            c.name = get_or<std::string>(cj, "name", "class" + std::to_string(spec.classes.size()), cctx);
            c.texture = parse_texture_kind(get_or<std::string>(cj, "texture", to_string(c.texture), cctx));
            c.period = get_or(cj, "period", c.period, cctx);
            if (cj.contains("color_a")) c.color_a = vec3_from(cj.at("color_a"), cctx + ".color_a");
            if (cj.contains("color_b")) c.color_b = vec3_from(cj.at("color_b"), cctx + ".color_b");
            c.width = get_or(cj, "width", c.width, cctx);
            c.height = get_or(cj, "height", c.height, cctx);
            spec.classes.push_back(c);
        }
    }
    spec.background_class = get_or(j, "background_class", spec.background_class, ctx);
    spec.haze = get_or(j, "haze", spec.haze, ctx);
    if (j.contains("haze_color")) spec.haze_color = vec3_from(j.at("haze_color"), ctx + ".haze_color");
    spec.supersample = get_or(j, "supersample", spec.supersample, ctx);
    spec.seed = get_or(j, "seed", spec.seed, ctx);
    spec.validate();
    return spec;
}

}  // namespace depthconv
