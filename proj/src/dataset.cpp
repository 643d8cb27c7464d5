// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/dataset.hpp"

#include "depthconv/parallel.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace depthconv {

namespace fs = std::filesystem;

Json DatasetManifest::to_json() const {
    Json files_json = Json::array();
    for (const auto& f : files) files_json.push_back({{"rgb", f.rgb}, {"depth", f.depth}, {"labels", f.labels}});
    return {{"split", split},
            {"files", files_json},
            {"camera", {{"mu", camera.mu}, {"cu", camera.cu}, {"cv", camera.cv}}},
            {"classes", classes},
            {"d0_median", d0_median},
            {"first_index", first_index},
            {"seed", spec.seed},
            {"spec", depthconv::to_json(spec)}};
}

DatasetManifest DatasetManifest::from_json(const Json& j) {
    const std::string ctx = "manifest";
    reject_unknown_keys(j, {"split", "files", "camera", "classes", "d0_median", "first_index", "seed", "spec"}, ctx);
    DatasetManifest m;
    try {
        m.split = j.at("split").get<std::string>();
        for (const auto& f : j.at("files")) {
            m.files.push_back({f.at("rgb").get<std::string>(), f.at("depth").get<std::string>(),
                               f.at("labels").get<std::string>()});
        }
        const auto& cam = j.at("camera");
        m.camera = {cam.at("mu").get<double>(), cam.at("cu").get<double>(), cam.at("cv").get<double>()};
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.d0_median = j.at("d0_median").get<double>();
        m.first_index = get_or<std::int64_t>(j, "first_index", 0, ctx);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    m.spec = j.contains("spec") ? scene_spec_from_json(j.at("spec")) : default_scene_spec();
    m.camera.validate();
    return m;
}

std::vector<Sample> generate_samples(const SceneSpec& spec, std::int64_t first, std::int64_t count) {
    spec.validate();
    std::vector<Sample> out(static_cast<std::size_t>(count));
    parallel_for(count, [&](std::int64_t i) { out[static_cast<std::size_t>(i)] = generate_scene(spec, first + i); });
    return out;
}

namespace {

std::vector<std::string> class_names(const SceneSpec& spec) {
    std::vector<std::string> names;
    for (const auto& c : spec.classes) names.push_back(c.name);
    return names;
}

double train_median(const std::vector<Sample>& train) {
    std::vector<DepthMap> maps;
    maps.reserve(train.size());
    for (const auto& s : train) maps.push_back(s.depth);
    return median_valid_depth(maps);
}

std::string sample_stem(std::int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(index));
    return buf;
}

}  // namespace

SplitPair make_splits(const SceneSpec& spec, std::int64_t n_train, std::int64_t n_test) {
    if (n_train < 1 || n_test < 0) throw ConfigError("dataset: need n_train >= 1 and n_test >= 0");
    SplitPair p;
    p.train.samples = generate_samples(spec, 0, n_train);
    p.test.samples = generate_samples(spec, n_train, n_test);
    const double d0 = train_median(p.train.samples);
    for (auto* d : {&p.train, &p.test}) {
        d->camera = spec.camera;
        d->classes = class_names(spec);
        d->d0_median = d0;
    }
    return p;
}

fs::path manifest_path(const fs::path& out_dir, const std::string& split) {
    return out_dir / ("manifest_" + split + ".json");
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write " + path.string());
    out << manifest.to_json().dump(2) << '\n';
    if (!out) throw DatasetError("write failed for " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot read manifest " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return DatasetManifest::from_json(j);
}

std::vector<DatasetManifest> build_dataset(const SceneSpec& spec, std::int64_t n_train, std::int64_t n_test,
                                           const fs::path& out_dir, bool overwrite) {
    spec.validate();
    if (n_train < 1 || n_test < 0) throw ConfigError("dataset: need n_train >= 1 and n_test >= 0");
    for (const char* split : {"train", "test"}) {
        if (!overwrite && fs::exists(manifest_path(out_dir, split))) {
            throw DatasetError(manifest_path(out_dir, split).string() + " exists (use --force to overwrite)");
        }
    }
    const auto pair = make_splits(spec, n_train, n_test);
    std::vector<DatasetManifest> manifests;
    const std::pair<const char*, const Dataset*> splits[] = {{"train", &pair.train}, {"test", &pair.test}};
    std::int64_t first = 0;
    for (const auto& [split, data] : splits) {
        std::error_code ec;
        fs::create_directories(out_dir / split, ec);
        if (ec) throw DatasetError("cannot create " + (out_dir / split).string() + ": " + ec.message());
        DatasetManifest m;
        m.split = split;
        m.camera = spec.camera;
        m.classes = data->classes;
        m.d0_median = data->d0_median;
        m.first_index = first;
        m.spec = spec;
        for (std::size_t i = 0; i < data->samples.size(); ++i) {
            const std::string rel = std::string(split) + "/" + sample_stem(first + static_cast<std::int64_t>(i));
            write_sample((out_dir / rel).string(), data->samples[i]);
            m.files.push_back(sample_paths(rel));
        }
        write_manifest(manifest_path(out_dir, split), m);
        manifests.push_back(std::move(m));
        first += static_cast<std::int64_t>(data->samples.size());
    }
    return manifests;
}

Dataset load_dataset(const fs::path& manifest_file) {
    const auto m = read_manifest(manifest_file);
    const auto root = manifest_file.parent_path();
    Dataset d;
    d.camera = m.camera;
    d.classes = m.classes;
    d.d0_median = m.d0_median;
    d.samples.resize(m.files.size());
    parallel_for(static_cast<std::int64_t>(m.files.size()), [&](std::int64_t i) {
        const auto& f = m.files[static_cast<std::size_t>(i)];
        d.samples[static_cast<std::size_t>(i)] =
            read_sample(SamplePaths{(root / f.rgb).string(), (root / f.depth).string(), (root / f.labels).string()});
    });
    return d;
}

}  // namespace depthconv
