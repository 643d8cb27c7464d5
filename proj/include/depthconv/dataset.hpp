// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "depthconv/json_util.hpp"
#include "depthconv/pnm.hpp"
#include "depthconv/scenegen.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace depthconv {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetManifest {
    std::string split;
    std::vector<SamplePaths> files;  // relative to the manifest's directory
    CameraIntrinsics camera;
    std::vector<std::string> classes;
    double d0_median = 0.0;  // median valid depth of the training split
    std::int64_t first_index = 0;
    SceneSpec spec;

    Json to_json() const;
    static DatasetManifest from_json(const Json& j);
};

// In-memory split, ready for training or evaluation.
struct Dataset {
    std::vector<Sample> samples;
    CameraIntrinsics camera;
    std::vector<std::string> classes;
    double d0_median = 0.0;

    int num_classes() const { return static_cast<int>(classes.size()); }
    std::size_t size() const { return samples.size(); }
};

// Generates samples [first, first + count) of `spec` (in parallel by index).
std::vector<Sample> generate_samples(const SceneSpec& spec, std::int64_t first, std::int64_t count);

// Training split [0, n_train) and test split [n_train, n_train + n_test), both
// sharing d0 = median train depth.
struct SplitPair {
    Dataset train, test;
};
SplitPair make_splits(const SceneSpec& spec, std::int64_t n_train, std::int64_t n_test);

// Writes <out>/{train,test}/NNNNNN_* sample files and <out>/manifest_{train,test}.json.
// Throws DatasetError if a manifest already exists and `overwrite` is false.
std::vector<DatasetManifest> build_dataset(const SceneSpec& spec, std::int64_t n_train, std::int64_t n_test,
                                           const std::filesystem::path& out_dir, bool overwrite = false);

std::filesystem::path manifest_path(const std::filesystem::path& out_dir, const std::string& split);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Reads every sample listed in a manifest.
Dataset load_dataset(const std::filesystem::path& manifest_file);

}  // namespace depthconv
