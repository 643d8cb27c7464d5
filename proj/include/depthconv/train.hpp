// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "depthconv/dataset.hpp"
#include "depthconv/json_util.hpp"
#include "depthconv/losses.hpp"
#include "depthconv/metrics.hpp"
#include "depthconv/network.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace depthconv {

enum class DepthSource { none, ground_truth, estimated };

std::string to_string(DepthSource source);
DepthSource parse_depth_source(const std::string& s);

// Training diverged (non-finite loss).
class DivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int epochs = 20;
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 8;
    std::uint64_t seed = 1;  // shuffling
    LossConfig loss;

    void validate() const;
};

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

struct Checkpoint {
    Network model;
    TrainConfig training;
    std::vector<std::vector<double>> velocity;  // one per parameter
    int epoch = 0;                               // completed epochs
    std::string rng_state;                      // shuffling engine, textual
    Json extra = Json::object();                 // caller metadata (depth source, ...)
};

Checkpoint initial_checkpoint(const NetworkConfig& net, const TrainConfig& training);

// Writes <path> (JSON index and config echo) and <path>.tns (tensors).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_data_path(const std::filesystem::path& path);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double test_metric = 0.0;  // mIoU for segmentation, RMS for depth; NaN without a test split
    double wall_seconds = 0.0;
};

std::string metric_column(HeadKind head);
void write_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log, HeadKind head);
std::vector<EpochLog> read_log_csv(const std::filesystem::path& path);

// A split together with the depth maps fed to the network (empty: none).
struct SplitInput {
    const Dataset* data = nullptr;
    std::vector<DepthMap> depth;
};

using EpochCallback = std::function<void(const EpochLog&, const Checkpoint&)>;

// Continues `ckpt` until ckpt.training.epochs epochs are complete.
std::vector<EpochLog> train(Checkpoint& ckpt, const SplitInput& train_split, const SplitInput* test_split,
                            const EpochCallback& on_epoch = {});

// Depth maps fed to a segmentation network for the given source.
std::vector<DepthMap> depth_inputs(const Dataset& data, DepthSource source, const Network* depth_net = nullptr);

DepthMap estimate_depth(const Network& depth_net, const RgbImage& rgb);
std::vector<DepthMap> estimate_depth(const Network& depth_net, const Dataset& data);

ConfusionMatrix evaluate_segmentation(const Network& net, const SplitInput& split);
DepthErrorAccumulator evaluate_depth(const Network& net, const Dataset& data);

// Per-pixel predicted classes for a batch of samples.
std::vector<LabelMap> predict_labels(const Network& net, const SplitInput& split, std::size_t first,
                                     std::size_t count);

}  // namespace depthconv
