// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and the runners behind the command-line tool.
#pragma once

#include "depthconv/dataset.hpp"
#include "depthconv/json_util.hpp"
#include "depthconv/network.hpp"
#include "depthconv/train.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace depthconv {

struct DatasetSection {
    SceneSpec spec = default_scene_spec();
    std::int64_t n_train = 200;
    std::int64_t n_test = 50;
    std::string manifest_dir;  // when set, samples are read from disk instead of generated
};

struct NetworkSection {
    HeadKind head = HeadKind::segmentation;
    std::vector<int> widths{16, 32};
    LayerKind conv = LayerKind::dnconv;
    int convs_per_stage = 1;
    bool edge_branch = false;
    std::optional<Json> layers;  // explicit layer list overrides the preset
    std::uint64_t seed = 1;
};

struct ExperimentConfig {
    DatasetSection dataset;
    NetworkSection network;
    DnConvConfig dnconv;
    bool d0_auto = true;  // d0 = median training depth
    TrainConfig training;
    DepthSource depth_source = DepthSource::ground_truth;
    std::string depth_checkpoint;
    std::string output = "out";

    void validate() const;
};

ExperimentConfig parse_experiment(const Json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& cfg);

struct LoadedData {
    Dataset train, test;
};

LoadedData load_data(const ExperimentConfig& cfg);

// Network configuration with d0 and the class count resolved against the data.
NetworkConfig resolve_network(const ExperimentConfig& cfg, const LoadedData& data);
// Copy of `cfg` with d0 fixed to the value used for `data`.
ExperimentConfig resolve_experiment(const ExperimentConfig& cfg, const LoadedData& data);

// Depth network named by cfg.depth_checkpoint; throws ConfigError when the
// source is "estimated" and no checkpoint is configured.
std::optional<Network> load_depth_network(const ExperimentConfig& cfg);

struct RunResult {
    Checkpoint checkpoint;
    std::vector<EpochLog> log;
};

// Trains according to `cfg`. With a non-empty `out_dir`, writes
// checkpoint.json (+ .tns) after every epoch, log.csv and config.resolved.json.
// `resume` continues from out_dir/checkpoint.json.
RunResult run_training(const ExperimentConfig& cfg, const LoadedData& data, const std::filesystem::path& out_dir = {},
                       bool resume = false);

struct EvalReport {
    HeadKind head = HeadKind::segmentation;
    std::string split;
    SegScores seg;
    DepthScores depth;
};

EvalReport run_evaluation(const Checkpoint& ckpt, const ExperimentConfig& cfg, const LoadedData& data,
                          const std::string& split);
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);
std::string format_eval_table(const EvalReport& report);

// One cell of an ablation table.
struct AblationCell {
    std::string name;
    LayerKind conv = LayerKind::dnconv;
    bool locality = true;
    ScaleMode scale = ScaleMode::bilinear;
    bool edge_branch = false;
    WindowKind window = WindowKind::gaussian;
    DepthSource depth_source = DepthSource::ground_truth;
};

// Named operator variants: baseline, locality, discretized, bilinear, edge.
std::vector<std::string> ablation_axes();
// Cells for the requested axes crossed with windows (the baseline has no window).
std::vector<AblationCell> ablation_cells(const std::vector<std::string>& axes, const std::vector<WindowKind>& windows);
// Depth-source comparison on the configured operator.
std::vector<AblationCell> depth_source_cells(const ExperimentConfig& cfg, const std::vector<DepthSource>& sources);

ExperimentConfig apply_cell(ExperimentConfig cfg, const AblationCell& cell);

struct AblationRow {
    AblationCell cell;
    SegScores scores;
    double final_train_loss = 0.0;
};

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const LoadedData& data,
                                      const std::vector<AblationCell>& cells, const std::filesystem::path& out_dir = {});
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

// Writes a saliency map as a 16-bit PGM scaled to its maximum.
void write_saliency_pgm(const std::filesystem::path& path, const Plane& saliency);

}  // namespace depthconv
