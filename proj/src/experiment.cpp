// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/experiment.hpp"

#include "depthconv/pnm.hpp"
#include "depthconv/tns_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace depthconv {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
    dataset.spec.validate();
    if (dataset.manifest_dir.empty() && (dataset.n_train < 1 || dataset.n_test < 1)) {
        throw ConfigError("dataset: n_train and n_test must be positive");
    }
    if (network.widths.empty() && !network.layers) throw ConfigError("network: widths must not be empty");
    for (int w : network.widths) {
        if (w < 1) throw ConfigError("network: widths must be positive");
    }
    training.validate();
    if (network.head == HeadKind::depth && depth_source != DepthSource::none) {
        throw ConfigError("a depth-regression network takes no depth input; set depth_source to \"none\"");
    }
    if (depth_source == DepthSource::estimated && depth_checkpoint.empty()) {
        throw ConfigError("depth_source \"estimated\" requires depth_checkpoint");
    }
    DnConvConfig probe = dnconv;
    if (d0_auto) probe.d0 = 1.0;
    try {
        probe.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("dnconv: ") + e.what());
    }
}

ExperimentConfig parse_experiment(const Json& j) {
    reject_unknown_keys(j, {"dataset", "network", "dnconv", "training", "depth_source", "depth_checkpoint", "output"},
                        "config");
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown_keys(d, {"spec", "n_train", "n_test", "manifest"}, "dataset");
        if (d.contains("spec")) cfg.dataset.spec = scene_spec_from_json(d.at("spec"));
        cfg.dataset.n_train = get_or(d, "n_train", cfg.dataset.n_train, "dataset");
        cfg.dataset.n_test = get_or(d, "n_test", cfg.dataset.n_test, "dataset");
        cfg.dataset.manifest_dir = get_or<std::string>(d, "manifest", "", "dataset");
    }
    if (j.contains("network")) {
        const auto& n = j.at("network");
        reject_unknown_keys(n, {"head", "widths", "conv", "convs_per_stage", "edge_branch", "layers", "seed"},
                            "network");
        cfg.network.head = parse_head_kind(get_or<std::string>(n, "head", "segmentation", "network"));
        cfg.network.widths = get_or(n, "widths", cfg.network.widths, "network");
        cfg.network.conv = parse_layer_kind(get_or<std::string>(n, "conv", "dnconv", "network"));
        if (cfg.network.conv != LayerKind::dnconv && cfg.network.conv != LayerKind::conv) {
            throw ConfigError("network.conv must be \"dnconv\" or \"conv\"");
        }
        cfg.network.convs_per_stage = get_or(n, "convs_per_stage", cfg.network.convs_per_stage, "network");
        cfg.network.edge_branch = get_or(n, "edge_branch", cfg.network.edge_branch, "network");
        if (n.contains("layers")) cfg.network.layers = n.at("layers");
        cfg.network.seed = get_or(n, "seed", cfg.network.seed, "network");
    }
    if (j.contains("dnconv")) {
        Json d = j.at("dnconv");
        cfg.d0_auto = d.contains("d0") && d.at("d0").is_string();
        if (cfg.d0_auto) {
            if (d.at("d0").get<std::string>() != "auto") throw ConfigError("dnconv.d0 must be a number or \"auto\"");
            d.erase("d0");
        } else if (d.contains("d0")) {
            cfg.d0_auto = false;
        } else {
            cfg.d0_auto = true;
        }
        cfg.dnconv = dnconv_config_from_json(d, cfg.dnconv);
    }
    if (j.contains("training")) cfg.training = train_config_from_json(j.at("training"));
    cfg.depth_source = parse_depth_source(get_or<std::string>(j, "depth_source", "ground-truth", "config"));
    cfg.depth_checkpoint = get_or<std::string>(j, "depth_checkpoint", "", "config");
    cfg.output = get_or<std::string>(j, "output", cfg.output, "config");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_experiment(j);
}

Json to_json(const ExperimentConfig& cfg) {
    Json dataset{{"spec", to_json(cfg.dataset.spec)}, {"n_train", cfg.dataset.n_train}, {"n_test", cfg.dataset.n_test}};
    if (!cfg.dataset.manifest_dir.empty()) dataset["manifest"] = cfg.dataset.manifest_dir;
    Json network{{"head", to_string(cfg.network.head)},
                 {"widths", cfg.network.widths},
                 {"conv", to_string(cfg.network.conv)},
                 {"convs_per_stage", cfg.network.convs_per_stage},
                 {"edge_branch", cfg.network.edge_branch},
                 {"seed", cfg.network.seed}};
    if (cfg.network.layers) network["layers"] = *cfg.network.layers;
    Json dn = to_json(cfg.dnconv);
    if (cfg.d0_auto) dn["d0"] = "auto";
    Json j{{"dataset", dataset},         {"network", network},
           {"dnconv", dn},               {"training", to_json(cfg.training)},
           {"depth_source", to_string(cfg.depth_source)}};
    if (!cfg.depth_checkpoint.empty()) j["depth_checkpoint"] = cfg.depth_checkpoint;
    j["output"] = cfg.output;
    return j;
}

LoadedData load_data(const ExperimentConfig& cfg) {
    if (!cfg.dataset.manifest_dir.empty()) {
        const fs::path dir = cfg.dataset.manifest_dir;
        return {load_dataset(manifest_path(dir, "train")), load_dataset(manifest_path(dir, "test"))};
    }
    auto pair = make_splits(cfg.dataset.spec, cfg.dataset.n_train, cfg.dataset.n_test);
    return {std::move(pair.train), std::move(pair.test)};
}

ExperimentConfig resolve_experiment(const ExperimentConfig& cfg, const LoadedData& data) {
    auto out = cfg;
    if (out.d0_auto) {
        out.dnconv.d0 = data.train.d0_median;
        out.d0_auto = false;
    }
    return out;
}

NetworkConfig resolve_network(const ExperimentConfig& cfg_in, const LoadedData& data) {
    const auto cfg = resolve_experiment(cfg_in, data);
    NetworkConfig net;
    if (cfg.network.layers) {
        Json j{{"layers", *cfg.network.layers}};
        net = network_config_from_json(j);
        net.head = cfg.network.head;
        net.num_classes = data.train.num_classes();
        net.dnconv = cfg.dnconv;
        net.seed = cfg.network.seed;
        net.validate();
    } else {
        net = encoder_decoder(cfg.network.widths, cfg.network.conv, cfg.network.head, data.train.num_classes(),
                              cfg.dnconv, cfg.network.seed, cfg.network.convs_per_stage);
    }
    if (cfg.network.edge_branch) {
        for (auto& l : net.layers) {
            if (l.kind == LayerKind::dnconv || l.kind == LayerKind::conv) {
                if (l.kind != LayerKind::dnconv) throw ConfigError("network: the edge branch needs a dnconv first stage");
                l.edge_branch = true;
                break;
            }
        }
        net.validate();
    }
    return net;
}

std::optional<Network> load_depth_network(const ExperimentConfig& cfg) {
    if (cfg.depth_source != DepthSource::estimated) return std::nullopt;
    if (cfg.depth_checkpoint.empty()) throw ConfigError("depth_source \"estimated\" requires depth_checkpoint");
    auto ck = load_checkpoint(cfg.depth_checkpoint);
    if (ck.model.config().head != HeadKind::depth) {
        throw ConfigError(cfg.depth_checkpoint + " is not a depth-regression checkpoint");
    }
    return std::move(ck.model);
}

namespace {

void write_json(const fs::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

SplitInput split_input(const Dataset& d, DepthSource source, const std::optional<Network>& depth_net) {
    return {&d, depth_inputs(d, source, depth_net ? &*depth_net : nullptr)};
}

}  // namespace

RunResult run_training(const ExperimentConfig& cfg_in, const LoadedData& data, const fs::path& out_dir, bool resume) {
    const auto cfg = resolve_experiment(cfg_in, data);
    const auto net_cfg = resolve_network(cfg, data);
    const auto depth_net = load_depth_network(cfg);
    const auto ckpt_path = out_dir.empty() ? fs::path() : out_dir / "checkpoint.json";
    const auto log_path = out_dir.empty() ? fs::path() : out_dir / "log.csv";

    std::vector<EpochLog> log;
    std::optional<Checkpoint> ck;
    if (resume) {
        if (out_dir.empty() || !fs::exists(ckpt_path)) throw CheckpointError("--resume: no checkpoint in " + out_dir.string());
        ck = load_checkpoint(ckpt_path);
        if (to_json(ck->model.config()) != to_json(net_cfg)) {
            throw ConfigError("--resume: checkpoint network differs from the configured network");
        }
        ck->training.epochs = cfg.training.epochs;
        if (fs::exists(log_path)) {
            for (const auto& e : read_log_csv(log_path)) {
                if (e.epoch <= ck->epoch) log.push_back(e);
            }
        }
    } else {
        if (!out_dir.empty() && fs::exists(ckpt_path)) {
            throw std::runtime_error(ckpt_path.string() + " exists (use --force to overwrite or --resume)");
        }
        ck = initial_checkpoint(net_cfg, cfg.training);
    }
    // The output directory is left out so that the checkpoint bytes do not
    // depend on where the run was written.
    Json record = to_json(cfg);
    record.erase("output");
    ck->extra = {{"experiment", record}};
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_json(out_dir / "config.resolved.json", to_json(cfg));
    }

    const auto train_in = split_input(data.train, cfg.depth_source, depth_net);
    const auto test_in = split_input(data.test, cfg.depth_source, depth_net);
    const auto head = net_cfg.head;
    train(*ck, train_in, &test_in, [&](const EpochLog& e, const Checkpoint& c) {
        log.push_back(e);
        if (out_dir.empty()) return;
        save_checkpoint(c, ckpt_path);
        write_log_csv(log_path, log, head);
    });
    if (!out_dir.empty() && log.empty()) write_log_csv(log_path, log, head);
    return {std::move(*ck), std::move(log)};
}

EvalReport run_evaluation(const Checkpoint& ckpt, const ExperimentConfig& cfg, const LoadedData& data,
                          const std::string& split) {
    const Dataset* d = split == "train" ? &data.train : split == "test" ? &data.test : nullptr;
    if (!d) throw ConfigError("unknown split \"" + split + "\" (expected train or test)");
    EvalReport r;
    r.head = ckpt.model.config().head;
    r.split = split;
    if (r.head == HeadKind::segmentation) {
        const auto depth_net = load_depth_network(cfg);
        r.seg = seg_scores(evaluate_segmentation(ckpt.model, split_input(*d, cfg.depth_source, depth_net)));
    } else {
        r.depth = evaluate_depth(ckpt.model, *d).scores();
    }
    return r;
}

void write_eval_csv(const fs::path& path, const EvalReport& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    char buf[256];
    if (r.head == HeadKind::segmentation) {
        std::snprintf(buf, sizeof buf, "split,acc,macc,miou\n%s,%.17g,%.17g,%.17g\n", r.split.c_str(), r.seg.acc,
                      r.seg.macc, r.seg.miou);
    } else {
        std::snprintf(buf, sizeof buf, "split,rms,log10,grad\n%s,%.17g,%.17g,%.17g\n", r.split.c_str(), r.depth.rms,
                      r.depth.log10, r.depth.grad);
    }
    out << buf;
}

std::string format_eval_table(const EvalReport& r) {
    char buf[256];
    if (r.head == HeadKind::segmentation) {
        std::snprintf(buf, sizeof buf, "%-6s %8s %8s %8s\n%-6s %8.2f %8.2f %8.2f\n", "split", "Acc(%)", "mAcc(%)",
                      "mIoU(%)", r.split.c_str(), 100 * r.seg.acc, 100 * r.seg.macc, 100 * r.seg.miou);
    } else {
        std::snprintf(buf, sizeof buf, "%-6s %8s %8s %8s\n%-6s %8.4f %8.4f %8.4f\n", "split", "rms", "log10", "grad",
                      r.split.c_str(), r.depth.rms, r.depth.log10, r.depth.grad);
    }
    return buf;
}

std::vector<std::string> ablation_axes() { return {"baseline", "locality", "discretized", "bilinear", "edge"}; }

std::vector<AblationCell> ablation_cells(const std::vector<std::string>& axes, const std::vector<WindowKind>& windows) {
    std::vector<AblationCell> cells;
    bool has_baseline = false;
    for (const auto& a : axes) has_baseline = has_baseline || a == "baseline";
    // The baseline row is always present.
    cells.push_back({"baseline", LayerKind::conv, false, ScaleMode::off, false, WindowKind::gaussian, DepthSource::none});
    (void)has_baseline;
    for (const auto& a : axes) {
        if (a == "baseline") continue;
        AblationCell c;
        if (a == "locality") {
            c.name = "locality-only";
            c.scale = ScaleMode::off;
        } else if (a == "discretized") {
            c.name = "locality+discretized";
            c.scale = ScaleMode::discretized;
        } else if (a == "bilinear") {
            c.name = "locality+bilinear";
            c.scale = ScaleMode::bilinear;
        } else if (a == "edge") {
            c.name = "locality+bilinear+edge";
            c.scale = ScaleMode::bilinear;
            c.edge_branch = true;
        } else {
            throw ConfigError("unknown ablation axis \"" + a + "\" (expected baseline, locality, discretized, bilinear, edge)");
        }
        for (auto w : windows) {
            auto cw = c;
            cw.window = w;
            if (windows.size() > 1) cw.name += "/" + to_string(w);
            cells.push_back(cw);
        }
    }
    return cells;
}

std::vector<AblationCell> depth_source_cells(const ExperimentConfig& cfg, const std::vector<DepthSource>& sources) {
    std::vector<AblationCell> cells;
    for (auto s : sources) {
        AblationCell c;
        c.name = "depth:" + to_string(s);
        c.conv = cfg.network.conv;
        c.locality = cfg.dnconv.locality;
        c.scale = cfg.dnconv.scale;
        c.edge_branch = cfg.network.edge_branch;
        c.window = cfg.dnconv.window.kind;
        c.depth_source = s;
        cells.push_back(c);
    }
    return cells;
}

ExperimentConfig apply_cell(ExperimentConfig cfg, const AblationCell& cell) {
    cfg.network.conv = cell.conv;
    cfg.network.edge_branch = cell.edge_branch;
    cfg.dnconv.locality = cell.locality;
    cfg.dnconv.scale = cell.scale;
    cfg.dnconv.window.kind = cell.window;
    cfg.depth_source = cell.depth_source;
    cfg.validate();
    return cfg;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const LoadedData& data,
                                      const std::vector<AblationCell>& cells, const fs::path& out_dir) {
    std::vector<AblationRow> rows;
    for (const auto& cell : cells) {
        const auto c = apply_cell(cfg, cell);
        fs::path dir;
        if (!out_dir.empty()) {
            std::string safe = cell.name;
            for (auto& ch : safe) {
                if (ch == '/' || ch == ':' || ch == '+') ch = '_';
            }
            dir = out_dir / safe;
        }
        const auto run = run_training(c, data, dir);
        const auto report = run_evaluation(run.checkpoint, resolve_experiment(c, data), data, "test");
        rows.push_back({cell, report.seg, run.log.empty() ? 0.0 : run.log.back().train_loss});
    }
    return rows;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "name,conv,locality,scale,edge_branch,window,depth_source,acc,macc,miou,train_loss\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%s,%d,%s,%s,%.17g,%.17g,%.17g,%.17g\n", r.cell.name.c_str(),
                      to_string(r.cell.conv).c_str(), r.cell.locality ? 1 : 0, to_string(r.cell.scale).c_str(),
                      r.cell.edge_branch ? 1 : 0, to_string(r.cell.window).c_str(),
                      to_string(r.cell.depth_source).c_str(), r.scores.acc, r.scores.macc, r.scores.miou,
                      r.final_train_loss);
        out << buf;
    }
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-34s %8s %8s %8s\n", "configuration", "Acc(%)", "mAcc(%)", "mIoU(%)");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-34s %8.2f %8.2f %8.2f\n", r.cell.name.c_str(), 100 * r.scores.acc,
                      100 * r.scores.macc, 100 * r.scores.miou);
        os << buf;
    }
    return os.str();
}

void write_saliency_pgm(const fs::path& path, const Plane& saliency) {
    PnmImage img{static_cast<int>(saliency.cols()), static_cast<int>(saliency.rows()), 1, 65535, {}};
    const double peak = saliency.maxCoeff();
    for (Eigen::Index i = 0; i < saliency.size(); ++i) {
        const double v = peak > 0.0 ? saliency.data()[i] / peak : 0.0;
        img.values.push_back(static_cast<std::uint16_t>(std::lround(v * 65535.0)));
    }
    write_file_bytes(path, encode_pnm(img));
}

}  // namespace depthconv
