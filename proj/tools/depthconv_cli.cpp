// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/erf.hpp"
#include "depthconv/experiment.hpp"
#include "depthconv/parallel.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace depthconv;

namespace {

struct Options {
    std::string config, out, checkpoint, split = "test", axes, windows = "gaussian", depth_sources, pixels;
    bool force = false, resume = false;
    std::optional<std::uint64_t> seed;
    int workers = 0;
    std::int64_t sample = 0;
};

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

ExperimentConfig load_config(const Options& o) {
    auto cfg = load_experiment(o.config);
    if (o.seed) {
        cfg.training.seed = *o.seed;
        cfg.network.seed = *o.seed;
    }
    if (!o.out.empty()) cfg.output = o.out;
    return cfg;
}

const char* kRunFiles[] = {"checkpoint.json", "checkpoint.json.tns", "log.csv", "config.resolved.json"};

void clear_run_files(const fs::path& dir) {
    for (const char* f : kRunFiles) fs::remove(dir / f);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

int cmd_gen(const Options& o) {
    const auto cfg = load_config(o);
    const fs::path out = cfg.output;
    const auto manifests = build_dataset(cfg.dataset.spec, cfg.dataset.n_train, cfg.dataset.n_test, out, o.force);
    std::ofstream(out / "config.resolved.json") << to_json(cfg).dump(2) << '\n';
    for (const auto& m : manifests) {
        std::printf("%s: %zu samples -> %s\n", m.split.c_str(), m.files.size(),
                    manifest_path(out, m.split).string().c_str());
    }
    std::printf("d0 (median train depth): %.6g\n", manifests.front().d0_median);
    return 0;
}

int cmd_train(const Options& o) {
    const auto cfg = load_config(o);
    const fs::path out = cfg.output;
    if (o.force && !o.resume) clear_run_files(out);
    const auto data = load_data(cfg);
    const auto run = run_training(cfg, data, out, o.resume);
    if (!run.log.empty()) {
        const auto& last = run.log.back();
        std::printf("epoch %d: train_loss %.6g, %s %.6g\n", last.epoch, last.train_loss,
                    metric_column(run.checkpoint.model.config().head).c_str(), last.test_metric);
    }
    std::printf("checkpoint: %s\n", (out / "checkpoint.json").string().c_str());
    return 0;
}

Checkpoint load_for_eval(const std::string& path, ExperimentConfig& cfg) {
    if (path.empty()) throw ConfigError("--checkpoint is required");
    if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path);
    auto ck = load_checkpoint(path);
    if (!ck.extra.contains("experiment")) throw CheckpointError(path + " carries no experiment record");
    cfg = parse_experiment(ck.extra.at("experiment"));
    return ck;
}

int cmd_eval(const Options& o) {
    ExperimentConfig cfg;
    const auto ck = load_for_eval(o.checkpoint, cfg);
    const auto data = load_data(cfg);
    const auto report = run_evaluation(ck, cfg, data, o.split);
    const fs::path out = o.out.empty() ? fs::path(o.checkpoint).parent_path() : fs::path(o.out);
    if (!out.empty()) fs::create_directories(out);
    const auto csv = out / ("eval_" + o.split + ".csv");
    write_eval_csv(csv, report);
    std::fputs(format_eval_table(report).c_str(), stdout);
    std::printf("written: %s\n", csv.string().c_str());
    return 0;
}

int cmd_ablate(const Options& o) {
    const auto cfg = load_config(o);
    const fs::path out = cfg.output;
    const auto csv = out / "ablation.csv";
    const auto ds_csv = out / "depth_sources.csv";
    if (!o.force && (fs::exists(csv) || fs::exists(ds_csv))) {
        throw std::runtime_error(out.string() + " already holds ablation results (use --force)");
    }
    std::vector<WindowKind> windows;
    for (const auto& w : split_list(o.windows, ',')) windows.push_back(parse_window_kind(w));
    if (windows.empty()) throw ConfigError("--windows must name at least one window");
    std::vector<DepthSource> sources;
    for (const auto& s : split_list(o.depth_sources, ',')) sources.push_back(parse_depth_source(s));
    const auto axes = o.axes.empty() ? ablation_axes() : split_list(o.axes, ',');

    auto cells = ablation_cells(axes, windows);
    auto ds_cells = depth_source_cells(cfg, sources);
    for (const auto& c : cells) apply_cell(cfg, c);
    for (const auto& c : ds_cells) apply_cell(cfg, c);

    const auto data = load_data(cfg);
    fs::create_directories(out);
    std::ofstream(out / "config.resolved.json") << to_json(resolve_experiment(cfg, data)).dump(2) << '\n';
    auto clear = [&](const std::vector<AblationCell>& cs) {
        if (!o.force) return;
        for (const auto& c : cs) {
            std::string safe = c.name;
            for (auto& ch : safe) {
                if (ch == '/' || ch == ':' || ch == '+') ch = '_';
            }
            clear_run_files(out / safe);
        }
    };
    clear(cells);
    const auto rows = run_ablation(cfg, data, cells, out);
    write_ablation_csv(csv, rows);
    std::fputs(format_ablation_table(rows).c_str(), stdout);
    if (!ds_cells.empty()) {
        clear(ds_cells);
        const auto ds_rows = run_ablation(cfg, data, ds_cells, out);
        write_ablation_csv(ds_csv, ds_rows);
        std::fputs("\n", stdout);
        std::fputs(format_ablation_table(ds_rows).c_str(), stdout);
    }
    return 0;
}

int cmd_erf(const Options& o) {
    ExperimentConfig cfg;
    const auto ck = load_for_eval(o.checkpoint, cfg);
    const auto data = load_data(cfg);
    const Dataset* d = o.split == "train" ? &data.train : o.split == "test" ? &data.test : nullptr;
    if (!d) throw ConfigError("unknown split \"" + o.split + "\"");
    if (o.sample < 0 || o.sample >= static_cast<std::int64_t>(d->size())) {
        throw std::out_of_range("--sample " + std::to_string(o.sample) + " outside [0, " + std::to_string(d->size()) +
                                ")");
    }
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pixels;
    for (const auto& p : split_list(o.pixels, ';')) {
        const auto rc = split_list(p, ',');
        if (rc.size() != 2) throw ConfigError("--pixels expects \"row,col;row,col;...\", got \"" + p + "\"");
        try {
            pixels.emplace_back(std::stol(rc[0]), std::stol(rc[1]));
        } catch (const std::logic_error&) {
            throw ConfigError("--pixels: cannot parse \"" + p + "\"");
        }
    }
    if (pixels.empty()) throw ConfigError("--pixels must name at least one pixel");
    const auto& sample = d->samples[static_cast<std::size_t>(o.sample)];
    for (const auto& [r, c] : pixels) {
        if (r < 0 || c < 0 || r >= sample.labels.rows() || c >= sample.labels.cols()) {
            throw std::out_of_range("pixel (" + std::to_string(r) + ", " + std::to_string(c) + ") outside the image");
        }
    }

    std::optional<DepthMap> depth;
    if (cfg.depth_source != DepthSource::none) {
        Dataset one{{sample}, d->camera, d->classes, d->d0_median};
        const auto depth_net = load_depth_network(cfg);
        depth = depth_inputs(one, cfg.depth_source, depth_net ? &*depth_net : nullptr).front();
    }
    const fs::path out = o.out.empty() ? fs::path(o.checkpoint).parent_path() / "erf" : fs::path(o.out);
    fs::create_directories(out);
    std::ofstream csv(out / "erf.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out / "erf.csv").string());
    csv << "sample,row,col,depth,radius,file\n";
    for (const auto& [r, c] : pixels) {
        const auto m = erf_probe(ck.model, sample, depth ? &*depth : nullptr, r, c);
        char name[96];
        std::snprintf(name, sizeof name, "erf_%06lld_r%ld_c%ld.pgm", static_cast<long long>(o.sample),
                      static_cast<long>(r), static_cast<long>(c));
        write_saliency_pgm(out / name, m.saliency);
        char row[256];
        std::snprintf(row, sizeof row, "%lld,%ld,%ld,%.17g,%.17g,%s\n", static_cast<long long>(o.sample),
                      static_cast<long>(r), static_cast<long>(c), m.depth, m.radius, name);
        csv << row;
        std::printf("pixel (%ld, %ld) depth %.4g: radius %.4g px -> %s\n", static_cast<long>(r), static_cast<long>(c),
                    m.depth, m.radius, name);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depthconv: depth-driven convolution experiments"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--workers", o.workers, "worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
    };
    auto with_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (JSON)")->required();
        sub->add_option("--out", o.out, "output directory (overrides config)");
        sub->add_option("--seed", o.seed, "override the training and network seeds");
        sub->add_flag("--force", o.force, "overwrite existing outputs");
        common(sub);
    };

    auto* gen = app.add_subcommand("gen", "generate the synthetic dataset");
    with_config(gen);
    auto* tr = app.add_subcommand("train", "train a network");
    with_config(tr);
    tr->add_flag("--resume", o.resume, "continue from the checkpoint in the output directory");
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", o.checkpoint, "checkpoint JSON")->required();
    ev->add_option("--split", o.split, "train or test");
    ev->add_option("--out", o.out, "directory for the CSV (default: next to the checkpoint)");
    common(ev);
    auto* ab = app.add_subcommand("ablate", "run the ablation grid");
    with_config(ab);
    ab->add_option("--axes", o.axes, "comma list of baseline,locality,discretized,bilinear,edge");
    ab->add_option("--windows", o.windows, "comma list of gaussian,step,exp-decay");
    ab->add_option("--depth-sources", o.depth_sources, "comma list of none,ground-truth,estimated");
    auto* erf = app.add_subcommand("erf", "probe effective receptive fields");
    erf->add_option("--checkpoint", o.checkpoint, "checkpoint JSON")->required();
    erf->add_option("--split", o.split, "train or test");
    erf->add_option("--sample", o.sample, "sample index within the split");
    erf->add_option("--pixels", o.pixels, "\"row,col;row,col;...\"")->required();
    erf->add_option("--out", o.out, "output directory");
    common(erf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (o.workers > 0) set_num_workers(o.workers);
        if (*gen) return cmd_gen(o);
        if (*tr) return cmd_train(o);
        if (*ev) return cmd_eval(o);
        if (*ab) return cmd_ablate(o);
        if (*erf) return cmd_erf(o);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::out_of_range& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
