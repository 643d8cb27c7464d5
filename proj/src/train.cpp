// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/train.hpp"

#include "depthconv/ops.hpp"
#include "depthconv/optim.hpp"
#include "depthconv/random.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace depthconv {

namespace fs = std::filesystem;

std::string to_string(DepthSource source) {
    switch (source) {
        case DepthSource::none: return "none";
        case DepthSource::ground_truth: return "ground-truth";
        case DepthSource::estimated: return "estimated";
    }
    return "?";
}

DepthSource parse_depth_source(const std::string& s) {
    if (s == "none") return DepthSource::none;
    if (s == "ground-truth" || s == "gt") return DepthSource::ground_truth;
    if (s == "estimated") return DepthSource::estimated;
    throw ConfigError("unknown depth source \"" + s + "\"");
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("training: epochs must be >= 0");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("training: lr must be >= 0");
    if (!(momentum >= 0.0) || !(momentum < 1.0)) throw ConfigError("training: momentum must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("training: batch_size must be positive");
    try {
        loss.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

Json to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},     {"lr", cfg.lr},     {"momentum", cfg.momentum},
            {"batch_size", cfg.batch_size}, {"seed", cfg.seed}, {"lambda_grad", cfg.loss.lambda_grad}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig base) {
    const std::string ctx = "training";
    reject_unknown_keys(j, {"epochs", "lr", "momentum", "batch_size", "seed", "lambda_grad"}, ctx);
    base.epochs = get_or(j, "epochs", base.epochs, ctx);
    base.lr = get_or(j, "lr", base.lr, ctx);
    base.momentum = get_or(j, "momentum", base.momentum, ctx);
    base.batch_size = get_or(j, "batch_size", base.batch_size, ctx);
    base.seed = get_or(j, "seed", base.seed, ctx);
    base.loss.lambda_grad = get_or(j, "lambda_grad", base.loss.lambda_grad, ctx);
    base.validate();
    return base;
}

namespace {

std::string engine_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

std::mt19937_64 engine_from(const std::string& state) {
    std::mt19937_64 rng;
    std::istringstream is(state);
    is >> rng;
    if (!is) throw CheckpointError("checkpoint: corrupt rng state");
    return rng;
}

struct Batch {
    Tensor x;
    std::vector<DepthMap> depth;  // network input
    std::vector<LabelMap> labels;
    std::vector<DepthMap> gt_depth;
};

Batch make_batch(const SplitInput& split, std::span<const std::size_t> indices) {
    Batch b;
    std::vector<const RgbImage*> images;
    for (auto i : indices) {
        const auto& s = split.data->samples[i];
        images.push_back(&s.rgb);
        if (!split.depth.empty()) b.depth.push_back(split.depth[i]);
        b.labels.push_back(s.labels);
        b.gt_depth.push_back(s.depth);
    }
    b.x = rgb_batch(images);
    return b;
}

void require_split(const SplitInput& split, const char* what) {
    if (!split.data || split.data->samples.empty()) throw std::invalid_argument(std::string(what) + ": empty split");
    if (!split.depth.empty() && split.depth.size() != split.data->samples.size()) {
        throw std::invalid_argument(std::string(what) + ": depth inputs do not match the split");
    }
}

constexpr std::size_t kEvalBatch = 8;

}  // namespace

Checkpoint initial_checkpoint(const NetworkConfig& net, const TrainConfig& training) {
    training.validate();
    Checkpoint ckpt{Network(net), training, {}, 0, engine_state(std::mt19937_64(training.seed)), Json::object()};
    return ckpt;
}

std::string metric_column(HeadKind head) { return head == HeadKind::segmentation ? "test_mIoU" : "test_RMS"; }

void write_log_csv(const fs::path& path, std::span<const EpochLog> log, HeadKind head) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,train_loss," << metric_column(head) << ",wall_seconds\n";
    char buf[128];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.test_metric, e.wall_seconds);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<EpochLog> read_log_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<EpochLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochLog e;
        char metric[64];
        if (std::sscanf(line.c_str(), "%d,%lf,%63[^,],%lf", &e.epoch, &e.train_loss, metric, &e.wall_seconds) != 4) {
            throw std::runtime_error(path.string() + ": malformed row \"" + line + "\"");
        }
        e.test_metric = std::strtod(metric, nullptr);
        out.push_back(e);
    }
    return out;
}

std::vector<EpochLog> train(Checkpoint& ckpt, const SplitInput& train_split, const SplitInput* test_split,
                            const EpochCallback& on_epoch) {
    ckpt.training.validate();
    require_split(train_split, "train");
    if (test_split) require_split(*test_split, "test");
    const auto& net = ckpt.model;
    const auto head = net.config().head;
    const auto n = train_split.data->samples.size();
    const auto bs = static_cast<std::size_t>(ckpt.training.batch_size);
    auto params = net.parameters();
    auto rng = engine_from(ckpt.rng_state);

    std::vector<EpochLog> log;
    while (ckpt.epoch < ckpt.training.epochs) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
        }
        double loss_sum = 0.0;
        for (std::size_t first = 0; first < n; first += bs) {
            const auto idx = std::span(order).subspan(first, std::min(bs, n - first));
            const auto batch = make_batch(train_split, idx);
            const auto where = "training diverged at epoch " + std::to_string(ckpt.epoch + 1) + ", batch " +
                               std::to_string(first / bs);
            double value = 0.0;
            try {
                const auto out = net.forward(batch.x, batch.depth);
                Tensor loss;
                if (head == HeadKind::segmentation) {
                    loss = softmax_cross_entropy(out, batch.labels, kIgnoreLabel);
                } else {
                    loss = total_depth_loss(out, batch.gt_depth, ckpt.training.loss);
                }
                value = loss.item();
                if (!std::isfinite(value)) throw NonFiniteError("loss " + std::to_string(value));
                backward(loss);
                sgd_step(params, ckpt.velocity, ckpt.training.lr, ckpt.training.momentum);
            } catch (const NonFiniteError& e) {
                throw DivergedError(where + ": " + e.what() + " (try a smaller lr)");
            }
            loss_sum += value * static_cast<double>(idx.size());
        }
        ++ckpt.epoch;
        ckpt.rng_state = engine_state(rng);

        EpochLog e;
        e.epoch = ckpt.epoch;
        e.train_loss = loss_sum / static_cast<double>(n);
        e.test_metric = std::numeric_limits<double>::quiet_NaN();
        if (test_split) {
            if (head == HeadKind::segmentation) {
                e.test_metric = seg_scores(evaluate_segmentation(net, *test_split)).miou;
            } else {
                e.test_metric = evaluate_depth(net, *test_split->data).scores().rms;
            }
        }
        e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log.push_back(e);
        if (on_epoch) on_epoch(e, ckpt);
    }
    return log;
}

std::vector<LabelMap> predict_labels(const Network& net, const SplitInput& split, std::size_t first,
                                     std::size_t count) {
    if (net.config().head != HeadKind::segmentation) throw std::invalid_argument("predict_labels: not a segmentation network");
    require_split(split, "predict_labels");
    NoGradGuard no_grad;
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), first);
    const auto batch = make_batch(split, idx);
    return argmax_channels(net.forward(batch.x, batch.depth));
}

ConfusionMatrix evaluate_segmentation(const Network& net, const SplitInput& split) {
    require_split(split, "evaluate");
    ConfusionMatrix cm(net.config().num_classes);
    const auto n = split.data->samples.size();
    for (std::size_t first = 0; first < n; first += kEvalBatch) {
        const auto count = std::min(kEvalBatch, n - first);
        const auto pred = predict_labels(net, split, first, count);
        for (std::size_t i = 0; i < count; ++i) confusion_accumulate(cm, pred[i], split.data->samples[first + i].labels);
    }
    return cm;
}

std::vector<DepthMap> estimate_depth(const Network& depth_net, const Dataset& data) {
    if (depth_net.config().head != HeadKind::depth) {
        throw CheckpointError("estimate_depth: checkpoint does not have a depth-regression head");
    }
    NoGradGuard no_grad;
    std::vector<DepthMap> out;
    const auto n = data.samples.size();
    for (std::size_t first = 0; first < n; first += kEvalBatch) {
        const auto count = std::min(kEvalBatch, n - first);
        std::vector<const RgbImage*> images;
        for (std::size_t i = 0; i < count; ++i) images.push_back(&data.samples[first + i].rgb);
        const auto pred = depth_net.forward(rgb_batch(images), {});
        const auto h = pred.dim(2), w = pred.dim(3);
        for (std::size_t i = 0; i < count; ++i) {
            DepthMap d(h, w, 0.0);
            std::copy_n(pred.data().begin() + static_cast<std::ptrdiff_t>(i * h * w), h * w, d.values.data());
            out.push_back(std::move(d));
        }
    }
    return out;
}

DepthMap estimate_depth(const Network& depth_net, const RgbImage& rgb) {
    Dataset one;
    one.samples.push_back(Sample{rgb, DepthMap(), LabelMap()});
    return std::move(estimate_depth(depth_net, one).front());
}

DepthErrorAccumulator evaluate_depth(const Network& net, const Dataset& data) {
    const auto pred = estimate_depth(net, data);
    DepthErrorAccumulator acc;
    for (std::size_t i = 0; i < pred.size(); ++i) acc.add(pred[i].values, data.samples[i].depth);
    return acc;
}

std::vector<DepthMap> depth_inputs(const Dataset& data, DepthSource source, const Network* depth_net) {
    switch (source) {
        case DepthSource::none: return {};
        case DepthSource::ground_truth: {
            std::vector<DepthMap> out;
            for (const auto& s : data.samples) out.push_back(s.depth);
            return out;
        }
        case DepthSource::estimated:
            if (!depth_net) throw ConfigError("depth source \"estimated\" requires a depth checkpoint");
            return estimate_depth(*depth_net, data);
    }
    return {};
}

}  // namespace depthconv
