// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/network.hpp"

#include "depthconv/ops.hpp"

#include <cmath>

namespace depthconv {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dnconv: return "dnconv";
        case LayerKind::conv: return "conv";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2: return "maxpool2";
        case LayerKind::upsample2: return "upsample2";
    }
    return "?";
}

std::string to_string(HeadKind kind) { return kind == HeadKind::segmentation ? "segmentation" : "depth"; }

LayerKind parse_layer_kind(const std::string& s) {
    for (auto k : {LayerKind::dnconv, LayerKind::conv, LayerKind::relu, LayerKind::maxpool2, LayerKind::upsample2}) {
        if (s == to_string(k)) return k;
    }
    throw ConfigError("unknown layer kind \"" + s + "\"");
}

HeadKind parse_head_kind(const std::string& s) {
    if (s == "segmentation") return HeadKind::segmentation;
    if (s == "depth") return HeadKind::depth;
    throw ConfigError("unknown head \"" + s + "\"");
}

namespace {

bool is_conv(LayerKind k) { return k == LayerKind::dnconv || k == LayerKind::conv; }

}  // namespace

void NetworkConfig::validate() const {
    if (in_channels < 1) throw ConfigError("network: in_channels must be positive");
    if (layers.empty()) throw ConfigError("network: no layers");
    if (head == HeadKind::segmentation && num_classes < 2) throw ConfigError("network: need at least 2 classes");
    try {
        dnconv.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }
    int level = 0, channels = in_channels;
    bool seen_conv = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string where = "network layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
        if (is_conv(l.kind)) {
            if (l.out_channels < 1) throw ConfigError(where + ": out_channels must be positive");
            if (l.kernel < 1 || l.kernel % 2 == 0) throw ConfigError(where + ": kernel must be odd");
            if (!(l.dilation > 0.0)) throw ConfigError(where + ": dilation must be positive");
            if (l.edge_branch && (seen_conv || l.kind != LayerKind::dnconv)) {
                throw ConfigError(where + ": the edge branch is only allowed on a first-stage dnconv");
            }
            seen_conv = true;
            channels = l.out_channels;
        } else if (l.edge_branch) {
            throw ConfigError(where + ": edge_branch on a non-conv layer");
        }
        if (l.kind == LayerKind::maxpool2) ++level;
        if (l.kind == LayerKind::upsample2 && --level < 0) throw ConfigError(where + ": upsampling above input resolution");
    }
    if (level != 0) throw ConfigError("network: output is not at input resolution");
    if (!is_conv(layers.back().kind)) throw ConfigError("network: last layer must be a convolution");
    if (channels != output_channels()) {
        throw ConfigError("network: last layer has " + std::to_string(channels) + " channels, head needs " +
                          std::to_string(output_channels()));
    }
    if (head == HeadKind::depth && depth_init < 0.0) throw ConfigError("network: depth_init must be >= 0");
}

Json to_json(const DnConvConfig& cfg) {
    return {{"r0", cfg.r0},
            {"d0", cfg.d0},
            {"window", to_string(cfg.window.kind)},
            {"sigma", cfg.window.sigma},
            {"alpha", cfg.window.alpha},
            {"locality", cfg.locality},
            {"scale", to_string(cfg.scale)},
            {"clamp_lo", cfg.clamp.lo},
            {"clamp_hi", cfg.clamp.hi}};
}

DnConvConfig dnconv_config_from_json(const Json& j, DnConvConfig base) {
    const std::string ctx = "dnconv";
    reject_unknown_keys(j, {"r0", "d0", "window", "sigma", "alpha", "locality", "scale", "clamp_lo", "clamp_hi"},
                        ctx);
    base.r0 = get_or(j, "r0", base.r0, ctx);
    base.d0 = get_or(j, "d0", base.d0, ctx);
    try {
        if (j.contains("window")) base.window.kind = parse_window_kind(get_or<std::string>(j, "window", "", ctx));
        if (j.contains("scale")) base.scale = parse_scale_mode(get_or<std::string>(j, "scale", "", ctx));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    base.window.sigma = get_or(j, "sigma", base.window.sigma, ctx);
    base.window.alpha = get_or(j, "alpha", base.window.alpha, ctx);
    base.locality = get_or(j, "locality", base.locality, ctx);
    base.clamp.lo = get_or(j, "clamp_lo", base.clamp.lo, ctx);
    base.clamp.hi = get_or(j, "clamp_hi", base.clamp.hi, ctx);
    return base;
}

Json to_json(const NetworkConfig& cfg) {
    Json layers = Json::array();
    for (const auto& l : cfg.layers) {
        Json lj{{"type", to_string(l.kind)}};
        if (is_conv(l.kind)) {
            lj["out_channels"] = l.out_channels;
            lj["kernel"] = l.kernel;
            if (l.kind == LayerKind::conv) lj["dilation"] = l.dilation;
            if (l.kind == LayerKind::dnconv) lj["edge_branch"] = l.edge_branch;
        }
        layers.push_back(lj);
    }
    return {{"in_channels", cfg.in_channels},
            {"layers", layers},
            {"head", to_string(cfg.head)},
            {"num_classes", cfg.num_classes},
            {"dnconv", to_json(cfg.dnconv)},
            {"depth_init", cfg.depth_init},
            {"seed", cfg.seed}};
}

NetworkConfig network_config_from_json(const Json& j) {
    const std::string ctx = "network";
    reject_unknown_keys(j, {"in_channels", "layers", "head", "num_classes", "dnconv", "depth_init", "seed"}, ctx);
    NetworkConfig cfg;
    cfg.in_channels = get_or(j, "in_channels", cfg.in_channels, ctx);
    cfg.head = parse_head_kind(get_or<std::string>(j, "head", "segmentation", ctx));
    cfg.num_classes = get_or(j, "num_classes", cfg.num_classes, ctx);
    if (j.contains("dnconv")) cfg.dnconv = dnconv_config_from_json(j.at("dnconv"));
    cfg.depth_init = get_or(j, "depth_init", cfg.depth_init, ctx);
    cfg.seed = get_or(j, "seed", cfg.seed, ctx);
    if (!j.contains("layers") || !j.at("layers").is_array()) throw ConfigError(ctx + ".layers: expected an array");
    for (const auto& lj : j.at("layers")) {
        const std::string lctx = ctx + ".layers[" + std::to_string(cfg.layers.size()) + "]";
        reject_unknown_keys(lj, {"type", "out_channels", "kernel", "dilation", "edge_branch"}, lctx);
        LayerSpec l;
        l.kind = parse_layer_kind(get_or<std::string>(lj, "type", "", lctx));
        l.out_channels = get_or(lj, "out_channels", l.out_channels, lctx);
        l.kernel = get_or(lj, "kernel", l.kernel, lctx);
        l.dilation = get_or(lj, "dilation", l.dilation, lctx);
        l.edge_branch = get_or(lj, "edge_branch", l.edge_branch, lctx);
        cfg.layers.push_back(l);
    }
    return cfg;
}

NetworkConfig encoder_decoder(std::vector<int> widths, LayerKind conv_kind, HeadKind head, int num_classes,
                              const DnConvConfig& dn, std::uint64_t seed, int convs_per_stage) {
    if (widths.empty() || convs_per_stage < 1) throw ConfigError("encoder_decoder: need at least one stage");
    NetworkConfig cfg;
    cfg.head = head;
    cfg.num_classes = num_classes;
    cfg.dnconv = dn;
    cfg.seed = seed;
    auto conv = [&](int out) { cfg.layers.push_back({conv_kind, out, 3, 1.0, false}); };
    auto relu = [&] { cfg.layers.push_back({LayerKind::relu}); };
    for (std::size_t s = 0; s < widths.size(); ++s) {
        if (s > 0) cfg.layers.push_back({LayerKind::maxpool2});
        for (int i = 0; i < convs_per_stage; ++i) {
            conv(widths[s]);
            relu();
        }
    }
    for (std::size_t s = widths.size() - 1; s > 0; --s) {
        cfg.layers.push_back({LayerKind::upsample2});
        conv(widths[s - 1]);
        relu();
    }
    conv(cfg.output_channels());
    cfg.validate();
    return cfg;
}

NetworkConfig with_conv_kind(NetworkConfig cfg, LayerKind kind) {
    for (auto& l : cfg.layers) {
        if (is_conv(l.kind)) {
            l.kind = kind;
            if (kind == LayerKind::conv) l.edge_branch = false;
        }
    }
    return cfg;
}

Tensor rgb_batch(std::span<const RgbImage* const> images) {
    if (images.empty()) throw ShapeError("rgb_batch: empty batch");
    const auto h = images[0]->height(), w = images[0]->width();
    std::vector<double> data;
    data.reserve(images.size() * 3 * h * w);
    for (const auto* img : images) {
        if (img->height() != h || img->width() != w) throw ShapeError("rgb_batch: images differ in size");
        for (int c = 0; c < 3; ++c) {
            const auto& p = img->channel(c);
            for (Eigen::Index i = 0; i < p.size(); ++i) data.push_back(p.data()[i] - 0.5);
        }
    }
    return Tensor({static_cast<std::int64_t>(images.size()), 3, h, w}, std::move(data));
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    convs_.resize(cfg_.layers.size());
    std::int64_t channels = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
        const auto& l = cfg_.layers[i];
        if (!is_conv(l.kind)) continue;
        convs_[i] = DnConvLayer::create(channels, l.out_channels, layer_config(i), rng);
        channels = l.out_channels;
    }
    if (cfg_.head == HeadKind::depth) {
        // softplus(b) = depth_init
        const double target = cfg_.depth_init > 0.0 ? cfg_.depth_init : cfg_.dnconv.d0;
        auto& last = convs_.back();
        last.bias.mutable_data()[0] = target > 30.0 ? target : std::log(std::expm1(target));
    }
}

DnConvConfig Network::layer_config(std::size_t layer) const {
    DnConvConfig c = cfg_.dnconv;
    const auto& l = cfg_.layers.at(layer);
    c.kernel = l.kernel;
    c.edge_branch = l.edge_branch;
    double s = 1.0;
    for (std::size_t i = 0; i < layer; ++i) {
        if (cfg_.layers[i].kind == LayerKind::maxpool2) s *= 2.0;
        if (cfg_.layers[i].kind == LayerKind::upsample2) s /= 2.0;
    }
    c.window.sigma = sigma_for_layer(SigmaSchedule{cfg_.dnconv.window.sigma, {}}, s);
    return c;
}

Tensor Network::features(const Tensor& x, std::span<const DepthMap> depth) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels) {
        throw ShapeError("network: expected [N," + std::to_string(cfg_.in_channels) + ",H,W] input, got " +
                         shape_string(x.shape()));
    }
    std::vector<DepthMap> level0;
    if (depth.empty()) {
        level0.assign(static_cast<std::size_t>(x.dim(0)), DepthMap(x.dim(2), x.dim(3), cfg_.dnconv.d0));
    } else {
        if (static_cast<std::int64_t>(depth.size()) != x.dim(0)) throw ShapeError("network: depth batch mismatch");
        level0.assign(depth.begin(), depth.end());
    }
    std::vector<std::vector<DepthMap>> pyramid{std::move(level0)};
    std::size_t level = 0;
    Tensor h = x;
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
        const auto& l = cfg_.layers[i];
        switch (l.kind) {
            case LayerKind::dnconv: h = dnconv_forward(h, pyramid[level], convs_[i]); break;
            case LayerKind::conv: h = standard_conv_forward(h, convs_[i].weight, convs_[i].bias, l.dilation); break;
            case LayerKind::relu: h = relu(h); break;
            case LayerKind::maxpool2:
                h = maxpool2(h);
                if (++level == pyramid.size()) {
                    std::vector<DepthMap> next;
                    for (const auto& d : pyramid[level - 1]) next.push_back(downsample_depth(d));
                    pyramid.push_back(std::move(next));
                }
                break;
            case LayerKind::upsample2:
                h = upsample2(h);
                --level;
                break;
        }
    }
    return h;
}

Tensor Network::forward(const Tensor& x, std::span<const DepthMap> depth) const {
    auto f = features(x, depth);
    return cfg_.head == HeadKind::depth ? softplus(f) : f;
}

std::vector<Tensor> Network::parameters() const {
    std::vector<Tensor> out;
    for (const auto& c : convs_) {
        if (!c.weight.defined()) continue;
        for (const auto& p : c.parameters()) out.push_back(p);
    }
    return out;
}

std::vector<std::string> Network::parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        if (!convs_[i].weight.defined()) continue;
        const std::string base = "layer" + std::to_string(i) + ".";
        out.push_back(base + "weight");
        out.push_back(base + "bias");
        if (convs_[i].edge_weight.defined()) out.push_back(base + "edge_weight");
    }
    return out;
}

std::int64_t Network::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

}  // namespace depthconv
