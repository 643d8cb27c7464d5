// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Small sequential encoder-decoders built from a layer list. Depth reaches
// every dnconv layer through a pyramid that is 2x2-averaged at each max-pool,
// and the locality width of a layer grows with its downsampling factor.
#pragma once

#include "depthconv/dnconv.hpp"
#include "depthconv/json_util.hpp"
#include "depthconv/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace depthconv {

enum class LayerKind { dnconv, conv, relu, maxpool2, upsample2 };
enum class HeadKind { segmentation, depth };

std::string to_string(LayerKind kind);
std::string to_string(HeadKind kind);
LayerKind parse_layer_kind(const std::string& s);
HeadKind parse_head_kind(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int out_channels = 0;  // conv kinds only
    int kernel = 3;
    double dilation = 1.0;  // standard conv only
    bool edge_branch = false;  // dnconv only, first conv stage only
};

struct NetworkConfig {
    int in_channels = 3;
    std::vector<LayerSpec> layers;
    HeadKind head = HeadKind::segmentation;
    int num_classes = 2;  // segmentation head
    DnConvConfig dnconv;  // shared by all dnconv layers; window.sigma applies at full resolution
    double depth_init = 0.0;  // depth head: initial output level, 0 = dnconv.d0
    std::uint64_t seed = 1;

    void validate() const;
    int output_channels() const { return head == HeadKind::segmentation ? num_classes : 1; }
};

Json to_json(const DnConvConfig& cfg);
// Fields absent from `j` keep their value in `base`.
DnConvConfig dnconv_config_from_json(const Json& j, DnConvConfig base = {});
Json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const Json& j);

// Encoder-decoder with one pooling level per entry of `widths` beyond the
// first: conv blocks of widths[0], pool, widths[1], ..., then the mirror image
// with upsampling, and a final k x k projection to the head.
NetworkConfig encoder_decoder(std::vector<int> widths, LayerKind conv_kind, HeadKind head, int num_classes,
                              const DnConvConfig& dn, std::uint64_t seed, int convs_per_stage = 1);

// Replaces every conv layer kind with `kind`.
NetworkConfig with_conv_kind(NetworkConfig cfg, LayerKind kind);

// RGB batch as [N, 3, H, W], values shifted to [-0.5, 0.5].
Tensor rgb_batch(std::span<const RgbImage* const> images);

class Network {
public:
    explicit Network(NetworkConfig cfg);

    const NetworkConfig& config() const { return cfg_; }

    // Output of the last layer: logits, or the raw depth pre-activation.
    // An empty `depth` span feeds a constant d0 plane.
    Tensor features(const Tensor& x, std::span<const DepthMap> depth) const;
    // Logits for segmentation; softplus depth for depth regression.
    Tensor forward(const Tensor& x, std::span<const DepthMap> depth) const;

    std::vector<Tensor> parameters() const;
    std::vector<std::string> parameter_names() const;
    std::int64_t parameter_count() const;

    // Per-layer dnconv configuration with its scaled sigma.
    DnConvConfig layer_config(std::size_t layer) const;

private:
    NetworkConfig cfg_;
    std::vector<DnConvLayer> convs_;  // indexed by layer; unused entries are empty
};

}  // namespace depthconv
