#pragma once

#include <map>
#include <string>
#include <vector>

#include "bpdc.hpp"
#include "config.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace salfuse {

struct ConvLayer {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
    int stride = 1;
    int padding = 0;
};

ConvLayer make_conv_layer(ParameterStore& store, const std::string& name, int in_channels,
                          int out_channels, int kernel, Rng& rng);

Tensor apply_conv(const ConvLayer& layer, const Tensor& input);

// Adapted feature maps ordered shallow -> deep; adapted[k] is level k+1. The
// deepest entry is the output of the global-context layer.
struct FeaturePyramid {
    std::vector<Tensor> adapted;

    const Tensor& level(int lvl) const { return adapted.at(static_cast<std::size_t>(lvl - 1)); }
};

// Multi-level encoder: [conv3x3+relu]xN + maxpool per trunk block, a
// size-preserving global-context conv as the deepest level, then the
// per-level adaptation stacks.
class Backbone {
public:
    Backbone(ParameterStore& store, const std::string& prefix, const NetworkConfig& cfg,
             Rng& rng);

    FeaturePyramid forward(const Tensor& image) const;

private:
    NetworkConfig cfg_;
    std::vector<std::vector<ConvLayer>> block_convs_;     // levels 1..K-1
    ConvLayer global_;
    std::map<int, std::vector<ConvLayer>> adaptations_;
};

// One 1x1 conv + sigmoid per inference level mapping adapted channels -> 1.
struct PredictorHead {
    ConvLayer conv;
};

Tensor predict_level(const Tensor& adapted, const PredictorHead& head);

// Teacher/student network: backbone + predictor heads + BPDC weights.
class SingleStreamNet {
public:
    SingleStreamNet(const NetworkConfig& cfg, Rng& rng);

    const NetworkConfig& config() const { return cfg_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const BpdcWeights& bpdc() const { return bpdc_; }
    const PredictorHead& head(int level) const { return heads_.at(level); }

    FeaturePyramid forward_backbone(const Tensor& image) const;

    // Raw per-level predictions at native resolution, inference levels only.
    std::vector<Tensor> raw_predictions(const FeaturePyramid& pyramid) const;

    // Full pass: backbone, heads, dense combination at input resolution.
    SideOutputSet forward(const Tensor& image) const;

private:
    NetworkConfig cfg_;
    ParameterStore store_;
    Backbone backbone_;
    std::map<int, PredictorHead> heads_;
    BpdcWeights bpdc_;
};

}  // namespace salfuse
