#include "backbone.hpp"

namespace salfuse {

ConvLayer make_conv_layer(ParameterStore& store, const std::string& name, int in_channels,
                          int out_channels, int kernel, Rng& rng) {
    ConvLayer layer;
    layer.weight = store.create(name + ".weight", Shape{out_channels, in_channels, kernel, kernel});
    layer.bias = store.create(name + ".bias", Shape{1, out_channels, 1, 1});
    layer.padding = (kernel - 1) / 2;
    init_conv_kernel(layer.weight, rng);
    return layer;
}

Tensor apply_conv(const ConvLayer& layer, const Tensor& input) {
    return conv2d(input, layer.weight->tensor, layer.bias->tensor, layer.stride, layer.padding);
}

Backbone::Backbone(ParameterStore& store, const std::string& prefix, const NetworkConfig& cfg,
                   Rng& rng)
    : cfg_(cfg) {
    int in_ch = 3;
    for (int level = 1; level <= cfg.levels - 1; ++level) {
        const TrunkBlock& block = cfg.blocks[static_cast<std::size_t>(level - 1)];
        std::vector<ConvLayer> convs;
        for (int j = 0; j < block.convs; ++j) {
            convs.push_back(make_conv_layer(
                store, prefix + ".block" + std::to_string(level) + ".conv" + std::to_string(j),
                j == 0 ? in_ch : block.channels, block.channels, block.kernel, rng));
        }
        block_convs_.push_back(std::move(convs));
        in_ch = block.channels;
    }
    global_ = make_conv_layer(store, prefix + ".global", in_ch, cfg.global_channels,
                              cfg.global_kernel, rng);

    for (const auto& [level, layers] : cfg.adaptations) {
        int ch = level == cfg.levels ? cfg.global_channels
                                     : cfg.blocks[static_cast<std::size_t>(level - 1)].channels;
        std::vector<ConvLayer> stack;
        for (std::size_t j = 0; j < layers.size(); ++j) {
            stack.push_back(make_conv_layer(
                store, prefix + ".adapt" + std::to_string(level) + "." + std::to_string(j), ch,
                layers[j].channels, layers[j].kernel, rng));
            ch = layers[j].channels;
        }
        adaptations_[level] = std::move(stack);
    }
}

FeaturePyramid Backbone::forward(const Tensor& image) const {
    const Shape s = image.shape();
    if (s.c != 3) {
        throw Error::config("backbone expects 3-channel input, got " + s.str());
    }
    const int factor = cfg_.downsample_factor();
    if (s.h % factor != 0 || s.w % factor != 0 || s.h < factor || s.w < factor) {
        throw Error::config("input extents " + s.str() + " must be positive multiples of " +
                            std::to_string(factor) + " (minimum valid size " +
                            std::to_string(factor) + "x" + std::to_string(factor) + ")");
    }

    std::vector<Tensor> trunk;  // per level, pre-adaptation
    Tensor x = image;
    for (const auto& convs : block_convs_) {
        for (const ConvLayer& conv : convs) x = relu(apply_conv(conv, x));
        trunk.push_back(x);
        x = maxpool2d(x);
    }
    trunk.push_back(relu(apply_conv(global_, x)));  // deepest level: global context

    FeaturePyramid pyramid;
    pyramid.adapted.reserve(trunk.size());
    for (int level = 1; level <= cfg_.levels; ++level) {
        Tensor f = trunk[static_cast<std::size_t>(level - 1)];
        auto it = adaptations_.find(level);
        if (it != adaptations_.end()) {
            for (const ConvLayer& conv : it->second) f = relu(apply_conv(conv, f));
        }
        pyramid.adapted.push_back(f);
    }
    return pyramid;
}

Tensor predict_level(const Tensor& adapted, const PredictorHead& head) {
    return sigmoid(apply_conv(head.conv, adapted));
}

namespace {
const NetworkConfig& validated(const NetworkConfig& cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

SingleStreamNet::SingleStreamNet(const NetworkConfig& cfg, Rng& rng)
    : cfg_(validated(cfg)), backbone_(store_, "backbone", cfg_, rng) {
    for (int level : cfg_.inference_levels) {
        PredictorHead head;
        head.conv = make_conv_layer(store_, "head" + std::to_string(level),
                                    cfg_.adapted_channels(level), 1, 1, rng);
        heads_[level] = head;
    }
    bpdc_ = make_bpdc_weights(store_, cfg_.inference_levels, "bpdc");
}

FeaturePyramid SingleStreamNet::forward_backbone(const Tensor& image) const {
    return backbone_.forward(image);
}

std::vector<Tensor> SingleStreamNet::raw_predictions(const FeaturePyramid& pyramid) const {
    std::vector<Tensor> raw;
    raw.reserve(cfg_.inference_levels.size());
    for (int level : cfg_.inference_levels) {
        raw.push_back(predict_level(pyramid.level(level), heads_.at(level)));
    }
    return raw;
}

SideOutputSet SingleStreamNet::forward(const Tensor& image) const {
    const FeaturePyramid pyramid = forward_backbone(image);
    const std::vector<Tensor> raw = raw_predictions(pyramid);
    return combine_side_outputs(raw, cfg_.inference_levels, bpdc_, image.shape().h,
                                image.shape().w);
}

}  // namespace salfuse
