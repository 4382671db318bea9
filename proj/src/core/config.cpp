#include "config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace salfuse {

using nlohmann::json;

CueMode cue_mode_from_string(const std::string& s) {
    if (s == "rgb-only") return CueMode::rgb_only;
    if (s == "depth-only") return CueMode::depth_only;
    if (s == "joint") return CueMode::joint;
    throw Error::config("unknown cue mode '" + s + "' (rgb-only | depth-only | joint)");
}

std::string cue_mode_to_string(CueMode mode) {
    switch (mode) {
        case CueMode::rgb_only: return "rgb-only";
        case CueMode::depth_only: return "depth-only";
        case CueMode::joint: return "joint";
    }
    return "joint";
}

FusionVariantKind fusion_variant_from_string(const std::string& s) {
    if (s == "f3b") return FusionVariantKind::f3b;
    if (s == "f3c_no_branch") return FusionVariantKind::f3c_no_branch;
    if (s == "f3c") return FusionVariantKind::f3c;
    if (s == "f3c_no_transition") return FusionVariantKind::f3c_no_transition;
    throw Error::config("unknown fusion variant '" + s +
                        "' (f3b | f3c_no_branch | f3c | f3c_no_transition)");
}

std::string fusion_variant_to_string(FusionVariantKind v) {
    switch (v) {
        case FusionVariantKind::f3b: return "f3b";
        case FusionVariantKind::f3c_no_branch: return "f3c_no_branch";
        case FusionVariantKind::f3c: return "f3c";
        case FusionVariantKind::f3c_no_transition: return "f3c_no_transition";
    }
    return "f3c";
}

FusionVariant FusionVariant::from_kind(FusionVariantKind kind) {
    FusionVariant v;
    switch (kind) {
        case FusionVariantKind::f3b:
            v.residuals_on = false;
            v.branch_losses_on = false;
            v.transition_on = true;
            break;
        case FusionVariantKind::f3c_no_branch:
            v.residuals_on = true;
            v.branch_losses_on = false;
            v.transition_on = true;
            break;
        case FusionVariantKind::f3c:
            break;
        case FusionVariantKind::f3c_no_transition:
            v.transition_on = false;
            break;
    }
    return v;
}

int NetworkConfig::downsample_factor() const { return 1 << (levels - 1); }

int NetworkConfig::level_extent(int level) const {
    return input_size >> (level - 1);
}

int NetworkConfig::adapted_channels(int level) const {
    auto it = adaptations.find(level);
    if (it != adaptations.end() && !it->second.empty()) return it->second.back().channels;
    if (level == levels) return global_channels;
    return blocks.at(static_cast<std::size_t>(level - 1)).channels;
}

void NetworkConfig::validate() const {
    if (levels < 2) throw Error::config("levels must be >= 2, got " + std::to_string(levels));
    if (static_cast<int>(blocks.size()) != levels - 1) {
        throw Error::config("expected " + std::to_string(levels - 1) + " trunk blocks for " +
                            std::to_string(levels) + " levels, got " +
                            std::to_string(blocks.size()));
    }
    const int factor = downsample_factor();
    if (input_size <= 0 || input_size % factor != 0) {
        throw Error::config("input_size " + std::to_string(input_size) +
                            " must be a positive multiple of " + std::to_string(factor) +
                            " (minimum valid size " + std::to_string(factor) + ")");
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const TrunkBlock& b = blocks[i];
        if (b.channels < 1 || b.convs < 1) {
            throw Error::config("trunk block " + std::to_string(i + 1) + " has invalid spec");
        }
        if (b.kernel < 1 || b.kernel % 2 == 0) {
            throw Error::config("trunk block " + std::to_string(i + 1) +
                                " kernel must be odd for size-preserving padding");
        }
    }
    if (global_channels < 1) throw Error::config("global_context channels must be >= 1");
    if (global_kernel < 1 || global_kernel % 2 == 0) {
        throw Error::config("global_context kernel must be odd for size-preserving padding");
    }
    for (const auto& [level, layers] : adaptations) {
        if (level < 1 || level >= levels) {
            throw Error::config("adaptation level " + std::to_string(level) +
                                " out of range (the deepest level has no adaptation)");
        }
        if (layers.empty() || layers.size() > 2) {
            throw Error::config("level " + std::to_string(level) +
                                " must have 1 or 2 adaptation layers");
        }
        for (const AdaptationLayer& a : layers) {
            if (a.channels < 1) throw Error::config("adaptation channels must be >= 1");
            if (a.kernel < 1 || a.kernel % 2 == 0) {
                throw Error::config("adaptation kernels must be odd");
            }
        }
    }
    if (inference_levels.size() < 2) {
        throw Error::config("at least 2 inference levels are required");
    }
    for (std::size_t i = 0; i < inference_levels.size(); ++i) {
        const int lvl = inference_levels[i];
        if (lvl <= 1) throw Error::config("level 1 never takes part in inference");
        if (lvl > levels) {
            throw Error::config("inference level " + std::to_string(lvl) + " exceeds level count");
        }
        if (i > 0 && inference_levels[i] != inference_levels[i - 1] + 1) {
            throw Error::config("inference levels must be a contiguous ascending range");
        }
    }
    if (inference_levels.back() != levels) {
        throw Error::config("the deepest level must be an inference level");
    }
    for (const auto& [level, channels] : transitions) {
        if (channels < 1) throw Error::config("transition channels must be >= 1");
        if (level <= inference_levels.front() || level > levels) {
            throw Error::config("transition on level " + std::to_string(level) +
                                " is never consumed");
        }
    }
    if (train.batch_size < 1) throw Error::config("batch_size must be >= 1");
    if (train.momentum < 0.0 || train.momentum >= 1.0) {
        throw Error::config("momentum must be in [0, 1)");
    }
    if (train.student_init != "random" && train.student_init != "teacher") {
        throw Error::config("train.student_init must be 'random' or 'teacher'");
    }
    if (train.teacher_input != "rgb" && train.teacher_input != "depth") {
        throw Error::config("train.teacher_input must be 'rgb' or 'depth'");
    }
    if (loss.epsilon <= 0.0 || loss.epsilon >= 0.5) {
        throw Error::config("loss.epsilon must be in (0, 0.5)");
    }
    if (loss.collab_squash != "clamp" && loss.collab_squash != "sigmoid") {
        throw Error::config("loss.collab_squash must be 'clamp' or 'sigmoid'");
    }
    if (data.size <= 0 || data.size % factor != 0) {
        throw Error::config("data.size " + std::to_string(data.size) +
                            " must be a positive multiple of " + std::to_string(factor));
    }
    if (data.object_count < 0 || data.object_count > 3) {
        throw Error::config("data.object_count must be in [0, 3]");
    }
    if (eval_beta2 < 0.0) throw Error::config("eval.beta2 must be >= 0");
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

json toy_preset_json() {
    return json{
        {"name", "toy"},
        {"levels", 4},
        {"input_size", 32},
        {"blocks",
         {{{"channels", 8}, {"convs", 2}, {"kernel", 3}},
          {{"channels", 12}, {"convs", 2}, {"kernel", 3}},
          {{"channels", 16}, {"convs", 2}, {"kernel", 3}}}},
        {"global_context", {{"channels", 24}, {"kernel", 5}}},
        {"adaptations",
         {{"2", {{{"channels", 12}, {"kernel", 3}}}},
          {"3", {{{"channels", 16}, {"kernel", 3}}}}}},
        {"transitions", {{"3", 12}, {"4", 16}}},
        {"inference_levels", {2, 3, 4}},
        {"train",
         {{"batch_size", 1},
          {"momentum", 0.9},
          {"lr_teacher", 0.2},
          {"lr_distill", 0.01},
          {"lr_fusion", 0.1},
          {"epochs_teacher", 30},
          {"epochs_distill", 30},
          {"epochs_fusion", 15},
          {"student_init", "random"},
          {"teacher_input", "rgb"}}},
        {"fusion", {{"variant", "f3c"}}},
        {"data", {{"size", 32}, {"object_count", 3}, {"cue_mode", "joint"}}},
        {"loss", {{"epsilon", 1e-7}, {"collab_squash", "clamp"}}},
        {"eval", {{"beta2", 0.3}}},
    };
}

json table1_preset_json() {
    return json{
        {"name", "table1"},
        {"levels", 6},
        {"input_size", 224},
        {"blocks",
         {{{"channels", 64}, {"convs", 2}, {"kernel", 3}},
          {{"channels", 128}, {"convs", 2}, {"kernel", 3}},
          {{"channels", 256}, {"convs", 3}, {"kernel", 3}},
          {{"channels", 512}, {"convs", 3}, {"kernel", 3}},
          {{"channels", 512}, {"convs", 3}, {"kernel", 3}}}},
        {"global_context", {{"channels", 512}, {"kernel", 13}}},
        {"adaptations",
         {{"2", {{{"channels", 128}, {"kernel", 3}}, {{"channels", 128}, {"kernel", 3}}}},
          {"3", {{{"channels", 192}, {"kernel", 3}}, {{"channels", 192}, {"kernel", 3}}}},
          {"4", {{{"channels", 384}, {"kernel", 3}}, {{"channels", 384}, {"kernel", 3}}}},
          {"5", {{{"channels", 384}, {"kernel", 1}}}}}},
        {"transitions", {{"3", 128}, {"4", 256}, {"5", 384}, {"6", 384}}},
        {"inference_levels", {2, 3, 4, 5, 6}},
        {"train",
         {{"batch_size", 1},
          {"momentum", 0.9},
          {"lr_teacher", 1e-7},
          {"lr_distill", 1e-6},
          {"lr_fusion", 2e-9},
          {"epochs_teacher", 10},
          {"epochs_distill", 10},
          {"epochs_fusion", 10},
          {"student_init", "random"},
          {"teacher_input", "rgb"}}},
        {"fusion", {{"variant", "f3c"}}},
        {"data", {{"size", 224}, {"object_count", 3}, {"cue_mode", "joint"}}},
        {"loss", {{"epsilon", 1e-7}, {"collab_squash", "clamp"}}},
        {"eval", {{"beta2", 0.3}}},
    };
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

const json& require_key(const json& j, const std::string& key, const std::string& context) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw Error::config("missing config key '" + key + "'" +
                            (context.empty() ? "" : " in " + context));
    }
    return *it;
}

int get_int(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require_key(j, key, ctx);
    if (!v.is_number_integer()) throw Error::config("config key '" + key + "' must be an integer");
    return v.get<int>();
}

double get_double(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require_key(j, key, ctx);
    if (!v.is_number()) throw Error::config("config key '" + key + "' must be a number");
    return v.get<double>();
}

std::string get_string(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require_key(j, key, ctx);
    if (!v.is_string()) throw Error::config("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

}  // namespace

Config Config::preset(const std::string& name) {
    if (name == "toy") return from_json(toy_preset_json());
    if (name == "table1") return from_json(table1_preset_json());
    throw Error::config("unknown preset '" + name + "' (toy | table1)");
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error::config("malformed config file " + path + ": " + e.what());
    }
    return from_json(std::move(j));
}

Config Config::from_json(json j) {
    Config cfg;
    cfg.json_ = std::move(j);
    cfg.network().validate();
    return cfg;
}

void Config::set(const std::string& dotted_key, const std::string& value) {
    const json before = json_;
    std::vector<std::string> parts;
    std::stringstream ss(dotted_key);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!part.empty()) parts.push_back(part);
    }
    if (parts.empty()) throw Error::usage("empty config key");

    try {
        json* cursor = &json_;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            if (!cursor->is_object()) {
                throw Error::config("config key path '" + dotted_key + "' crosses a non-object");
            }
            cursor = &(*cursor)[parts[i]];
        }
        if (!cursor->is_object()) {
            throw Error::config("config key path '" + dotted_key + "' crosses a non-object");
        }

        // Typed parse: bool, integer, float, else string.
        json parsed;
        if (value == "true") {
            parsed = true;
        } else if (value == "false") {
            parsed = false;
        } else {
            char* end = nullptr;
            const long long as_int = std::strtoll(value.c_str(), &end, 10);
            if (end && *end == '\0' && !value.empty()) {
                parsed = as_int;
            } else {
                end = nullptr;
                const double as_double = std::strtod(value.c_str(), &end);
                if (end && *end == '\0' && !value.empty()) {
                    parsed = as_double;
                } else {
                    parsed = value;
                }
            }
        }
        (*cursor)[parts.back()] = parsed;
        network().validate();
    } catch (...) {
        json_ = before;  // failed overrides leave the config untouched
        throw;
    }
}

NetworkConfig Config::network() const {
    const json& j = json_;
    NetworkConfig n;
    n.name = j.contains("name") ? get_string(j, "name", "") : "unnamed";
    n.levels = get_int(j, "levels", "");
    n.input_size = get_int(j, "input_size", "");

    const json& blocks = require_key(j, "blocks", "");
    if (!blocks.is_array()) throw Error::config("'blocks' must be an array");
    for (const json& b : blocks) {
        TrunkBlock tb;
        tb.channels = get_int(b, "channels", "blocks");
        tb.convs = b.contains("convs") ? get_int(b, "convs", "blocks") : 2;
        tb.kernel = b.contains("kernel") ? get_int(b, "kernel", "blocks") : 3;
        n.blocks.push_back(tb);
    }

    const json& gc = require_key(j, "global_context", "");
    n.global_channels = get_int(gc, "channels", "global_context");
    n.global_kernel = get_int(gc, "kernel", "global_context");

    if (j.contains("adaptations")) {
        for (const auto& [key, layers] : j.at("adaptations").items()) {
            const int level = std::atoi(key.c_str());
            if (level <= 0) throw Error::config("adaptation level key '" + key + "' is not a level");
            std::vector<AdaptationLayer> spec;
            for (const json& a : layers) {
                AdaptationLayer layer;
                layer.channels = get_int(a, "channels", "adaptations");
                layer.kernel = a.contains("kernel") ? get_int(a, "kernel", "adaptations") : 1;
                spec.push_back(layer);
            }
            n.adaptations[level] = std::move(spec);
        }
    }
    if (j.contains("transitions")) {
        for (const auto& [key, channels] : j.at("transitions").items()) {
            const int level = std::atoi(key.c_str());
            if (level <= 0) throw Error::config("transition level key '" + key + "' is not a level");
            if (!channels.is_number_integer()) {
                throw Error::config("transition channels must be an integer");
            }
            n.transitions[level] = channels.get<int>();
        }
    }

    const json& inf = require_key(j, "inference_levels", "");
    if (!inf.is_array()) throw Error::config("'inference_levels' must be an array");
    for (const json& v : inf) n.inference_levels.push_back(v.get<int>());

    const json& tr = require_key(j, "train", "");
    n.train.batch_size = get_int(tr, "batch_size", "train");
    n.train.momentum = get_double(tr, "momentum", "train");
    n.train.lr_teacher = get_double(tr, "lr_teacher", "train");
    n.train.lr_distill = get_double(tr, "lr_distill", "train");
    n.train.lr_fusion = get_double(tr, "lr_fusion", "train");
    n.train.epochs_teacher = get_int(tr, "epochs_teacher", "train");
    n.train.epochs_distill = get_int(tr, "epochs_distill", "train");
    n.train.epochs_fusion = get_int(tr, "epochs_fusion", "train");
    n.train.student_init = get_string(tr, "student_init", "train");
    n.train.teacher_input = get_string(tr, "teacher_input", "train");

    n.fusion_variant =
        fusion_variant_from_string(get_string(require_key(j, "fusion", ""), "variant", "fusion"));

    const json& dc = require_key(j, "data", "");
    n.data.size = get_int(dc, "size", "data");
    n.data.object_count = get_int(dc, "object_count", "data");
    n.data.cue_mode = cue_mode_from_string(get_string(dc, "cue_mode", "data"));

    const json& lc = require_key(j, "loss", "");
    n.loss.epsilon = get_double(lc, "epsilon", "loss");
    n.loss.collab_squash = get_string(lc, "collab_squash", "loss");

    n.eval_beta2 = get_double(require_key(j, "eval", ""), "beta2", "eval");
    return n;
}

std::string Config::canonical_text() const { return json_.dump(); }

std::uint64_t Config::hash() const { return fnv1a64(canonical_text()); }

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& text) { return fnv1a64(text.data(), text.size()); }

}  // namespace salfuse
