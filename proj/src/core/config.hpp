#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace salfuse {

struct TrunkBlock {
    int channels = 0;
    int convs = 2;
    int kernel = 3;
};

struct AdaptationLayer {
    int channels = 0;
    int kernel = 1;
};

enum class CueMode { rgb_only, depth_only, joint };
CueMode cue_mode_from_string(const std::string& s);
std::string cue_mode_to_string(CueMode mode);

enum class FusionVariantKind { f3b, f3c_no_branch, f3c, f3c_no_transition };
FusionVariantKind fusion_variant_from_string(const std::string& s);
std::string fusion_variant_to_string(FusionVariantKind v);

struct FusionVariant {
    bool residuals_on = true;
    bool branch_losses_on = true;
    bool transition_on = true;
    static FusionVariant from_kind(FusionVariantKind kind);
};

struct TrainConfig {
    int batch_size = 1;
    double momentum = 0.9;
    double lr_teacher = 0.0;
    double lr_distill = 0.0;
    double lr_fusion = 0.0;
    int epochs_teacher = 0;
    int epochs_distill = 0;
    int epochs_fusion = 0;
    std::string student_init = "random";   // random | teacher
    std::string teacher_input = "rgb";     // rgb | depth (single-stream input source)
};

struct DataConfig {
    int size = 32;
    int object_count = 3;
    CueMode cue_mode = CueMode::joint;
};

struct LossConfig {
    double epsilon = 1e-7;
    std::string collab_squash = "clamp";  // clamp | sigmoid
};

// Full network + pipeline configuration. The deepest level is the global
// context layer; trunk blocks cover levels 1..K-1 with a 2x2 maxpool between
// consecutive levels, so spatial extents halve level by level.
struct NetworkConfig {
    std::string name = "toy";
    int levels = 0;
    int input_size = 0;
    std::vector<TrunkBlock> blocks;                        // levels-1 entries
    int global_channels = 0;
    int global_kernel = 0;
    std::map<int, std::vector<AdaptationLayer>> adaptations;
    std::map<int, int> transitions;                        // level -> out channels
    std::vector<int> inference_levels;
    TrainConfig train;
    FusionVariantKind fusion_variant = FusionVariantKind::f3c;
    DataConfig data;
    LossConfig loss;
    double eval_beta2 = 0.3;

    int downsample_factor() const;            // 2^(levels-1)
    int level_extent(int level) const;        // input_size / 2^(level-1)
    int adapted_channels(int level) const;    // channels entering the predictor head
    void validate() const;
};

// Mutable JSON-backed view: presets and files parse into json, CLI overrides
// edit it, and the typed NetworkConfig is derived on demand.
class Config {
public:
    static Config preset(const std::string& name);         // "toy" | "table1"
    static Config from_file(const std::string& path);
    static Config from_json(nlohmann::json j);

    void set(const std::string& dotted_key, const std::string& value);
    NetworkConfig network() const;
    std::string canonical_text() const;     // sorted-key dump, stable across runs
    std::uint64_t hash() const;
    const nlohmann::json& raw_json() const { return json_; }

private:
    nlohmann::json json_;
};

nlohmann::json toy_preset_json();
nlohmann::json table1_preset_json();

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& text);

}  // namespace salfuse
