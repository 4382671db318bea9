#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace salfuse {

struct SceneMeta {
    std::uint64_t seed = 0;
    std::string descriptor;
};

struct RgbdSample {
    std::string id;
    Tensor rgb;    // 1x3xHxW in [0,1]
    Tensor depth;  // 1x1xHxW in [0,1]
    Tensor gt;     // 1x1xHxW binary, valid() only when labeled
    SceneMeta meta;

    bool has_gt() const { return gt.valid(); }
};

struct Dataset {
    std::vector<RgbdSample> samples;
    std::string split = "train";
    bool labeled = false;

    std::size_t size() const { return samples.size(); }
};

struct SceneConfig {
    int size = 32;
    int object_count = 3;
    CueMode mode = CueMode::joint;
};

// Deterministic synthetic scene: 0-3 shapes over a textured background. The
// cue mode controls which modality carries the saliency signal:
//   rgb-only:   target distinguished by color, depth is flat
//   depth-only: target distinguished by depth, colors camouflaged
//   joint:      target has color AND depth cue; one distractor carries only
//               the color cue, another only the depth cue
// All values are pre-quantized to their storage grids (rgb 1/255, depth
// 1/65535) so a save/load round trip is bit-exact.
RgbdSample generate_synthetic_scene(std::uint64_t seed, const SceneConfig& cfg);

Dataset generate_dataset(std::uint64_t base_seed, const SceneConfig& cfg, int count,
                         const std::string& split);

// 3-channel geometry encoding standing in for HHA:
//   (normalized depth, 1 - normalized depth, depth gradient magnitude in [0,1])
Tensor encode_depth(const Tensor& depth, const std::string& sample_id);

// Directory layout: rgb/<id>.png, depth/<id>.png (8/16-bit gray),
// optional gt/<id>.png. Depth is min-max normalized per image; constant maps
// normalize to 0.5.
Dataset load_dataset(const std::string& root);

void save_dataset(const Dataset& dataset, const std::string& root);

// Fixed reference discriminators used to audit the generator's cue design.
std::vector<std::uint8_t> color_cue_mask(const RgbdSample& sample);
std::vector<std::uint8_t> depth_cue_mask(const RgbdSample& sample);
double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

}  // namespace salfuse
