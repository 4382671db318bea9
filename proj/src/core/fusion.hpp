#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "checkpoint.hpp"
#include "data.hpp"
#include "distill.hpp"

namespace salfuse {

// Cross-modal residual selector: a 1x1 conv mapping the paired modality's
// features to the host modality's channel count.
struct ResidualSelector {
    ConvLayer conv;
};

// Per-level fusion unit: two residual selectors, optional branch heads, the
// joint predictor, and (for non-top levels) the transition that selects the
// deeper block's fused community for this level.
struct CaFuseBlock {
    int level = 0;
    FusionVariant flags;
    ResidualSelector select_d2r;  // valid only when residuals_on
    ResidualSelector select_r2d;
    ConvLayer branch_r;           // valid only when branch_losses_on
    ConvLayer branch_d;
    ConvLayer joint;
    ConvLayer transition;         // valid only when transition_on and level < K
    bool has_transition = false;
};

struct CaFuseOut {
    Tensor fused;         // concatenated community at this level's resolution
    Tensor joint_raw;     // joint prediction, native resolution
    Tensor branch_r_raw;  // valid only when branch_losses_on
    Tensor branch_d_raw;
};

// deeper_fused is the raw fused community of the next deeper block (half
// resolution) or an invalid tensor at the deepest level; the block's own
// transition selects it, then fixed bilinear upsampling aligns it.
CaFuseOut ca_fuse_forward(const Tensor& f_r, const Tensor& f_d, const Tensor& deeper_fused,
                          const CaFuseBlock& block);

struct FusionForward {
    SideOutputSet fused;                      // BPDC over joint predictions
    std::map<int, Tensor> branch_r;           // full resolution, when present
    std::map<int, Tensor> branch_d;
};

// Two identically structured backbones + top-down CA-Fuse stack + fused BPDC.
class FusionNet {
public:
    FusionNet(const NetworkConfig& cfg, Rng& rng);

    const NetworkConfig& config() const { return cfg_; }
    const FusionVariant& variant() const { return variant_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const BpdcWeights& bpdc() const { return bpdc_; }
    const CaFuseBlock& block(int level) const { return blocks_.at(level); }

    FusionForward forward(const Tensor& rgb, const Tensor& depth_encoding) const;

    // Channel count of the fused community at a level (after concatenation).
    int fused_channels(int level) const;

private:
    NetworkConfig cfg_;
    FusionVariant variant_;
    ParameterStore store_;
    Backbone rgb_backbone_;
    Backbone depth_backbone_;
    std::map<int, CaFuseBlock> blocks_;
    BpdcWeights bpdc_;
};

// Final joint objective: per-level branch and joint cross-entropies plus the
// collaborative term; branch families are omitted for variants without
// branch losses.
Tensor final_loss(const FusionForward& fwd, const Tensor& gt, const BpdcWeights& weights,
                  const FusionVariant& variant, const LossConfig& loss_cfg,
                  std::vector<std::pair<std::string, double>>* terms = nullptr);

enum class FusionInit { rd_a, rd_b, rd_c };
FusionInit fusion_init_from_string(const std::string& s);
std::string fusion_init_to_string(FusionInit init);

TrainOutcome train_fusion(const Dataset& dataset, const NetworkConfig& cfg, FusionInit init,
                          const Checkpoint* teacher, const Checkpoint* student,
                          std::uint64_t seed, std::uint64_t config_hash);

// Saliency readout of the fusion network: shallowest fused combined side-out.
Tensor predict_saliency_fusion(const FusionNet& net, const RgbdSample& sample);

}  // namespace salfuse
