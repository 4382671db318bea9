#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "tensor.hpp"

namespace salfuse {

// Learnable scalar weights of the backward prediction dense-connection: one
// self weight per inference level, one pair weight per (shallow, deep) level
// pair, and one collaborative weight per level for the joint combination.
// Initialization makes every combined side-out start as the uniform mean of
// its contributors.
struct BpdcWeights {
    std::vector<int> levels;  // inference levels, ascending (shallow -> deep)
    std::vector<Parameter*> self_w;
    std::vector<std::vector<Parameter*>> pair_w;  // pair_w[i][j]: weight of level
                                                  // levels[i+1+j]'s side-out in level levels[i]
    std::vector<Parameter*> collab_w;

    Parameter* pair(std::size_t shallow_idx, std::size_t deep_idx) const {
        return pair_w[shallow_idx][deep_idx - shallow_idx - 1];
    }
};

BpdcWeights make_bpdc_weights(ParameterStore& store, const std::vector<int>& levels,
                              const std::string& prefix);

// Per-level raw predictions and their dense top-down combinations, everything
// upsampled to one common resolution. combined.back() aliases raw.back().
struct SideOutputSet {
    std::vector<int> levels;
    std::vector<Tensor> raw;       // at the common resolution
    std::vector<Tensor> combined;  // same resolution
};

// raw_native[i] is the level levels[i] prediction at its native resolution;
// each is upsampled by target_extent/height and then combined top-down:
//   combined[last] = raw[last]
//   combined[i]    = self_w[i]*raw[i] + sum_k pair_w[i][k]*combined[k]
SideOutputSet combine_side_outputs(const std::vector<Tensor>& raw_native,
                                   const std::vector<int>& levels,
                                   const BpdcWeights& weights, int target_h, int target_w);

enum class SquashMode { clamp, sigmoid };
SquashMode squash_mode_from_string(const std::string& s);

// Weighted sum of all combined side-outs, squashed into (0,1) for loss/eval.
Tensor collaborative_combine(const SideOutputSet& outs, const BpdcWeights& weights,
                             SquashMode squash, double epsilon);

}  // namespace salfuse
