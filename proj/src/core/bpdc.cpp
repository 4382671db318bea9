#include "bpdc.hpp"

namespace salfuse {

BpdcWeights make_bpdc_weights(ParameterStore& store, const std::vector<int>& levels,
                              const std::string& prefix) {
    if (levels.size() < 2) {
        throw Error::config("BPDC needs at least 2 inference levels, got " +
                            std::to_string(levels.size()));
    }
    BpdcWeights w;
    w.levels = levels;
    const std::size_t count = levels.size();
    const Shape scalar_shape{1, 1, 1, 1};

    for (std::size_t i = 0; i < count; ++i) {
        Parameter* self = store.create(prefix + ".self" + std::to_string(levels[i]), scalar_shape);
        const std::size_t deeper = count - 1 - i;
        // uniform mean over {own prediction} + all deeper combined side-outs
        const double init = 1.0 / static_cast<double>(1 + deeper);
        self->tensor.values()[0] = init;
        w.self_w.push_back(self);

        std::vector<Parameter*> pairs;
        for (std::size_t k = i + 1; k < count; ++k) {
            Parameter* p = store.create(prefix + ".pair" + std::to_string(levels[i]) + "_" +
                                            std::to_string(levels[k]),
                                        scalar_shape);
            p->tensor.values()[0] = init;
            pairs.push_back(p);
        }
        w.pair_w.push_back(std::move(pairs));

        Parameter* collab =
            store.create(prefix + ".collab" + std::to_string(levels[i]), scalar_shape);
        collab->tensor.values()[0] = 1.0 / static_cast<double>(count);
        w.collab_w.push_back(collab);
    }
    return w;
}

SideOutputSet combine_side_outputs(const std::vector<Tensor>& raw_native,
                                   const std::vector<int>& levels,
                                   const BpdcWeights& weights, int target_h, int target_w) {
    if (levels.size() < 2) {
        throw Error::config("combine_side_outputs needs at least 2 levels, got " +
                            std::to_string(levels.size()));
    }
    if (raw_native.size() != levels.size() || weights.levels != levels) {
        throw Error::config("combine_side_outputs: level bookkeeping mismatch");
    }

    SideOutputSet outs;
    outs.levels = levels;
    outs.raw.reserve(levels.size());
    for (const Tensor& p : raw_native) {
        const Shape s = p.shape();
        if (s.c != 1) {
            throw Error::config("side-output predictions must be single-channel, got " + s.str());
        }
        if (target_h % s.h != 0 || target_w % s.w != 0 ||
            target_h / s.h != target_w / s.w) {
            throw Error::config("prediction extent " + s.str() +
                                " does not upsample integrally to " + std::to_string(target_h) +
                                "x" + std::to_string(target_w));
        }
        outs.raw.push_back(upsample_bilinear(p, target_h / s.h));
    }

    const std::size_t count = levels.size();
    outs.combined.resize(count);
    outs.combined[count - 1] = outs.raw[count - 1];  // Eq. base case: no weight at the top
    for (std::size_t i = count - 1; i-- > 0;) {
        Tensor acc = scale(outs.raw[i], weights.self_w[i]->tensor);
        for (std::size_t k = i + 1; k < count; ++k) {
            acc = add(acc, scale(outs.combined[k], weights.pair(i, k)->tensor));
        }
        outs.combined[i] = acc;
    }
    return outs;
}

SquashMode squash_mode_from_string(const std::string& s) {
    if (s == "clamp") return SquashMode::clamp;
    if (s == "sigmoid") return SquashMode::sigmoid;
    throw Error::config("unknown squash mode '" + s + "' (clamp | sigmoid)");
}

Tensor collaborative_combine(const SideOutputSet& outs, const BpdcWeights& weights,
                             SquashMode squash, double epsilon) {
    if (outs.combined.empty()) {
        throw Error::config("collaborative_combine: empty side-output set");
    }
    if (outs.levels != weights.levels) {
        throw Error::config("collaborative_combine: level bookkeeping mismatch");
    }
    Tensor acc = scale(outs.combined[0], weights.collab_w[0]->tensor);
    for (std::size_t i = 1; i < outs.combined.size(); ++i) {
        acc = add(acc, scale(outs.combined[i], weights.collab_w[i]->tensor));
    }
    if (squash == SquashMode::sigmoid) return sigmoid(acc);
    return clamp(acc, epsilon, 1.0 - epsilon);
}

}  // namespace salfuse
