#include "fusion.hpp"

#include <algorithm>

namespace salfuse {

CaFuseOut ca_fuse_forward(const Tensor& f_r, const Tensor& f_d, const Tensor& deeper_fused,
                          const CaFuseBlock& block) {
    const Shape sr = f_r.shape();
    const Shape sd = f_d.shape();
    if (sr.h != sd.h || sr.w != sd.w || sr.n != sd.n) {
        throw Error::config("ca_fuse_forward: modality extents mismatch, rgb " + sr.str() +
                            " vs depth " + sd.str());
    }

    Tensor enhanced_r = f_r;
    Tensor enhanced_d = f_d;
    if (block.flags.residuals_on) {
        enhanced_r = add(f_r, apply_conv(block.select_d2r.conv, f_d));
        enhanced_d = add(f_d, apply_conv(block.select_r2d.conv, f_r));
    }

    std::vector<Tensor> community{enhanced_r, enhanced_d};
    if (deeper_fused.valid() && block.flags.transition_on) {
        if (!block.has_transition) {
            throw Error::config("ca_fuse_forward: level " + std::to_string(block.level) +
                                " received deeper features but has no transition layer");
        }
        community.push_back(upsample_bilinear(apply_conv(block.transition, deeper_fused), 2));
    }

    CaFuseOut out;
    out.fused = concat_channels(community);
    out.joint_raw = sigmoid(apply_conv(block.joint, out.fused));
    if (block.flags.branch_losses_on) {
        out.branch_r_raw = sigmoid(apply_conv(block.branch_r, enhanced_r));
        out.branch_d_raw = sigmoid(apply_conv(block.branch_d, enhanced_d));
    }
    return out;
}

namespace {
const NetworkConfig& validated_cfg(const NetworkConfig& cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

FusionNet::FusionNet(const NetworkConfig& cfg, Rng& rng)
    : cfg_(validated_cfg(cfg)),
      variant_(FusionVariant::from_kind(cfg.fusion_variant)),
      rgb_backbone_(store_, "rgb.backbone", cfg_, rng),
      depth_backbone_(store_, "depth.backbone", cfg_, rng) {
    const int top = cfg_.inference_levels.back();

    // Fused community widths, deep to shallow (the transition input size at
    // level m is the community width one level deeper).
    if (variant_.transition_on) {
        for (int level : cfg_.inference_levels) {
            if (level == top) continue;
            if (!cfg_.transitions.count(level + 1)) {
                throw Error::config("fusion variant needs a transition spec for level " +
                                    std::to_string(level + 1));
            }
        }
    }

    for (int level : cfg_.inference_levels) {
        const int ch = cfg_.adapted_channels(level);
        CaFuseBlock block;
        block.level = level;
        block.flags = variant_;
        const std::string prefix = "fuse.l" + std::to_string(level);
        if (variant_.residuals_on) {
            block.select_d2r.conv =
                make_conv_layer(store_, prefix + ".sel_d2r", ch, ch, 1, rng);
            block.select_r2d.conv =
                make_conv_layer(store_, prefix + ".sel_r2d", ch, ch, 1, rng);
            // residual starts at zero: the host features pass through unchanged
            std::fill(block.select_d2r.conv.weight->tensor.values().begin(),
                      block.select_d2r.conv.weight->tensor.values().end(), 0.0);
            std::fill(block.select_r2d.conv.weight->tensor.values().begin(),
                      block.select_r2d.conv.weight->tensor.values().end(), 0.0);
        }
        if (variant_.branch_losses_on) {
            block.branch_r = make_conv_layer(store_, prefix + ".branch_r", ch, 1, 1, rng);
            block.branch_d = make_conv_layer(store_, prefix + ".branch_d", ch, 1, 1, rng);
        }
        block.joint = make_conv_layer(store_, prefix + ".joint", fused_channels(level), 1, 1, rng);
        if (variant_.transition_on && level < top) {
            block.transition = make_conv_layer(store_, prefix + ".trans",
                                               fused_channels(level + 1),
                                               cfg_.transitions.at(level + 1), 1, rng);
            block.has_transition = true;
        }
        blocks_[level] = block;
    }
    bpdc_ = make_bpdc_weights(store_, cfg_.inference_levels, "fuse.bpdc");
}

int FusionNet::fused_channels(int level) const {
    const int top = cfg_.inference_levels.back();
    int ch = 2 * cfg_.adapted_channels(level);
    if (variant_.transition_on && level < top) {
        ch += cfg_.transitions.at(level + 1);
    }
    return ch;
}

FusionForward FusionNet::forward(const Tensor& rgb, const Tensor& depth_encoding) const {
    const FeaturePyramid pyr_r = rgb_backbone_.forward(rgb);
    const FeaturePyramid pyr_d = depth_backbone_.forward(depth_encoding);

    FusionForward fwd;
    const int top = cfg_.inference_levels.back();
    const int bottom = cfg_.inference_levels.front();
    const int full_h = rgb.shape().h;
    const int full_w = rgb.shape().w;

    std::map<int, Tensor> joint_raw;
    Tensor deeper;  // fused community of the next deeper block
    for (int level = top; level >= bottom; --level) {
        const CaFuseOut out =
            ca_fuse_forward(pyr_r.level(level), pyr_d.level(level), deeper, blocks_.at(level));
        joint_raw[level] = out.joint_raw;
        if (variant_.branch_losses_on) {
            const int factor = full_h / out.branch_r_raw.shape().h;
            fwd.branch_r[level] = upsample_bilinear(out.branch_r_raw, factor);
            fwd.branch_d[level] = upsample_bilinear(out.branch_d_raw, factor);
        }
        deeper = out.fused;
    }

    std::vector<Tensor> raw;
    raw.reserve(cfg_.inference_levels.size());
    for (int level : cfg_.inference_levels) raw.push_back(joint_raw.at(level));
    fwd.fused = combine_side_outputs(raw, cfg_.inference_levels, bpdc_, full_h, full_w);
    return fwd;
}

Tensor final_loss(const FusionForward& fwd, const Tensor& gt, const BpdcWeights& weights,
                  const FusionVariant& variant, const LossConfig& loss_cfg,
                  std::vector<std::pair<std::string, double>>* terms) {
    const double eps = loss_cfg.epsilon;
    Tensor total;
    auto add_term = [&](const std::string& name, Tensor term) {
        if (terms) terms->emplace_back(name, term.item());
        total = total.valid() ? add(total, term) : term;
    };

    for (std::size_t i = 0; i < fwd.fused.levels.size(); ++i) {
        const int level = fwd.fused.levels[i];
        if (variant.branch_losses_on) {
            auto r_it = fwd.branch_r.find(level);
            auto d_it = fwd.branch_d.find(level);
            if (r_it == fwd.branch_r.end() || d_it == fwd.branch_d.end()) {
                throw Error::usage("final_loss: branch losses enabled but level " +
                                   std::to_string(level) + " has no branch predictions");
            }
            add_term("l" + std::to_string(level) + ".branch_r",
                     cross_entropy(clamp(r_it->second, eps, 1.0 - eps), gt));
            add_term("l" + std::to_string(level) + ".branch_d",
                     cross_entropy(clamp(d_it->second, eps, 1.0 - eps), gt));
        }
        add_term("l" + std::to_string(level) + ".joint",
                 cross_entropy(clamp(fwd.fused.combined[i], eps, 1.0 - eps), gt));
    }
    add_term("collab",
             cross_entropy(collaborative_combine(
                               fwd.fused, weights,
                               squash_mode_from_string(loss_cfg.collab_squash), eps),
                           gt));
    return total;
}

FusionInit fusion_init_from_string(const std::string& s) {
    if (s == "rd-a") return FusionInit::rd_a;
    if (s == "rd-b") return FusionInit::rd_b;
    if (s == "rd-c") return FusionInit::rd_c;
    throw Error::config("unknown fusion init mode '" + s + "' (rd-a | rd-b | rd-c)");
}

std::string fusion_init_to_string(FusionInit init) {
    switch (init) {
        case FusionInit::rd_a: return "rd-a";
        case FusionInit::rd_b: return "rd-b";
        case FusionInit::rd_c: return "rd-c";
    }
    return "rd-a";
}

TrainOutcome train_fusion(const Dataset& dataset, const NetworkConfig& cfg, FusionInit init,
                          const Checkpoint* teacher, const Checkpoint* student,
                          std::uint64_t seed, std::uint64_t config_hash) {
    if (dataset.samples.empty()) throw Error::data("train_fusion: empty dataset");
    for (const RgbdSample& s : dataset.samples) {
        if (!s.has_gt()) {
            throw Error::data("train_fusion: sample " + s.id + " has no ground-truth mask");
        }
    }

    Rng rng(seed);
    Rng init_rng = rng.fork(1);
    FusionNet net(cfg, init_rng);

    switch (init) {
        case FusionInit::rd_a:
            break;
        case FusionInit::rd_b:
            if (teacher == nullptr) {
                throw Error::config(
                    "init mode rd-b requires a teacher checkpoint; run train-teacher first");
            }
            apply_checkpoint_mapped(*teacher, net.params(), "backbone.", "rgb.backbone.");
            apply_checkpoint_mapped(*teacher, net.params(), "backbone.", "depth.backbone.");
            break;
        case FusionInit::rd_c:
            if (teacher == nullptr) {
                throw Error::config(
                    "init mode rd-c requires a teacher checkpoint; run train-teacher first");
            }
            if (student == nullptr) {
                throw Error::config(
                    "init mode rd-c requires a distillation checkpoint; run distill first");
            }
            apply_checkpoint_mapped(*teacher, net.params(), "backbone.", "rgb.backbone.");
            apply_checkpoint_mapped(*student, net.params(), "backbone.", "depth.backbone.");
            break;
    }

    std::vector<Tensor> depth_inputs;
    depth_inputs.reserve(dataset.samples.size());
    for (const RgbdSample& s : dataset.samples) {
        depth_inputs.push_back(encode_depth(s.depth, s.id));
    }

    const int batch = cfg.train.batch_size;
    const double lr = cfg.train.lr_fusion;
    const FusionVariant variant = net.variant();

    auto dataset_mean_loss = [&]() {
        NoGradGuard guard;
        double acc = 0.0;
        for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
            const FusionForward fwd = net.forward(dataset.samples[i].rgb, depth_inputs[i]);
            acc += final_loss(fwd, dataset.samples[i].gt, net.bpdc(), variant, cfg.loss).item();
        }
        return acc / static_cast<double>(dataset.samples.size());
    };

    TrainOutcome outcome;
    outcome.initial_loss = dataset_mean_loss();

    std::vector<std::size_t> idx(dataset.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng order_rng = rng.fork(2);
    auto shuffle = [&]() {
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(order_rng.uniform_index(i));
            std::swap(idx[i - 1], idx[j]);
        }
    };

    int step = 0;
    auto params = net.params().all();
    for (int epoch = 0; epoch < cfg.train.epochs_fusion; ++epoch) {
        shuffle();
        for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch)) {
            const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(batch));
            const double inv_b = 1.0 / static_cast<double>(end - at);
            Tensor total;
            std::vector<std::pair<std::string, double>> terms;
            for (std::size_t k = at; k < end; ++k) {
                const RgbdSample& s = dataset.samples[idx[k]];
                const FusionForward fwd = net.forward(s.rgb, depth_inputs[idx[k]]);
                std::vector<std::pair<std::string, double>> sample_terms;
                Tensor loss = final_loss(fwd, s.gt, net.bpdc(), variant, cfg.loss, &sample_terms);
                for (auto& [name, value] : sample_terms) {
                    bool found = false;
                    for (auto& [tn, tv] : terms) {
                        if (tn == name) {
                            tv += value * inv_b;
                            found = true;
                        }
                    }
                    if (!found) terms.emplace_back(name, value * inv_b);
                }
                total = total.valid() ? add(total, loss) : loss;
            }
            total = scale(total, Tensor::scalar(inv_b));
            backward(total);
            sgd_step(params, lr, cfg.train.momentum);

            TrainStepReport report;
            report.stage = "fusion";
            report.step = step++;
            report.epoch = epoch;
            report.lr = lr;
            report.terms = std::move(terms);
            report.total = total.item();
            outcome.log.steps.push_back(std::move(report));
        }
    }

    outcome.final_loss = dataset_mean_loss();
    outcome.checkpoint = snapshot_parameters(net.params(), config_hash);
    return outcome;
}

Tensor predict_saliency_fusion(const FusionNet& net, const RgbdSample& sample) {
    NoGradGuard guard;
    const Tensor depth_enc = encode_depth(sample.depth, sample.id);
    const FusionForward fwd = net.forward(sample.rgb, depth_enc);
    Tensor map = Tensor::zeros(fwd.fused.combined.front().shape());
    const std::vector<double>& src = fwd.fused.combined.front().values();
    std::vector<double>& dst = map.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = std::min(1.0, std::max(0.0, src[i]));
    }
    return map;
}

}  // namespace salfuse
