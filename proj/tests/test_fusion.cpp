#include <doctest.h>

#include <cmath>

#include "config.hpp"
#include "fusion.hpp"
#include "oracles.hpp"

using namespace salfuse;
using oracle::random_tensor;

namespace {

nlohmann::json micro_json() {
    nlohmann::json j = Config::preset("toy").raw_json();
    j["levels"] = 3;
    j["input_size"] = 16;
    j["blocks"] = {{{"channels", 4}, {"convs", 1}, {"kernel", 3}},
                   {{"channels", 6}, {"convs", 1}, {"kernel", 3}}};
    j["global_context"] = {{"channels", 8}, {"kernel", 3}};
    j["adaptations"] = {{"2", {{{"channels", 5}, {"kernel", 3}}}}};
    j["transitions"] = {{"3", 4}};
    j["inference_levels"] = {2, 3};
    j["data"] = {{"size", 16}, {"object_count", 3}, {"cue_mode", "joint"}};
    j["train"]["epochs_fusion"] = 6;
    j["train"]["lr_fusion"] = 0.1;
    return j;
}

NetworkConfig micro_config(const std::string& variant = "f3c") {
    nlohmann::json j = micro_json();
    j["fusion"]["variant"] = variant;
    return Config::from_json(j).network();
}

Dataset micro_dataset(int count, std::uint64_t seed, CueMode mode = CueMode::joint) {
    SceneConfig scene;
    scene.size = 16;
    scene.object_count = 3;
    scene.mode = mode;
    return generate_dataset(seed, scene, count, "train");
}

CaFuseBlock standalone_block(ParameterStore& store, Rng& rng, int channels,
                             const FusionVariant& flags, int trans_in = 0, int trans_out = 0) {
    CaFuseBlock block;
    block.level = 2;
    block.flags = flags;
    if (flags.residuals_on) {
        block.select_d2r.conv = make_conv_layer(store, "sel_d2r", channels, channels, 1, rng);
        block.select_r2d.conv = make_conv_layer(store, "sel_r2d", channels, channels, 1, rng);
    }
    if (flags.branch_losses_on) {
        block.branch_r = make_conv_layer(store, "branch_r", channels, 1, 1, rng);
        block.branch_d = make_conv_layer(store, "branch_d", channels, 1, 1, rng);
    }
    int joint_in = 2 * channels;
    if (flags.transition_on && trans_in > 0) {
        block.transition = make_conv_layer(store, "trans", trans_in, trans_out, 1, rng);
        block.has_transition = true;
        joint_in += trans_out;
    }
    block.joint = make_conv_layer(store, "joint", joint_in, 1, 1, rng);
    return block;
}

}  // namespace

TEST_CASE("ca_fuse_forward: zero selectors leave host features untouched") {
    ParameterStore store;
    Rng rng(61);
    CaFuseBlock block = standalone_block(store, rng, 4, FusionVariant{});
    std::fill(block.select_d2r.conv.weight->tensor.values().begin(),
              block.select_d2r.conv.weight->tensor.values().end(), 0.0);
    std::fill(block.select_r2d.conv.weight->tensor.values().begin(),
              block.select_r2d.conv.weight->tensor.values().end(), 0.0);

    Tensor f_r = random_tensor(rng, Shape{1, 4, 4, 4}, -1, 1);
    Tensor f_d = random_tensor(rng, Shape{1, 4, 4, 4}, -1, 1);
    const CaFuseOut out = ca_fuse_forward(f_r, f_d, Tensor(), block);
    // fused community is [enhanced_r | enhanced_d]; residual must be 0 exactly
    for (std::size_t i = 0; i < f_r.values().size(); ++i) {
        CHECK(out.fused.values()[i] == f_r.values()[i]);
        CHECK(out.fused.values()[f_r.values().size() + i] == f_d.values()[i]);
    }
}

TEST_CASE("ca_fuse_forward: symmetric selectors on equal inputs give equal branches") {
    ParameterStore store;
    Rng rng(62);
    CaFuseBlock block = standalone_block(store, rng, 4, FusionVariant{});
    // R1 = R2
    block.select_r2d.conv.weight->tensor.values() =
        block.select_d2r.conv.weight->tensor.values();
    block.select_r2d.conv.bias->tensor.values() = block.select_d2r.conv.bias->tensor.values();

    Tensor f = random_tensor(rng, Shape{1, 4, 4, 4}, -1, 1);
    const CaFuseOut out = ca_fuse_forward(f, f, Tensor(), block);
    const std::size_t half = f.values().size();
    for (std::size_t i = 0; i < half; ++i) {
        CHECK(out.fused.values()[i] == doctest::Approx(out.fused.values()[half + i]).epsilon(1e-15));
    }
}

TEST_CASE("ca_fuse_forward: residual equals the selector applied standalone") {
    ParameterStore store;
    Rng rng(63);
    CaFuseBlock block = standalone_block(store, rng, 4, FusionVariant{});
    Tensor f_r = random_tensor(rng, Shape{1, 4, 4, 4}, -1, 1);
    Tensor f_d = random_tensor(rng, Shape{1, 4, 4, 4}, -1, 1);
    const CaFuseOut out = ca_fuse_forward(f_r, f_d, Tensor(), block);

    Tensor residual = conv2d(f_d, block.select_d2r.conv.weight->tensor,
                             block.select_d2r.conv.bias->tensor, 1, 0);
    for (std::size_t i = 0; i < f_r.values().size(); ++i) {
        CHECK(std::abs((out.fused.values()[i] - f_r.values()[i]) - residual.values()[i]) <
              1e-12);
    }

    // spatial mismatch between modalities: no implicit alignment
    Tensor small = random_tensor(rng, Shape{1, 4, 2, 2}, -1, 1);
    CHECK_THROWS_AS(ca_fuse_forward(f_r, small, Tensor(), block), Error);
}

TEST_CASE("fusion_forward: f3b produces no branch predictions, f3c does") {
    Rng rng(64);
    const Dataset ds = micro_dataset(1, 900);
    const RgbdSample& s = ds.samples[0];
    const Tensor depth_enc = encode_depth(s.depth, s.id);

    FusionNet f3b(micro_config("f3b"), rng);
    const FusionForward out_b = f3b.forward(s.rgb, depth_enc);
    CHECK(out_b.branch_r.empty());
    CHECK(out_b.branch_d.empty());

    Rng rng2(64);
    FusionNet f3c(micro_config("f3c"), rng2);
    const FusionForward out_c = f3c.forward(s.rgb, depth_enc);
    CHECK(out_c.branch_r.size() == 2);
    CHECK(out_c.branch_d.size() == 2);
    for (const auto& [level, map] : out_c.branch_r) {
        CHECK(map.shape().h == 16);  // upsampled to full resolution
    }
}

TEST_CASE("fusion_forward: deterministic for a fixed parameter state") {
    Rng rng(65);
    FusionNet net(micro_config(), rng);
    const Dataset ds = micro_dataset(1, 901);
    const Tensor depth_enc = encode_depth(ds.samples[0].depth, ds.samples[0].id);
    const FusionForward a = net.forward(ds.samples[0].rgb, depth_enc);
    const FusionForward b = net.forward(ds.samples[0].rgb, depth_enc);
    for (std::size_t i = 0; i < a.fused.combined.size(); ++i) {
        CHECK(a.fused.combined[i].values() == b.fused.combined[i].values());
    }
}

TEST_CASE("zero selectors and transitions reduce to BPDC over plain concatenation") {
    const NetworkConfig cfg = micro_config("f3c");
    Rng rng(66);
    FusionNet net(cfg, rng);
    // zero the selector and transition weights (biases start at zero)
    for (Parameter* p : net.params().all()) {
        if (p->name.find("sel_") != std::string::npos ||
            p->name.find(".trans.") != std::string::npos) {
            std::fill(p->tensor.values().begin(), p->tensor.values().end(), 0.0);
        }
    }

    const Dataset ds = micro_dataset(1, 902);
    const RgbdSample& s = ds.samples[0];
    const Tensor depth_enc = encode_depth(s.depth, s.id);
    const FusionForward fwd = net.forward(s.rgb, depth_enc);

    // Manual composition oracle: rebuild both pyramids with standalone
    // backbones carrying the same weights, predict each level from
    // concat(F_R, F_D, zeros) with the fusion net's joint heads, then apply
    // the same (freshly initialized = identical) dense combination.
    ParameterStore probe_store;
    Rng dummy(0);
    Backbone rgb_bb(probe_store, "rgb.backbone", cfg, dummy);
    Backbone depth_bb(probe_store, "depth.backbone", cfg, dummy);
    for (Parameter* p : probe_store.all()) {
        p->tensor.values() = net.params().find(p->name)->tensor.values();
    }
    const FeaturePyramid pyr_r = rgb_bb.forward(s.rgb);
    const FeaturePyramid pyr_d = depth_bb.forward(depth_enc);

    std::vector<Tensor> manual_raw;
    for (int level : cfg.inference_levels) {
        std::vector<Tensor> parts{pyr_r.level(level), pyr_d.level(level)};
        if (level < cfg.inference_levels.back()) {
            const int trans_ch = cfg.transitions.at(level + 1);
            parts.push_back(Tensor::zeros(Shape{1, trans_ch, pyr_r.level(level).shape().h,
                                                pyr_r.level(level).shape().w}));
        }
        const CaFuseBlock& block = net.block(level);
        manual_raw.push_back(sigmoid(conv2d(concat_channels(parts),
                                            block.joint.weight->tensor,
                                            block.joint.bias->tensor, 1, 0)));
    }
    ParameterStore bpdc_store;
    BpdcWeights manual_bpdc = make_bpdc_weights(bpdc_store, cfg.inference_levels, "x");
    const SideOutputSet manual =
        combine_side_outputs(manual_raw, cfg.inference_levels, manual_bpdc, 16, 16);

    for (std::size_t i = 0; i < fwd.fused.combined.size(); ++i) {
        for (std::size_t px = 0; px < manual.combined[i].values().size(); ++px) {
            CHECK(std::abs(fwd.fused.combined[i].values()[px] -
                           manual.combined[i].values()[px]) < 1e-12);
        }
    }
}

TEST_CASE("final_loss: constant 0.5 predictions give (3N+1) ln 2 on the full variant") {
    ParameterStore store;
    const std::vector<int> levels{2, 3};
    BpdcWeights weights = make_bpdc_weights(store, levels, "bpdc");
    LossConfig loss_cfg;
    Rng rng(67);

    Tensor gt = Tensor::zeros(Shape{1, 1, 8, 8});
    for (double& v : gt.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;

    FusionForward fwd;
    fwd.fused.levels = levels;
    for (int lvl : levels) {
        Tensor m = Tensor::full(Shape{1, 1, 8, 8}, 0.5);
        fwd.fused.raw.push_back(m);
        fwd.fused.combined.push_back(m);
        fwd.branch_r[lvl] = Tensor::full(Shape{1, 1, 8, 8}, 0.5);
        fwd.branch_d[lvl] = Tensor::full(Shape{1, 1, 8, 8}, 0.5);
    }

    FusionVariant full;  // all flags on
    std::vector<std::pair<std::string, double>> terms;
    Tensor loss = final_loss(fwd, gt, weights, full, loss_cfg, &terms);
    CHECK(loss.item() == doctest::Approx(7.0 * std::log(2.0)).epsilon(1e-9));
    CHECK(terms.size() == 7);

    // variant lattice: full loss = no-branch loss + branch terms
    FusionVariant no_branch = FusionVariant::from_kind(FusionVariantKind::f3c_no_branch);
    Tensor partial = final_loss(fwd, gt, weights, no_branch, loss_cfg);
    double branch_terms = 0.0;
    for (const auto& [name, v] : terms) {
        if (name.find("branch") != std::string::npos) branch_terms += v;
    }
    CHECK(loss.item() == doctest::Approx(partial.item() + branch_terms).epsilon(1e-9));

    // branch losses enabled but predictions missing: usage error
    FusionForward broken = fwd;
    broken.branch_r.clear();
    CHECK_THROWS_AS(final_loss(broken, gt, weights, full, loss_cfg), Error);
}

TEST_CASE("final_loss gradient reaches both residual selectors") {
    Rng rng(68);
    FusionNet net(micro_config("f3c"), rng);
    // selectors start at zero; make them generic so the test is not special
    for (Parameter* p : net.params().all()) {
        if (p->name.find("sel_") != std::string::npos && p->name.ends_with("weight")) {
            for (double& v : p->tensor.values()) v = rng.uniform(-0.3, 0.3);
        }
    }
    const Dataset ds = micro_dataset(1, 903);
    const RgbdSample& s = ds.samples[0];
    const FusionForward fwd = net.forward(s.rgb, encode_depth(s.depth, s.id));
    net.params().zero_grad();
    backward(final_loss(fwd, s.gt, net.bpdc(), net.variant(), NetworkConfig{}.loss));

    for (Parameter* p : net.params().all()) {
        if (p->name.find("sel_") != std::string::npos && p->name.ends_with("weight")) {
            bool any = false;
            for (double g : p->tensor.grad()) any = any || g != 0.0;
            CHECK(any);
        }
    }
}

TEST_CASE("top-down order: block m consumes exactly block m+1's fused community") {
    // With 3 inference levels, perturbing the deepest block's joint head must
    // not change the shallowest block's *enhanced features*, only its joint
    // prediction through the transition path. Verified structurally: the
    // shallow block's transition input channels equal the deeper community.
    nlohmann::json j = micro_json();
    j["levels"] = 4;
    j["input_size"] = 16;
    j["blocks"] = {{{"channels", 4}, {"convs", 1}, {"kernel", 3}},
                   {{"channels", 6}, {"convs", 1}, {"kernel", 3}},
                   {{"channels", 6}, {"convs", 1}, {"kernel", 3}}};
    j["adaptations"] = {{"2", {{{"channels", 5}, {"kernel", 3}}}},
                        {"3", {{{"channels", 6}, {"kernel", 3}}}}};
    j["transitions"] = {{"3", 4}, {"4", 5}};
    j["inference_levels"] = {2, 3, 4};
    const NetworkConfig cfg = Config::from_json(j).network();
    Rng rng(69);
    FusionNet net(cfg, rng);
    CHECK(net.fused_channels(4) == 2 * 8);           // global channels, no deeper input
    CHECK(net.fused_channels(3) == 2 * 6 + 5);       // + transition from level 4
    CHECK(net.fused_channels(2) == 2 * 5 + 4);       // + transition from level 3
    CHECK(net.block(2).transition.weight->tensor.shape().c == net.fused_channels(3));
    CHECK(net.block(3).transition.weight->tensor.shape().c == net.fused_channels(4));
}

TEST_CASE("fusion variant needs transitions in config or construction fails") {
    nlohmann::json j = micro_json();
    j["transitions"] = nlohmann::json::object();
    j["fusion"]["variant"] = "f3c";
    const NetworkConfig cfg = Config::from_json(j).network();
    Rng rng(70);
    CHECK_THROWS_AS(FusionNet(cfg, rng), Error);

    // the no-transition variant accepts the same config
    j["fusion"]["variant"] = "f3c_no_transition";
    const NetworkConfig cfg2 = Config::from_json(j).network();
    Rng rng2(70);
    FusionNet net(cfg2, rng2);
    CHECK(net.fused_channels(2) == 2 * 5);
}

TEST_CASE("train_fusion: init modes, missing checkpoints, lr 0") {
    const NetworkConfig cfg = micro_config();
    const Dataset ds = micro_dataset(4, 904);

    CHECK_THROWS_AS(train_fusion(ds, cfg, FusionInit::rd_b, nullptr, nullptr, 1, 0), Error);
    CHECK_THROWS_AS(train_fusion(ds, cfg, FusionInit::rd_c, nullptr, nullptr, 1, 0), Error);

    NetworkConfig zero_lr = cfg;
    zero_lr.train.lr_fusion = 0.0;
    zero_lr.train.epochs_fusion = 1;
    const TrainOutcome outcome =
        train_fusion(ds, zero_lr, FusionInit::rd_a, nullptr, nullptr, 5, 0);
    Rng rng(5);
    Rng init_rng = rng.fork(1);
    FusionNet reference(zero_lr, init_rng);
    for (const auto& entry : outcome.checkpoint.entries) {
        CHECK(entry.values == reference.params().find(entry.name)->tensor.values());
    }

    // unlabeled data is a data error
    Dataset unlabeled = ds;
    unlabeled.samples[1].gt = Tensor();
    CHECK_THROWS_AS(train_fusion(unlabeled, cfg, FusionInit::rd_a, nullptr, nullptr, 1, 0),
                    Error);
}

TEST_CASE("train_fusion: rd-b and rd-c consume the stage checkpoints") {
    NetworkConfig cfg = micro_config();
    cfg.train.epochs_teacher = 4;
    cfg.train.epochs_distill = 4;
    cfg.train.epochs_fusion = 2;

    const Dataset teacher_ds = micro_dataset(6, 905, CueMode::rgb_only);
    const TrainOutcome teacher = train_teacher(teacher_ds, cfg, 51, 0);
    const Dataset pair_ds = micro_dataset(6, 906);
    const TrainOutcome student = distill_student(pair_ds, teacher.checkpoint, cfg, 52, 0);

    const TrainOutcome rd_b =
        train_fusion(pair_ds, cfg, FusionInit::rd_b, &teacher.checkpoint, nullptr, 53, 0);
    const TrainOutcome rd_c = train_fusion(pair_ds, cfg, FusionInit::rd_c, &teacher.checkpoint,
                                           &student.checkpoint, 53, 0);
    CHECK(rd_b.initial_loss != doctest::Approx(rd_c.initial_loss).epsilon(1e-12));
    CHECK(rd_b.final_loss < rd_b.initial_loss * 1.5);  // sanity: trained at all
}
