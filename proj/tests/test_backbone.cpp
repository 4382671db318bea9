#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "backbone.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "oracles.hpp"

using namespace salfuse;
using oracle::random_tensor;

namespace {

// Small 3-level network for fast unit runs.
NetworkConfig tiny_config() {
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
    return Config::from_json(j).network();
}

}  // namespace

TEST_CASE("toy preset: pyramid extents halve level by level") {
    const NetworkConfig cfg = Config::preset("toy").network();
    Rng rng(1);
    SingleStreamNet net(cfg, rng);
    Tensor image = random_tensor(rng, Shape{1, 3, 32, 32}, 0, 1);
    const FeaturePyramid pyr = net.forward_backbone(image);
    REQUIRE(pyr.adapted.size() == 4);
    int expected = 32;
    for (const Tensor& f : pyr.adapted) {
        CHECK(f.shape().h == expected);
        CHECK(f.shape().w == expected);
        expected /= 2;
    }
}

TEST_CASE("table1 preset declares the published layer parameters") {
    const NetworkConfig cfg = Config::preset("table1").network();
    CHECK(cfg.levels == 6);
    // adapted channels for levels 2..5
    CHECK(cfg.adapted_channels(2) == 128);
    CHECK(cfg.adapted_channels(3) == 192);
    CHECK(cfg.adapted_channels(4) == 384);
    CHECK(cfg.adapted_channels(5) == 384);
    // adaptation stacks: (128 3x3)x2, (192 3x3)x2, (384 3x3)x2, 384 1x1
    CHECK(cfg.adaptations.at(2).size() == 2);
    CHECK(cfg.adaptations.at(2)[0].kernel == 3);
    CHECK(cfg.adaptations.at(3).size() == 2);
    CHECK(cfg.adaptations.at(4).size() == 2);
    CHECK(cfg.adaptations.at(5).size() == 1);
    CHECK(cfg.adaptations.at(5)[0].channels == 384);
    CHECK(cfg.adaptations.at(5)[0].kernel == 1);
    CHECK(cfg.adaptations.count(6) == 0);  // deepest level has no adaptation
    // transitions 384, 384, 256, 128 at 1x1
    CHECK(cfg.transitions.at(6) == 384);
    CHECK(cfg.transitions.at(5) == 384);
    CHECK(cfg.transitions.at(4) == 256);
    CHECK(cfg.transitions.at(3) == 128);
    // global context: 512 channels, 13x13
    CHECK(cfg.global_channels == 512);
    CHECK(cfg.global_kernel == 13);
    // level 1 never takes part in inference
    for (int lvl : cfg.inference_levels) CHECK(lvl >= 2);
    // full-scale learning rates ship with the preset
    CHECK(cfg.train.lr_teacher == doctest::Approx(1e-7));
    CHECK(cfg.train.lr_distill == doctest::Approx(1e-6));
    CHECK(cfg.train.lr_fusion == doctest::Approx(2e-9));
}

TEST_CASE("committed preset files match the built-in presets") {
    for (const char* name : {"toy", "table1"}) {
        const std::string path = std::string(SALFUSE_SOURCE_DIR) + "/configs/" + name + ".json";
        REQUIRE(std::filesystem::exists(path));
        CHECK(Config::from_file(path).canonical_text() ==
              Config::preset(name).canonical_text());
    }
}

TEST_CASE("zero conv weights give an all-zero pyramid") {
    const NetworkConfig cfg = tiny_config();
    Rng rng(2);
    SingleStreamNet net(cfg, rng);
    for (Parameter* p : net.params().all()) {
        std::fill(p->tensor.values().begin(), p->tensor.values().end(), 0.0);
    }
    Tensor image = random_tensor(rng, Shape{1, 3, 16, 16}, 0, 1);
    const FeaturePyramid pyr = net.forward_backbone(image);
    for (const Tensor& f : pyr.adapted) {
        for (double v : f.values()) CHECK(v == 0.0);
    }
}

TEST_CASE("forward_backbone rejects wrong inputs with actionable messages") {
    const NetworkConfig cfg = tiny_config();
    Rng rng(3);
    SingleStreamNet net(cfg, rng);
    CHECK_THROWS_AS(net.forward_backbone(Tensor::zeros(Shape{1, 1, 16, 16})), Error);
    try {
        net.forward_backbone(Tensor::zeros(Shape{1, 3, 10, 10}));  // not divisible by 4
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        CHECK(std::string(e.what()).find("4") != std::string::npos);  // minimum valid size
    }
}

TEST_CASE("predict_level: constant 0.5 at zero weights, sigmoid composition") {
    Rng rng(4);
    Rng zrng(0);

    // zero weights, zero bias: constant 0.5 map
    ParameterStore zero_store;
    PredictorHead zero_head;
    zero_head.conv = make_conv_layer(zero_store, "h", 5, 1, 1, zrng);
    std::fill(zero_head.conv.weight->tensor.values().begin(),
              zero_head.conv.weight->tensor.values().end(), 0.0);
    Tensor feat = random_tensor(rng, Shape{1, 5, 4, 4}, -1, 1);
    Tensor p = predict_level(feat, zero_head);
    for (double v : p.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

    // one-channel input, weight 1, bias 0: sigmoid(x) elementwise
    ParameterStore id_store;
    PredictorHead id_head;
    id_head.conv = make_conv_layer(id_store, "h", 1, 1, 1, zrng);
    id_head.conv.weight->tensor.values() = {1.0};
    Tensor x = random_tensor(rng, Shape{1, 1, 3, 3}, -2, 2);
    Tensor sx = predict_level(x, id_head);
    Tensor expect = sigmoid(x);
    for (std::size_t i = 0; i < sx.values().size(); ++i) {
        CHECK(sx.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-15));
    }

    // random case: conv-then-sigmoid composition oracle
    ParameterStore r_store;
    PredictorHead r_head;
    Rng hrng(9);
    r_head.conv = make_conv_layer(r_store, "h", 5, 1, 1, hrng);
    Tensor composed = predict_level(feat, r_head);
    Tensor manual = sigmoid(conv2d(feat, r_head.conv.weight->tensor, r_head.conv.bias->tensor,
                                   1, 0));
    for (std::size_t i = 0; i < composed.values().size(); ++i) {
        CHECK(std::abs(composed.values()[i] - manual.values()[i]) < 1e-12);
    }

    // channel mismatch
    CHECK_THROWS_AS(predict_level(x, r_head), Error);
}

TEST_CASE("forward is deterministic given image and parameters") {
    const NetworkConfig cfg = tiny_config();
    Rng rng(5);
    SingleStreamNet net(cfg, rng);
    Tensor image = random_tensor(rng, Shape{1, 3, 16, 16}, 0, 1);
    const SideOutputSet a = net.forward(image);
    const SideOutputSet b = net.forward(image);
    for (std::size_t i = 0; i < a.combined.size(); ++i) {
        CHECK(a.combined[i].values() == b.combined[i].values());
    }
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit-exactly") {
    const NetworkConfig cfg = tiny_config();
    Rng rng(6);
    SingleStreamNet net(cfg, rng);
    Tensor image = random_tensor(rng, Shape{1, 3, 16, 16}, 0, 1);
    const SideOutputSet before = net.forward(image);

    const std::string path =
        (std::filesystem::temp_directory_path() / "salfuse_test_roundtrip.ckpt").string();
    save_checkpoint(snapshot_parameters(net.params(), 0xDEADBEEF), path);

    Rng rng2(999);  // different init, then overwritten by the checkpoint
    SingleStreamNet net2(cfg, rng2);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.config_hash == 0xDEADBEEF);
    apply_checkpoint(loaded, net2.params());
    const SideOutputSet after = net2.forward(image);
    for (std::size_t i = 0; i < before.combined.size(); ++i) {
        CHECK(before.combined[i].values() == after.combined[i].values());
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint mismatch reports an architecture diff") {
    const NetworkConfig cfg = tiny_config();
    Rng rng(7);
    SingleStreamNet net(cfg, rng);
    Checkpoint ckpt = snapshot_parameters(net.params(), 0);
    ckpt.entries.pop_back();                         // missing entry
    ckpt.entries[0].name = "backbone.bogus.weight";  // extra + missing pair
    Rng rng2(8);
    SingleStreamNet net2(cfg, rng2);
    try {
        apply_checkpoint(ckpt, net2.params());
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        const std::string msg = e.what();
        CHECK(msg.find("extra in checkpoint") != std::string::npos);
        CHECK(msg.find("missing from checkpoint") != std::string::npos);
    }
}

TEST_CASE("every parameter in a fresh network has a unique name") {
    const NetworkConfig cfg = Config::preset("toy").network();
    Rng rng(9);
    SingleStreamNet net(cfg, rng);  // ParameterStore::create enforces uniqueness
    CHECK(net.params().size() > 20);
}

TEST_CASE("config validation rejects malformed setups") {
    Config base = Config::preset("toy");
    CHECK_THROWS_AS(base.set("levels", "1"), Error);
    CHECK_THROWS_AS(base.set("input_size", "20"), Error);  // not a multiple of 8
    CHECK_THROWS_AS(base.set("global_context.kernel", "4"), Error);  // even kernel
    CHECK_THROWS_AS(base.set("train.momentum", "1.5"), Error);
    CHECK_THROWS_AS(base.set("fusion.variant", "quux"), Error);
    CHECK_THROWS_AS(Config::preset("nope"), Error);

    // inference levels must exclude level 1
    nlohmann::json j = Config::preset("toy").raw_json();
    j["inference_levels"] = {1, 2, 3, 4};
    CHECK_THROWS_AS(Config::from_json(j), Error);
}
