#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "data.hpp"
#include "oracles.hpp"

using namespace salfuse;
namespace fs = std::filesystem;

namespace {

SceneConfig scene(CueMode mode, int count = 3, int size = 32) {
    SceneConfig cfg;
    cfg.size = size;
    cfg.object_count = count;
    cfg.mode = mode;
    return cfg;
}

std::vector<std::uint8_t> gt_mask(const RgbdSample& s) {
    std::vector<std::uint8_t> out(s.gt.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.gt.values()[i] > 0.5 ? 1 : 0;
    return out;
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("generator: same seed twice is bit-identical, zero objects give empty gt") {
    const RgbdSample a = generate_synthetic_scene(1234, scene(CueMode::joint));
    const RgbdSample b = generate_synthetic_scene(1234, scene(CueMode::joint));
    CHECK(a.rgb.values() == b.rgb.values());
    CHECK(a.depth.values() == b.depth.values());
    CHECK(a.gt.values() == b.gt.values());
    CHECK(a.meta.descriptor == b.meta.descriptor);

    const RgbdSample empty = generate_synthetic_scene(9, scene(CueMode::joint, 0));
    for (double v : empty.gt.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(generate_synthetic_scene(1, scene(CueMode::joint, 5)), Error);
}

TEST_CASE("generator: gt is strictly binary and extents agree") {
    for (auto mode : {CueMode::rgb_only, CueMode::depth_only, CueMode::joint}) {
        const RgbdSample s = generate_synthetic_scene(777, scene(mode));
        CHECK(s.rgb.shape().h == 32);
        CHECK(s.depth.shape() == Shape{1, 1, 32, 32});
        CHECK(s.gt.shape() == Shape{1, 1, 32, 32});
        for (double v : s.gt.values()) CHECK((v == 0.0 || v == 1.0));
        for (double v : s.rgb.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("depth-only scenes: depth discriminator works, color is near chance") {
    double depth_iou_acc = 0.0;
    double color_iou_acc = 0.0;
    const int trials = 40;
    for (int i = 0; i < trials; ++i) {
        const RgbdSample s =
            generate_synthetic_scene(5000 + static_cast<std::uint64_t>(i),
                                     scene(CueMode::depth_only));
        depth_iou_acc += mask_iou(depth_cue_mask(s), gt_mask(s));
        color_iou_acc += mask_iou(color_cue_mask(s), gt_mask(s));
    }
    CHECK(depth_iou_acc / trials > 0.9);
    CHECK(color_iou_acc / trials < 0.1);  // essentially uncorrelated
}

TEST_CASE("joint scenes: neither cue alone suffices, their conjunction does") {
    double color_acc = 0.0, depth_acc = 0.0, and_acc = 0.0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
        const RgbdSample s = generate_synthetic_scene(9000 + static_cast<std::uint64_t>(i),
                                                      scene(CueMode::joint));
        const auto color = color_cue_mask(s);
        const auto depth = depth_cue_mask(s);
        std::vector<std::uint8_t> both(color.size());
        for (std::size_t k = 0; k < color.size(); ++k) both[k] = color[k] && depth[k];
        const auto gt = gt_mask(s);
        color_acc += mask_iou(color, gt);
        depth_acc += mask_iou(depth, gt);
        and_acc += mask_iou(both, gt);
    }
    CHECK(color_acc / trials < 0.6);
    CHECK(depth_acc / trials < 0.6);
    CHECK(and_acc / trials > 0.95);
}

TEST_CASE("rgb-only scenes have flat depth") {
    const RgbdSample s = generate_synthetic_scene(31, scene(CueMode::rgb_only));
    for (double v : s.depth.values()) CHECK(v == 0.5);
}

TEST_CASE("encode_depth: constants, ramps, channel identity") {
    Tensor flat = Tensor::full(Shape{1, 1, 4, 4}, 0.5);
    Tensor enc = encode_depth(flat, "t");
    for (int i = 0; i < 16; ++i) {
        CHECK(enc.values()[static_cast<std::size_t>(i)] == 0.5);
        CHECK(enc.values()[static_cast<std::size_t>(16 + i)] == 0.5);
        CHECK(enc.values()[static_cast<std::size_t>(32 + i)] == 0.0);
    }

    // linear ramp: constant nonzero gradient channel (1.0 after rescaling)
    Tensor ramp = Tensor::zeros(Shape{1, 1, 4, 4});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) ramp.values()[static_cast<std::size_t>(y) * 4 + x] = 0.1 * x;
    }
    Tensor enc_ramp = encode_depth(ramp, "t");
    for (int i = 0; i < 16; ++i) {
        CHECK(enc_ramp.values()[static_cast<std::size_t>(32 + i)] ==
              doctest::Approx(1.0).epsilon(1e-12));
    }

    // random maps: channel1 + channel2 = 1 everywhere, all channels in [0,1]
    Rng rng(71);
    Tensor noise = oracle::random_tensor(rng, Shape{1, 1, 6, 6}, 0, 1);
    Tensor enc_noise = encode_depth(noise, "t");
    for (int i = 0; i < 36; ++i) {
        const double c0 = enc_noise.values()[static_cast<std::size_t>(i)];
        const double c1 = enc_noise.values()[static_cast<std::size_t>(36 + i)];
        const double c2 = enc_noise.values()[static_cast<std::size_t>(72 + i)];
        CHECK(std::abs(c0 + c1 - 1.0) < 1e-15);
        CHECK(c2 >= 0.0);
        CHECK(c2 <= 1.0);
    }

    Tensor bad = Tensor::full(Shape{1, 1, 2, 2}, std::nan(""));
    try {
        encode_depth(bad, "sample-7");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
        CHECK(std::string(e.what()).find("sample-7") != std::string::npos);
    }
}

TEST_CASE("dataset: generated sets reload bit-identically") {
    const fs::path dir = temp_dir("salfuse_roundtrip_ds");
    SceneConfig sc = scene(CueMode::joint, 3, 16);
    Dataset ds = generate_dataset(4242, sc, 5, "train");
    save_dataset(ds, dir.string());

    const Dataset loaded = load_dataset(dir.string());
    REQUIRE(loaded.samples.size() == 5);
    CHECK(loaded.labeled);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(loaded.samples[i].id == ds.samples[i].id);
        CHECK(loaded.samples[i].rgb.values() == ds.samples[i].rgb.values());
        CHECK(loaded.samples[i].depth.values() == ds.samples[i].depth.values());
        CHECK(loaded.samples[i].gt.values() == ds.samples[i].gt.values());
    }
    fs::remove_all(dir);
}

TEST_CASE("dataset: orphan ids are a data error listing them") {
    const fs::path dir = temp_dir("salfuse_orphan_ds");
    Dataset ds = generate_dataset(11, scene(CueMode::joint, 2, 16), 2, "train");
    save_dataset(ds, dir.string());
    fs::remove(dir / "depth" / "000001.png");
    try {
        load_dataset(dir.string());
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
        CHECK(std::string(e.what()).find("000001") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("dataset: missing gt makes the set unlabeled but loadable") {
    const fs::path dir = temp_dir("salfuse_unlabeled_ds");
    Dataset ds = generate_dataset(12, scene(CueMode::joint, 2, 16), 3, "train");
    save_dataset(ds, dir.string());
    fs::remove_all(dir / "gt");
    const Dataset loaded = load_dataset(dir.string());
    CHECK_FALSE(loaded.labeled);
    for (const RgbdSample& s : loaded.samples) CHECK_FALSE(s.has_gt());

    // partial labels: still unlabeled as a whole, present masks kept
    save_dataset(ds, dir.string());
    fs::remove(dir / "gt" / "000000.png");
    const Dataset partial = load_dataset(dir.string());
    CHECK_FALSE(partial.labeled);
    CHECK_FALSE(partial.samples[0].has_gt());
    CHECK(partial.samples[1].has_gt());
    fs::remove_all(dir);
}

TEST_CASE("dataset: constant 16-bit depth normalizes to 0.5") {
    const fs::path dir = temp_dir("salfuse_flatdepth_ds");
    Dataset ds = generate_dataset(13, scene(CueMode::rgb_only, 1, 16), 1, "train");
    save_dataset(ds, dir.string());
    const Dataset loaded = load_dataset(dir.string());
    for (double v : loaded.samples[0].depth.values()) CHECK(v == 0.5);
    fs::remove_all(dir);
}

TEST_CASE("dataset: unreadable files raise a data error with the path") {
    const fs::path dir = temp_dir("salfuse_corrupt_ds");
    Dataset ds = generate_dataset(14, scene(CueMode::joint, 2, 16), 1, "train");
    save_dataset(ds, dir.string());
    std::ofstream(dir / "rgb" / "000000.png", std::ios::trunc) << "not a png";
    try {
        load_dataset(dir.string());
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
        CHECK(std::string(e.what()).find("000000.png") != std::string::npos);
    }
    fs::remove_all(dir);
}
