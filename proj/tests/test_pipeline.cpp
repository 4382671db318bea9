#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "salfuse/salfuse.h"

#include "backbone.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "eval.hpp"
#include "pipeline.hpp"

using namespace salfuse;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Micro pipeline configuration for IO-level tests.
Config micro_config() {
    Config cfg = Config::preset("toy");
    cfg.set("levels", "3");
    cfg.set("input_size", "16");
    cfg.set("data.size", "16");
    nlohmann::json j = cfg.raw_json();
    j["blocks"] = {{{"channels", 4}, {"convs", 1}, {"kernel", 3}},
                   {{"channels", 6}, {"convs", 1}, {"kernel", 3}}};
    j["global_context"] = {{"channels", 8}, {"kernel", 3}};
    j["adaptations"] = {{"2", {{{"channels", 5}, {"kernel", 3}}}}};
    j["transitions"] = {{"3", 4}};
    j["inference_levels"] = {2, 3};
    j["train"]["epochs_teacher"] = 3;
    j["train"]["epochs_distill"] = 3;
    j["train"]["epochs_fusion"] = 2;
    return Config::from_json(j);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("generate: fixed seed gives an identical directory tree") {
    const Config cfg = micro_config();
    const fs::path a = temp_dir("salfuse_gen_a");
    const fs::path b = temp_dir("salfuse_gen_b");
    cmd_generate(cfg, a.string(), 4, 99);
    cmd_generate(cfg, b.string(), 4, 99);

    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), a);
        CHECK(read_file(entry.path()) == read_file(b / rel));
    }

    // count 0: empty but valid dataset
    const fs::path c = temp_dir("salfuse_gen_c");
    cmd_generate(cfg, c.string(), 0, 1);
    const Dataset empty = load_dataset(c.string());
    CHECK(empty.samples.empty());

    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove_all(c);
}

TEST_CASE("stage order violations produce actionable config errors") {
    const Config cfg = micro_config();
    const fs::path root = temp_dir("salfuse_stage_order");
    cmd_generate(cfg, (root / "data").string(), 2, 5);

    try {
        cmd_distill(cfg, (root / "data").string(), (root / "missing.ckpt").string(),
                    (root / "out.ckpt").string(), 1);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        CHECK(std::string(e.what()).find("train-teacher") != std::string::npos);
    }
    try {
        cmd_train_fusion(cfg, (root / "data").string(), "rd-c", "", "",
                         (root / "out.ckpt").string(), 1);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        CHECK(std::string(e.what()).find("train-teacher") != std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("predict: untrained heads give mid-gray maps; exported maps re-import exactly") {
    Config cfg = micro_config();
    const fs::path root = temp_dir("salfuse_predict");
    cmd_generate(cfg, (root / "data").string(), 3, 7);

    // an lr-0 "training" run materializes the initialization as a checkpoint
    Config zero = cfg;
    zero.set("train.lr_teacher", "0");
    zero.set("train.epochs_teacher", "1");
    cmd_train_teacher(zero, (root / "data").string(), (root / "init.ckpt").string(), 3);

    // zero out every parameter: heads then output sigmoid(0) = 0.5 exactly
    Checkpoint ckpt = load_checkpoint((root / "init.ckpt").string());
    for (auto& e : ckpt.entries) std::fill(e.values.begin(), e.values.end(), 0.0);
    // combination weights must stay at their means for a 0.5 output
    Rng rng(3);
    Rng fork = rng.fork(1);
    SingleStreamNet ref(zero.network(), fork);
    for (auto& e : ckpt.entries) {
        if (e.name.rfind("bpdc.", 0) == 0) {
            e.values = ref.params().find(e.name)->tensor.values();
        }
    }
    save_checkpoint(ckpt, (root / "zero.ckpt").string());

    cmd_predict(cfg, (root / "zero.ckpt").string(), (root / "data").string(),
                (root / "preds").string(), "teacher");
    for (int i = 0; i < 3; ++i) {
        const fs::path map = root / "preds" / ("00000" + std::to_string(i) + ".png");
        REQUIRE(fs::exists(map));
    }

    // quantization round trip: re-imported maps reproduce in-memory scores
    const EvalSummary from_disk =
        cmd_eval((root / "preds").string(), (root / "data" / "gt").string(), 0.3,
                 (root / "report.json").string());
    const Dataset data = load_dataset((root / "data").string());
    std::map<std::string, Tensor> gts;
    std::map<std::string, Tensor> preds;
    for (const RgbdSample& s : data.samples) {
        gts[s.id] = s.gt;
        preds[s.id] = Tensor::full(Shape{1, 1, 16, 16}, 0.5);
    }
    const EvalReport in_memory = evaluate(preds, gts, 0.3);
    CHECK(std::abs(from_disk.mean_max_f - in_memory.mean_max_f) < 1e-12);
    CHECK(std::abs(from_disk.mean_mae - in_memory.mean_mae) <= 0.5 / 255.0 + 1e-12);

    // incompatible checkpoint/mode: architecture diff
    try {
        cmd_predict(cfg, (root / "zero.ckpt").string(), (root / "data").string(),
                    (root / "preds2").string(), "fusion");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
    fs::remove_all(root);
}

TEST_CASE("full micro pipeline runs through the C API with identical rerun hashes") {
    const fs::path root = temp_dir("salfuse_capi");

    sf_config* cfg = nullptr;
    REQUIRE(sf_config_preset("toy", &cfg) == SF_OK);
    REQUIRE(sf_config_set(cfg, "levels", "3") == SF_OK);
    REQUIRE(sf_config_set(cfg, "input_size", "16") == SF_OK);
    REQUIRE(sf_config_set(cfg, "data.size", "16") == SF_OK);
    REQUIRE(sf_config_set(cfg, "train.epochs_teacher", "2") == SF_OK);
    REQUIRE(sf_config_set(cfg, "train.epochs_distill", "2") == SF_OK);
    REQUIRE(sf_config_set(cfg, "train.epochs_fusion", "1") == SF_OK);

    // invalid override: error + message, config intact
    CHECK(sf_config_set(cfg, "train.momentum", "2.0") == SF_ERROR_CONFIG);
    CHECK(std::string(sf_last_error()).find("momentum") != std::string::npos);

    const std::string data = (root / "data").string();
    REQUIRE(sf_generate(cfg, data.c_str(), 4, 11) == SF_OK);

    const std::string teacher = (root / "teacher.ckpt").string();
    REQUIRE(sf_train_teacher(cfg, data.c_str(), teacher.c_str(), 12) == SF_OK);

    const std::string student = (root / "student.ckpt").string();
    REQUIRE(sf_distill(cfg, data.c_str(), teacher.c_str(), student.c_str(), 13) == SF_OK);

    const std::string fusion = (root / "fusion.ckpt").string();
    REQUIRE(sf_train_fusion(cfg, data.c_str(), "rd-c", teacher.c_str(), student.c_str(),
                            fusion.c_str(), 14) == SF_OK);

    const std::string preds = (root / "preds").string();
    REQUIRE(sf_predict(cfg, fusion.c_str(), data.c_str(), preds.c_str(), "fusion") == SF_OK);

    double max_f = -1.0, mae = -1.0;
    REQUIRE(sf_evaluate(preds.c_str(), (root / "data" / "gt").string().c_str(), 0.3,
                        (root / "report.json").string().c_str(), &max_f, &mae) == SF_OK);
    CHECK(max_f >= 0.0);
    CHECK(mae >= 0.0);

    // identical rerun of one stage produces a byte-identical checkpoint
    const std::string teacher2 = (root / "teacher2.ckpt").string();
    REQUIRE(sf_train_teacher(cfg, data.c_str(), teacher2.c_str(), 12) == SF_OK);
    CHECK(hash_file(teacher) == hash_file(teacher2));

    // error surface: NULL arguments and missing checkpoints
    CHECK(sf_train_teacher(nullptr, data.c_str(), teacher.c_str(), 1) == SF_ERROR_USAGE);
    CHECK(sf_distill(cfg, data.c_str(), (root / "nope.ckpt").string().c_str(),
                     student.c_str(), 1) == SF_ERROR_CONFIG);
    CHECK(std::string(sf_last_error()).find("train-teacher") != std::string::npos);
    CHECK(sf_predict(cfg, fusion.c_str(), data.c_str(), preds.c_str(), "bogus") ==
          SF_ERROR_USAGE);

    sf_config_free(cfg);
    fs::remove_all(root);
}

TEST_CASE("training log records compose to their totals") {
    const Config cfg = micro_config();
    const fs::path root = temp_dir("salfuse_logcheck");
    cmd_generate(cfg, (root / "data").string(), 3, 21);
    cmd_train_teacher(cfg, (root / "data").string(), (root / "t.ckpt").string(), 22);

    std::ifstream log(root / "t.ckpt.log.jsonl");
    REQUIRE(log.good());
    std::string line;
    int steps = 0;
    bool summary_seen = false;
    while (std::getline(log, line)) {
        const auto rec = nlohmann::json::parse(line);
        if (rec.at("record") == "step") {
            ++steps;
            double total = 0.0;
            for (const auto& [k, v] : rec.at("terms").items()) total += v.get<double>();
            CHECK(std::abs(total - rec.at("total").get<double>()) < 1e-9);
        } else if (rec.at("record") == "summary") {
            summary_seen = true;
            CHECK(rec.at("initial_loss").get<double>() > 0.0);
        }
    }
    CHECK(steps == 9);  // 3 samples x 3 epochs
    CHECK(summary_seen);
    fs::remove_all(root);
}
