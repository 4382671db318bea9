#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "checkpoint.hpp"
#include "data.hpp"
#include "distill.hpp"
#include "eval.hpp"
#include "fusion.hpp"
#include "png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace salfuse {

namespace {

std::string hash_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// Collects (relative path, content hash) pairs for everything under root,
// sorted so the manifest is identical across runs.
json hash_tree(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> entries;
    if (fs::is_regular_file(root)) {
        entries.emplace_back(root.filename().string(), hash_hex(hash_file(root.string())));
    } else if (fs::is_directory(root)) {
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (!entry.is_regular_file()) continue;
            entries.emplace_back(fs::relative(entry.path(), root).generic_string(),
                                 hash_hex(hash_file(entry.path().string())));
        }
    }
    std::sort(entries.begin(), entries.end());
    json out = json::object();
    for (const auto& [rel, h] : entries) out[rel] = h;
    return out;
}

void write_manifest(const fs::path& path, const std::string& subcommand, const Config& cfg,
                    std::uint64_t seed, const json& inputs, const json& artifacts) {
    json manifest{{"subcommand", subcommand},
                  {"seed", seed},
                  {"config", cfg.raw_json()},
                  {"inputs", inputs},
                  {"artifacts", artifacts}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error::io("cannot write manifest: " + path.string());
    out << manifest.dump(2) << "\n";
}

void write_train_log(const fs::path& path, const TrainOutcome& outcome) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error::io("cannot write training log: " + path.string());
    for (const TrainStepReport& r : outcome.log.steps) {
        json terms = json::object();
        for (const auto& [name, value] : r.terms) terms[name] = value;
        json rec{{"record", "step"}, {"stage", r.stage},   {"step", r.step},
                 {"epoch", r.epoch}, {"lr", r.lr},         {"terms", terms},
                 {"total", r.total}};
        out << rec.dump() << "\n";
    }
    json summary{{"record", "summary"},
                 {"initial_loss", outcome.initial_loss},
                 {"final_loss", outcome.final_loss},
                 {"steps", outcome.log.steps.size()}};
    out << summary.dump() << "\n";
    if (!out) throw Error::io("write failed for training log: " + path.string());
}

void save_stage_outputs(const std::string& subcommand, const Config& cfg, std::uint64_t seed,
                        const json& inputs, const TrainOutcome& outcome,
                        const std::string& out_ckpt) {
    const fs::path ckpt_path(out_ckpt);
    if (ckpt_path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(ckpt_path.parent_path(), ec);
    }
    save_checkpoint(outcome.checkpoint, out_ckpt);
    write_train_log(out_ckpt + ".log.jsonl", outcome);

    json artifacts = json::object();
    artifacts[ckpt_path.filename().string()] = hash_hex(hash_file(out_ckpt));
    artifacts[ckpt_path.filename().string() + ".log.jsonl"] =
        hash_hex(hash_file(out_ckpt + ".log.jsonl"));
    write_manifest(out_ckpt + ".manifest.json", subcommand, cfg, seed, inputs, artifacts);
}

Dataset load_labeled(const std::string& dir, const std::string& stage) {
    Dataset ds = load_dataset(dir);
    if (ds.samples.empty()) throw Error::data(stage + ": dataset " + dir + " is empty");
    return ds;
}

}  // namespace

void cmd_generate(const Config& cfg, const std::string& out_dir, int count, std::uint64_t seed) {
    if (count < 0) throw Error::usage("generate: count must be >= 0");
    const NetworkConfig net = cfg.network();
    SceneConfig scene;
    scene.size = net.data.size;
    scene.object_count = net.data.object_count;
    scene.mode = net.data.cue_mode;
    if (scene.size % net.downsample_factor() != 0) {
        throw Error::config("scene size " + std::to_string(scene.size) +
                            " is not divisible by " + std::to_string(net.downsample_factor()));
    }

    Dataset ds = generate_dataset(seed, scene, count, "train");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::exists(out_dir)) throw Error::io("cannot create output directory: " + out_dir);
    save_dataset(ds, out_dir);

    // per-sample generator metadata
    json meta = json::object();
    for (const RgbdSample& s : ds.samples) {
        meta[s.id] = json{{"seed", s.meta.seed}, {"descriptor", s.meta.descriptor}};
    }
    std::ofstream meta_out(fs::path(out_dir) / "meta.json", std::ios::trunc);
    if (!meta_out) throw Error::io("cannot write meta.json in " + out_dir);
    meta_out << meta.dump(2) << "\n";
    meta_out.close();

    write_manifest(fs::path(out_dir) / "manifest.json", "generate", cfg, seed,
                   json{{"count", count}}, hash_tree(out_dir));
}

void cmd_train_teacher(const Config& cfg, const std::string& data_dir,
                       const std::string& out_ckpt, std::uint64_t seed) {
    const Dataset ds = load_labeled(data_dir, "train-teacher");
    const TrainOutcome outcome = train_teacher(ds, cfg.network(), seed, cfg.hash());
    save_stage_outputs("train-teacher", cfg, seed, json{{"data", data_dir}}, outcome, out_ckpt);
}

void cmd_distill(const Config& cfg, const std::string& data_dir, const std::string& teacher_ckpt,
                 const std::string& out_ckpt, std::uint64_t seed) {
    if (!fs::exists(teacher_ckpt)) {
        throw Error::config("distill requires a teacher checkpoint (" + teacher_ckpt +
                            " not found); run train-teacher first");
    }
    const Dataset ds = load_dataset(data_dir);
    if (ds.samples.empty()) throw Error::data("distill: dataset " + data_dir + " is empty");
    const Checkpoint teacher = load_checkpoint(teacher_ckpt);
    const TrainOutcome outcome = distill_student(ds, teacher, cfg.network(), seed, cfg.hash());
    save_stage_outputs("distill", cfg, seed,
                       json{{"data", data_dir}, {"teacher", teacher_ckpt}}, outcome, out_ckpt);
}

void cmd_train_fusion(const Config& cfg, const std::string& data_dir, const std::string& init_mode,
                      const std::string& teacher_ckpt, const std::string& student_ckpt,
                      const std::string& out_ckpt, std::uint64_t seed) {
    const FusionInit init = fusion_init_from_string(init_mode);
    Checkpoint teacher, student;
    const Checkpoint* teacher_ptr = nullptr;
    const Checkpoint* student_ptr = nullptr;
    if (init == FusionInit::rd_b || init == FusionInit::rd_c) {
        if (teacher_ckpt.empty() || !fs::exists(teacher_ckpt)) {
            throw Error::config("init mode " + init_mode + " requires a teacher checkpoint; " +
                                "run train-teacher first");
        }
        teacher = load_checkpoint(teacher_ckpt);
        teacher_ptr = &teacher;
    }
    if (init == FusionInit::rd_c) {
        if (student_ckpt.empty() || !fs::exists(student_ckpt)) {
            throw Error::config("init mode rd-c requires a distillation checkpoint; "
                                "run distill first");
        }
        student = load_checkpoint(student_ckpt);
        student_ptr = &student;
    }

    const Dataset ds = load_labeled(data_dir, "train-fusion");
    const TrainOutcome outcome =
        train_fusion(ds, cfg.network(), init, teacher_ptr, student_ptr, seed, cfg.hash());
    json inputs{{"data", data_dir}, {"init", init_mode}};
    if (teacher_ptr) inputs["teacher"] = teacher_ckpt;
    if (student_ptr) inputs["student"] = student_ckpt;
    save_stage_outputs("train-fusion", cfg, seed, inputs, outcome, out_ckpt);
}

void cmd_predict(const Config& cfg, const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& out_dir, const std::string& mode) {
    if (mode != "teacher" && mode != "student" && mode != "fusion") {
        throw Error::usage("predict mode must be teacher | student | fusion, got '" + mode + "'");
    }
    const NetworkConfig net_cfg = cfg.network();
    const Dataset ds = load_dataset(data_dir);
    if (ds.samples.empty()) throw Error::data("predict: dataset " + data_dir + " is empty");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::exists(out_dir)) throw Error::io("cannot create output directory: " + out_dir);

    auto export_map = [&](const std::string& id, const Tensor& map) {
        const Shape s = map.shape();
        std::vector<std::uint8_t> pixels(static_cast<std::size_t>(s.h) * s.w);
        const double* v = map.values().data();
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v[i]));
        }
        write_png_gray8((fs::path(out_dir) / (id + ".png")).string(), s.w, s.h, pixels);
    };

    if (mode == "fusion") {
        Rng rng(0);
        FusionNet net(net_cfg, rng);
        apply_checkpoint(ckpt, net.params());
        for (const RgbdSample& s : ds.samples) {
            export_map(s.id, predict_saliency_fusion(net, s));
        }
    } else {
        Rng rng(0);
        SingleStreamNet net(net_cfg, rng);
        apply_checkpoint(ckpt, net.params());
        const std::string input_kind = mode == "teacher" ? "rgb" : "depth";
        for (const RgbdSample& s : ds.samples) {
            export_map(s.id, predict_saliency(net, stream_input(s, input_kind)));
        }
    }

    write_manifest(fs::path(out_dir) / "manifest.json", "predict", cfg, 0,
                   json{{"checkpoint", ckpt_path}, {"data", data_dir}, {"mode", mode}},
                   hash_tree(out_dir));
}

EvalSummary cmd_eval(const std::string& pred_dir, const std::string& gt_dir, double beta2,
                     const std::string& out_report) {
    auto load_gray_maps = [](const std::string& dir, bool binary) {
        std::map<std::string, Tensor> maps;
        if (!fs::is_directory(dir)) throw Error::data("not a directory: " + dir);
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
            const PngImage img = read_png(entry.path().string());
            if (img.channels != 1) {
                throw Error::data("expected grayscale map: " + entry.path().string());
            }
            const double scalev = img.bit_depth == 16 ? 65535.0 : 255.0;
            Tensor t = Tensor::zeros(Shape{1, 1, img.height, img.width});
            double* dst = t.values().data();
            for (std::size_t i = 0; i < img.pixels.size(); ++i) {
                dst[i] = binary ? (img.pixels[i] > scalev / 2.0 ? 1.0 : 0.0)
                                : img.pixels[i] / scalev;
            }
            maps[entry.path().stem().string()] = t;
        }
        return maps;
    };

    const auto preds = load_gray_maps(pred_dir, false);
    const auto gts = load_gray_maps(gt_dir, true);
    const EvalReport report = evaluate(preds, gts, beta2);

    const fs::path report_path(out_report);
    if (report_path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(report_path.parent_path(), ec);
    }
    write_report(report, out_report, out_report + ".pr.tsv");

    json artifacts = json::object();
    artifacts[report_path.filename().string()] = hash_hex(hash_file(out_report));
    artifacts[report_path.filename().string() + ".pr.tsv"] =
        hash_hex(hash_file(out_report + ".pr.tsv"));
    json manifest{{"subcommand", "eval"},
                  {"seed", 0},
                  {"config", json{{"beta2", beta2}}},
                  {"inputs", json{{"pred", pred_dir}, {"gt", gt_dir}}},
                  {"artifacts", artifacts}};
    std::ofstream mout(out_report + ".manifest.json", std::ios::trunc);
    if (!mout) throw Error::io("cannot write manifest for " + out_report);
    mout << manifest.dump(2) << "\n";

    EvalSummary summary;
    summary.mean_max_f = report.mean_max_f;
    summary.mean_mae = report.mean_mae;
    return summary;
}

void cmd_ablate(const Config& cfg, const std::string& train_dir, const std::string& test_dir,
                const std::string& out_dir, std::uint64_t seed,
                const std::string& teacher_ckpt, const std::string& student_ckpt) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::exists(out_dir)) throw Error::io("cannot create output directory: " + out_dir);

    const char* variants[] = {"f3b", "f3c_no_branch", "f3c", "f3c_no_transition"};
    std::vector<std::pair<std::string, EvalSummary>> rows;
    const std::string init_mode = student_ckpt.empty() ? (teacher_ckpt.empty() ? "rd-a" : "rd-b")
                                                       : "rd-c";

    for (const char* variant : variants) {
        Config variant_cfg = cfg;
        variant_cfg.set("fusion.variant", variant);
        const fs::path vdir = fs::path(out_dir) / variant;
        fs::create_directories(vdir, ec);
        const std::string ckpt = (vdir / "fusion.ckpt").string();
        cmd_train_fusion(variant_cfg, train_dir, init_mode, teacher_ckpt, student_ckpt, ckpt,
                         seed);
        cmd_predict(variant_cfg, ckpt, test_dir, (vdir / "preds").string(), "fusion");
        const EvalSummary summary =
            cmd_eval((vdir / "preds").string(), test_dir + "/gt",
                     variant_cfg.network().eval_beta2, (vdir / "report.json").string());
        rows.emplace_back(variant, summary);
    }

    std::ofstream table(fs::path(out_dir) / "comparison.tsv", std::ios::trunc);
    if (!table) throw Error::io("cannot write comparison table in " + out_dir);
    table << "variant\tmax_f\tmae\n";
    table.precision(17);
    for (const auto& [variant, summary] : rows) {
        table << variant << "\t" << summary.mean_max_f << "\t" << summary.mean_mae << "\n";
    }
    table.close();

    write_manifest(fs::path(out_dir) / "manifest.json", "ablate", cfg, seed,
                   json{{"train", train_dir}, {"test", test_dir}, {"init", init_mode}},
                   hash_tree(out_dir));
}

}  // namespace salfuse
