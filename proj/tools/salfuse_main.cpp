// salfuse CLI: drives the full pipeline through the shared library's C API.
//
// Exit status is the sf_status code of the failing call (0 on success);
// errors print one machine-parseable line: error[<kind>]: <message>.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "salfuse/salfuse.h"

namespace {

const char* status_name(sf_status s) {
    switch (s) {
        case SF_OK: return "ok";
        case SF_ERROR_CONFIG: return "config";
        case SF_ERROR_DATA: return "data";
        case SF_ERROR_USAGE: return "usage";
        case SF_ERROR_TRAINING: return "training";
        case SF_ERROR_IO: return "io";
        case SF_ERROR_INTERNAL: return "internal";
    }
    return "internal";
}

int finish(sf_status s) {
    if (s != SF_OK) {
        std::fprintf(stderr, "error[%s]: %s\n", status_name(s), sf_last_error());
    }
    return static_cast<int>(s);
}

struct ConfigDeleter {
    void operator()(sf_config* cfg) const { sf_config_free(cfg); }
};
using ConfigPtr = std::unique_ptr<sf_config, ConfigDeleter>;

// --config accepts a preset name or a JSON file path; --set overrides follow.
std::pair<sf_status, ConfigPtr> make_config(const std::string& config_arg,
                                            const std::vector<std::string>& overrides) {
    sf_config* raw = nullptr;
    sf_status s;
    if (config_arg == "toy" || config_arg == "table1") {
        s = sf_config_preset(config_arg.c_str(), &raw);
    } else {
        s = sf_config_load(config_arg.c_str(), &raw);
    }
    ConfigPtr cfg(raw);
    if (s != SF_OK) return {s, nullptr};
    for (const std::string& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error[usage]: --set expects key=value, got '%s'\n",
                         kv.c_str());
            return {SF_ERROR_USAGE, nullptr};
        }
        s = sf_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (s != SF_OK) return {s, nullptr};
    }
    return {SF_OK, std::move(cfg)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RGB-D salient object detection: distillation + fusion pipeline"};
    app.require_subcommand(1);

    std::string config_arg = "toy";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    app.add_option("--config", config_arg, "preset name (toy|table1) or config file path")
        ->capture_default_str();
    app.add_option("--set", overrides, "config override key=value (repeatable)");
    app.add_option("--seed", seed, "RNG seed")->capture_default_str();

    // generate
    auto* gen = app.add_subcommand("generate", "synthesize an RGB-D dataset");
    std::string gen_out;
    int gen_count = 0;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--count", gen_count, "number of samples")->required();

    // train-teacher
    auto* teach = app.add_subcommand("train-teacher", "stage 1: train the teacher network");
    std::string teach_data, teach_out;
    teach->add_option("--data", teach_data, "labeled dataset directory")->required();
    teach->add_option("--out", teach_out, "output checkpoint path")->required();

    // distill
    auto* dist = app.add_subcommand("distill", "stage 2: hierarchical cross-modal distillation");
    std::string dist_data, dist_teacher, dist_out;
    dist->add_option("--data", dist_data, "paired RGB-D dataset directory")->required();
    dist->add_option("--teacher", dist_teacher, "teacher checkpoint")->required();
    dist->add_option("--out", dist_out, "output checkpoint path")->required();

    // train-fusion
    auto* fus = app.add_subcommand("train-fusion", "stage 3: train the fusion network");
    std::string fus_data, fus_init = "rd-c", fus_teacher, fus_student, fus_out;
    fus->add_option("--data", fus_data, "labeled RGB-D dataset directory")->required();
    fus->add_option("--init", fus_init, "initialization scheme: rd-a | rd-b | rd-c")
        ->capture_default_str();
    fus->add_option("--teacher", fus_teacher, "teacher checkpoint (rd-b, rd-c)");
    fus->add_option("--student", fus_student, "distilled checkpoint (rd-c)");
    fus->add_option("--out", fus_out, "output checkpoint path")->required();

    // predict
    auto* pred = app.add_subcommand("predict", "export saliency maps as PNGs");
    std::string pred_ckpt, pred_data, pred_out, pred_mode = "fusion";
    pred->add_option("--checkpoint", pred_ckpt, "checkpoint path")->required();
    pred->add_option("--data", pred_data, "dataset directory")->required();
    pred->add_option("--out", pred_out, "output directory")->required();
    pred->add_option("--mode", pred_mode, "teacher | student | fusion")->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "PR curve, F-measure and MAE");
    std::string ev_pred, ev_gt, ev_out;
    double ev_beta2 = 0.3;
    ev->add_option("--pred", ev_pred, "directory of predicted maps")->required();
    ev->add_option("--gt", ev_gt, "directory of ground-truth masks")->required();
    ev->add_option("--beta2", ev_beta2, "F-measure beta^2")->capture_default_str();
    ev->add_option("--out", ev_out, "report path (JSONL)")->required();

    // ablate
    auto* abl = app.add_subcommand("ablate", "run the four CA-Fuse variants and compare");
    std::string abl_train, abl_test, abl_out, abl_teacher, abl_student;
    abl->add_option("--train-data", abl_train, "labeled training dataset")->required();
    abl->add_option("--test-data", abl_test, "labeled test dataset")->required();
    abl->add_option("--out", abl_out, "output directory")->required();
    abl->add_option("--teacher", abl_teacher, "optional teacher checkpoint");
    abl->add_option("--student", abl_student, "optional distilled checkpoint");

    CLI11_PARSE(app, argc, argv);

    if (ev->parsed()) {
        double max_f = 0.0, mae = 0.0;
        const sf_status s =
            sf_evaluate(ev_pred.c_str(), ev_gt.c_str(), ev_beta2, ev_out.c_str(), &max_f, &mae);
        if (s == SF_OK) {
            std::printf("images evaluated; mean max F_beta = %.6f, mean MAE = %.6f\n", max_f,
                        mae);
        }
        return finish(s);
    }

    auto [cs, cfg] = make_config(config_arg, overrides);
    if (cs != SF_OK) return finish(cs);

    sf_status s = SF_ERROR_USAGE;
    if (gen->parsed()) {
        s = sf_generate(cfg.get(), gen_out.c_str(), gen_count, seed);
        if (s == SF_OK) std::printf("generated %d samples in %s\n", gen_count, gen_out.c_str());
    } else if (teach->parsed()) {
        s = sf_train_teacher(cfg.get(), teach_data.c_str(), teach_out.c_str(), seed);
        if (s == SF_OK) std::printf("teacher checkpoint written to %s\n", teach_out.c_str());
    } else if (dist->parsed()) {
        s = sf_distill(cfg.get(), dist_data.c_str(), dist_teacher.c_str(), dist_out.c_str(),
                       seed);
        if (s == SF_OK) std::printf("student checkpoint written to %s\n", dist_out.c_str());
    } else if (fus->parsed()) {
        s = sf_train_fusion(cfg.get(), fus_data.c_str(), fus_init.c_str(),
                            fus_teacher.empty() ? nullptr : fus_teacher.c_str(),
                            fus_student.empty() ? nullptr : fus_student.c_str(),
                            fus_out.c_str(), seed);
        if (s == SF_OK) std::printf("fusion checkpoint written to %s\n", fus_out.c_str());
    } else if (pred->parsed()) {
        s = sf_predict(cfg.get(), pred_ckpt.c_str(), pred_data.c_str(), pred_out.c_str(),
                       pred_mode.c_str());
        if (s == SF_OK) std::printf("saliency maps written to %s\n", pred_out.c_str());
    } else if (abl->parsed()) {
        s = sf_ablate(cfg.get(), abl_train.c_str(), abl_test.c_str(), abl_out.c_str(), seed,
                      abl_teacher.empty() ? nullptr : abl_teacher.c_str(),
                      abl_student.empty() ? nullptr : abl_student.c_str());
        if (s == SF_OK) std::printf("ablation table written to %s/comparison.tsv\n",
                                    abl_out.c_str());
    }
    return finish(s);
}
