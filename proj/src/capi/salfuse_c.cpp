#include "salfuse/salfuse.h"

#include <exception>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "pipeline.hpp"

using salfuse::Config;
using salfuse::Error;
using salfuse::ErrorKind;

struct sf_config {
    Config cfg;
};

namespace {

thread_local std::string g_last_error;

sf_status status_from_kind(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return SF_ERROR_CONFIG;
        case ErrorKind::data: return SF_ERROR_DATA;
        case ErrorKind::usage: return SF_ERROR_USAGE;
        case ErrorKind::training: return SF_ERROR_TRAINING;
        case ErrorKind::io: return SF_ERROR_IO;
    }
    return SF_ERROR_INTERNAL;
}

template <typename Fn>
sf_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return SF_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_from_kind(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SF_ERROR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return SF_ERROR_INTERNAL;
    }
}

sf_status require(const void* ptr, const char* what) {
    if (ptr) return SF_OK;
    g_last_error = std::string(what) + " must not be NULL";
    return SF_ERROR_USAGE;
}

std::string or_empty(const char* s) { return s ? std::string(s) : std::string(); }

}  // namespace

extern "C" {

const char* sf_last_error(void) { return g_last_error.c_str(); }

sf_status sf_config_preset(const char* name, sf_config** out) {
    if (sf_status s = require(name, "name"); s != SF_OK) return s;
    if (sf_status s = require(out, "out"); s != SF_OK) return s;
    return guarded([&] { *out = new sf_config{Config::preset(name)}; });
}

sf_status sf_config_load(const char* path, sf_config** out) {
    if (sf_status s = require(path, "path"); s != SF_OK) return s;
    if (sf_status s = require(out, "out"); s != SF_OK) return s;
    return guarded([&] { *out = new sf_config{Config::from_file(path)}; });
}

sf_status sf_config_set(sf_config* cfg, const char* dotted_key, const char* value) {
    if (sf_status s = require(cfg, "cfg"); s != SF_OK) return s;
    if (sf_status s = require(dotted_key, "key"); s != SF_OK) return s;
    if (sf_status s = require(value, "value"); s != SF_OK) return s;
    return guarded([&] { cfg->cfg.set(dotted_key, value); });
}

void sf_config_free(sf_config* cfg) { delete cfg; }

sf_status sf_generate(const sf_config* cfg, const char* out_dir, int count, uint64_t seed) {
    if (sf_status s = require(cfg, "cfg"); s != SF_OK) return s;
    if (sf_status s = require(out_dir, "out_dir"); s != SF_OK) return s;
    return guarded([&] { salfuse::cmd_generate(cfg->cfg, out_dir, count, seed); });
}

sf_status sf_train_teacher(const sf_config* cfg, const char* data_dir,
                           const char* out_checkpoint, uint64_t seed) {
    if (sf_status s = require(cfg, "cfg"); s != SF_OK) return s;
    if (sf_status s = require(data_dir, "data_dir"); s != SF_OK) return s;
    if (sf_status s = require(out_checkpoint, "out_checkpoint"); s != SF_OK) return s;
    return guarded([&] { salfuse::cmd_train_teacher(cfg->cfg, data_dir, out_checkpoint, seed); });
}

sf_status sf_distill(const sf_config* cfg, const char* data_dir, const char* teacher_checkpoint,
                     const char* out_checkpoint, uint64_t seed) {
    if (sf_status s = require(cfg, "cfg"); s != SF_OK) return s;
    if (sf_status s = require(data_dir, "data_dir"); s != SF_OK) return s;
    if (sf_status s = require(teacher_checkpoint, "teacher_checkpoint"); s != SF_OK) return s;
    if (sf_status s = require(out_checkpoint, "out_checkpoint"); s != SF_OK) return s;
    return guarded([&] {
        salfuse::cmd_distill(cfg->cfg, data_dir, teacher_checkpoint, out_checkpoint, seed);
    });
}

sf_status sf_train_fusion(const sf_config* cfg, const char* data_dir, const char* init_mode,
                          const char* teacher_checkpoint, const char* student_checkpoint,
                          const char* out_checkpoint, uint64_t seed) {
    if (sf_status s = require(cfg, "cfg"); s != SF_OK) return s;
    if (sf_status s = require(data_dir, "data_dir"); s != SF_OK) return s;
    if (sf_status s = require(init_mode, "init_mode"); s != SF_OK) return s;
    if (sf_status s = require(out_checkpoint, "out_checkpoint"); s != SF_OK) return s;
    return guarded([&] {
        salfuse::cmd_train_fusion(cfg->cfg, data_dir, init_mode, or_empty(teacher_checkpoint),
                                  or_empty(student_checkpoint), out_checkpoint, seed);
    });
}

sf_status sf_predict(const sf_config* cfg, const char* checkpoint, const char* data_dir,
                     const char* out_dir, const char* mode) {
    if (sf_status s = require(cfg, "cfg"); s != SF_OK) return s;
    if (sf_status s = require(checkpoint, "checkpoint"); s != SF_OK) return s;
    if (sf_status s = require(data_dir, "data_dir"); s != SF_OK) return s;
    if (sf_status s = require(out_dir, "out_dir"); s != SF_OK) return s;
    if (sf_status s = require(mode, "mode"); s != SF_OK) return s;
    return guarded([&] { salfuse::cmd_predict(cfg->cfg, checkpoint, data_dir, out_dir, mode); });
}

sf_status sf_evaluate(const char* pred_dir, const char* gt_dir, double beta2,
                      const char* out_report, double* mean_max_f, double* mean_mae) {
    if (sf_status s = require(pred_dir, "pred_dir"); s != SF_OK) return s;
    if (sf_status s = require(gt_dir, "gt_dir"); s != SF_OK) return s;
    if (sf_status s = require(out_report, "out_report"); s != SF_OK) return s;
    return guarded([&] {
        const salfuse::EvalSummary summary =
            salfuse::cmd_eval(pred_dir, gt_dir, beta2, out_report);
        if (mean_max_f) *mean_max_f = summary.mean_max_f;
        if (mean_mae) *mean_mae = summary.mean_mae;
    });
}

sf_status sf_ablate(const sf_config* cfg, const char* train_dir, const char* test_dir,
                    const char* out_dir, uint64_t seed, const char* teacher_checkpoint,
                    const char* student_checkpoint) {
    if (sf_status s = require(cfg, "cfg"); s != SF_OK) return s;
    if (sf_status s = require(train_dir, "train_dir"); s != SF_OK) return s;
    if (sf_status s = require(test_dir, "test_dir"); s != SF_OK) return s;
    if (sf_status s = require(out_dir, "out_dir"); s != SF_OK) return s;
    return guarded([&] {
        salfuse::cmd_ablate(cfg->cfg, train_dir, test_dir, out_dir, seed,
                            or_empty(teacher_checkpoint), or_empty(student_checkpoint));
    });
}

}  // extern "C"
