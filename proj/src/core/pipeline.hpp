#pragma once

#include <cstdint>
#include <string>

#include "config.hpp"

namespace salfuse {

struct EvalSummary {
    double mean_max_f = 0.0;
    double mean_mae = 0.0;
};

// Stage verbs behind the CLI and the C API. Every command writes a manifest
// (subcommand, resolved config snapshot, seed, input paths, output hashes)
// next to its artifacts; reruns with identical inputs and seed reproduce the
// hashes bit for bit.

void cmd_generate(const Config& cfg, const std::string& out_dir, int count, std::uint64_t seed);

void cmd_train_teacher(const Config& cfg, const std::string& data_dir,
                       const std::string& out_ckpt, std::uint64_t seed);

void cmd_distill(const Config& cfg, const std::string& data_dir, const std::string& teacher_ckpt,
                 const std::string& out_ckpt, std::uint64_t seed);

void cmd_train_fusion(const Config& cfg, const std::string& data_dir, const std::string& init_mode,
                      const std::string& teacher_ckpt, const std::string& student_ckpt,
                      const std::string& out_ckpt, std::uint64_t seed);

// mode: teacher (rgb input) | student (depth encoding input) | fusion (both).
void cmd_predict(const Config& cfg, const std::string& ckpt, const std::string& data_dir,
                 const std::string& out_dir, const std::string& mode);

EvalSummary cmd_eval(const std::string& pred_dir, const std::string& gt_dir, double beta2,
                     const std::string& out_report);

// Trains, predicts and evaluates the four CA-Fuse ablation variants and
// emits a comparison table.
void cmd_ablate(const Config& cfg, const std::string& train_dir, const std::string& test_dir,
                const std::string& out_dir, std::uint64_t seed,
                const std::string& teacher_ckpt = "", const std::string& student_ckpt = "");

}  // namespace salfuse
