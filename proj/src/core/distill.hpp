#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "backbone.hpp"
#include "checkpoint.hpp"
#include "data.hpp"
#include "eval.hpp"

namespace salfuse {

struct TrainStepReport {
    std::string stage;  // teacher | distill | fusion
    int step = 0;
    int epoch = 0;
    double lr = 0.0;
    std::vector<std::pair<std::string, double>> terms;  // named per-level loss values
    double total = 0.0;
};

struct TrainLog {
    std::vector<TrainStepReport> steps;
};

struct TrainOutcome {
    Checkpoint checkpoint;
    TrainLog log;
    double initial_loss = 0.0;  // dataset mean before the first update
    double final_loss = 0.0;    // dataset mean after the last epoch
};

// Eq.-style teacher objective: one cross-entropy per combined side-out plus
// the collaborative joint term. Side-outs must sit at ground-truth resolution.
Tensor teacher_loss(const SideOutputSet& outs, const Tensor& gt, const BpdcWeights& weights,
                    const LossConfig& loss_cfg,
                    std::vector<std::pair<std::string, double>>* terms = nullptr);

// Hierarchical distillation objective: sum over inference levels of the L2
// distance between clamped teacher and student combined side-outs.
Tensor hcd_loss(const SideOutputSet& teacher_outs, const SideOutputSet& student_outs,
                const LossConfig& loss_cfg,
                std::vector<std::pair<std::string, double>>* terms = nullptr);

// Saliency readout of a single-stream network: the shallowest combined
// side-out, clipped to [0,1]. Runs without building a graph.
Tensor predict_saliency(const SingleStreamNet& net, const Tensor& input);

Tensor stream_input(const RgbdSample& sample, const std::string& kind);  // rgb | depth

TrainOutcome train_teacher(const Dataset& dataset, const NetworkConfig& cfg,
                           std::uint64_t seed, std::uint64_t config_hash);

TrainOutcome distill_student(const Dataset& dataset, const Checkpoint& teacher,
                             const NetworkConfig& cfg, std::uint64_t seed,
                             std::uint64_t config_hash);

// Initialization schemes for a depth-stream network.
enum class StudentInit { random, teacher, distilled };

SingleStreamNet make_student(const NetworkConfig& cfg, std::uint64_t seed, StudentInit init,
                             const Checkpoint* teacher, const Checkpoint* distilled);

// Zero-shot evaluation schemes: A = transferred student on depth encodings,
// B = teacher checkpoint on depth encodings, C = teacher on RGB. A and B
// differ only in which checkpoint the caller supplies.
enum class ZeroShotScheme { a_student_depth, b_teacher_depth, c_teacher_rgb };

EvalReport zero_shot_eval(const Checkpoint& ckpt, const Dataset& test_set,
                          const NetworkConfig& cfg, ZeroShotScheme scheme);

}  // namespace salfuse
