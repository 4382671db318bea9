#include "distill.hpp"

#include <algorithm>
#include <cmath>

namespace salfuse {

Tensor teacher_loss(const SideOutputSet& outs, const Tensor& gt, const BpdcWeights& weights,
                    const LossConfig& loss_cfg,
                    std::vector<std::pair<std::string, double>>* terms) {
    const double eps = loss_cfg.epsilon;
    if (outs.combined.empty()) throw Error::config("teacher_loss: empty side-output set");
    for (const Tensor& p : outs.combined) {
        if (!(p.shape() == gt.shape())) {
            throw Error::config("teacher_loss: side-out resolution " + p.shape().str() +
                                " does not match ground truth " + gt.shape().str());
        }
    }
    Tensor total;
    for (std::size_t i = 0; i < outs.combined.size(); ++i) {
        Tensor term = cross_entropy(clamp(outs.combined[i], eps, 1.0 - eps), gt);
        if (terms) terms->emplace_back("l" + std::to_string(outs.levels[i]), term.item());
        total = total.valid() ? add(total, term) : term;
    }
    Tensor joint = cross_entropy(
        collaborative_combine(outs, weights, squash_mode_from_string(loss_cfg.collab_squash), eps),
        gt);
    if (terms) terms->emplace_back("joint", joint.item());
    return add(total, joint);
}

Tensor hcd_loss(const SideOutputSet& teacher_outs, const SideOutputSet& student_outs,
                const LossConfig& loss_cfg,
                std::vector<std::pair<std::string, double>>* terms) {
    if (teacher_outs.levels != student_outs.levels) {
        throw Error::config("hcd_loss: teacher and student level sets do not match");
    }
    const double eps = loss_cfg.epsilon;
    Tensor total;
    for (std::size_t i = 0; i < teacher_outs.combined.size(); ++i) {
        Tensor term = l2_loss(clamp(teacher_outs.combined[i], eps, 1.0 - eps),
                              clamp(student_outs.combined[i], eps, 1.0 - eps));
        if (terms) {
            terms->emplace_back("l" + std::to_string(teacher_outs.levels[i]), term.item());
        }
        total = total.valid() ? add(total, term) : term;
    }
    return total;
}

Tensor stream_input(const RgbdSample& sample, const std::string& kind) {
    if (kind == "rgb") return sample.rgb;
    if (kind == "depth") return encode_depth(sample.depth, sample.id);
    throw Error::config("unknown stream input kind '" + kind + "' (rgb | depth)");
}

Tensor predict_saliency(const SingleStreamNet& net, const Tensor& input) {
    NoGradGuard guard;
    const SideOutputSet outs = net.forward(input);
    Tensor map = Tensor::zeros(outs.combined.front().shape());
    const std::vector<double>& src = outs.combined.front().values();
    std::vector<double>& dst = map.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = std::min(1.0, std::max(0.0, src[i]));
    }
    return map;
}

namespace {

// Deterministic Fisher-Yates over sample indices.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace

TrainOutcome train_teacher(const Dataset& dataset, const NetworkConfig& cfg,
                           std::uint64_t seed, std::uint64_t config_hash) {
    if (dataset.samples.empty()) throw Error::data("train_teacher: empty dataset");
    for (const RgbdSample& s : dataset.samples) {
        if (!s.has_gt()) {
            throw Error::data("train_teacher: sample " + s.id + " has no ground-truth mask");
        }
    }

    Rng rng(seed);
    Rng init_rng = rng.fork(1);
    SingleStreamNet net(cfg, init_rng);
    Rng order_rng = rng.fork(2);

    const int batch = cfg.train.batch_size;
    const double lr = cfg.train.lr_teacher;

    auto dataset_mean_loss = [&]() {
        NoGradGuard guard;
        double acc = 0.0;
        for (const RgbdSample& s : dataset.samples) {
            const SideOutputSet outs = net.forward(stream_input(s, cfg.train.teacher_input));
            acc += teacher_loss(outs, s.gt, net.bpdc(), cfg.loss).item();
        }
        return acc / static_cast<double>(dataset.samples.size());
    };

    TrainOutcome outcome;
    outcome.initial_loss = dataset_mean_loss();

    std::vector<std::size_t> idx(dataset.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    int step = 0;
    auto params = net.params().all();
    for (int epoch = 0; epoch < cfg.train.epochs_teacher; ++epoch) {
        shuffle_indices(idx, order_rng);
        for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch)) {
            const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(batch));
            const double inv_b = 1.0 / static_cast<double>(end - at);
            Tensor total;
            std::vector<std::pair<std::string, double>> terms;
            for (std::size_t k = at; k < end; ++k) {
                const RgbdSample& s = dataset.samples[idx[k]];
                const SideOutputSet outs = net.forward(stream_input(s, cfg.train.teacher_input));
                std::vector<std::pair<std::string, double>> sample_terms;
                Tensor loss = teacher_loss(outs, s.gt, net.bpdc(), cfg.loss, &sample_terms);
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
            report.stage = "teacher";
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

SingleStreamNet make_student(const NetworkConfig& cfg, std::uint64_t seed, StudentInit init,
                             const Checkpoint* teacher, const Checkpoint* distilled) {
    Rng rng(seed);
    Rng init_rng = rng.fork(1);
    SingleStreamNet net(cfg, init_rng);
    switch (init) {
        case StudentInit::random:
            break;
        case StudentInit::teacher:
            if (teacher == nullptr) {
                throw Error::config("student init 'teacher' requires a teacher checkpoint");
            }
            apply_checkpoint(*teacher, net.params());
            break;
        case StudentInit::distilled:
            if (distilled == nullptr) {
                throw Error::config("student init 'distilled' requires a distillation checkpoint");
            }
            apply_checkpoint(*distilled, net.params());
            break;
    }
    return net;
}

TrainOutcome distill_student(const Dataset& dataset, const Checkpoint& teacher,
                             const NetworkConfig& cfg, std::uint64_t seed,
                             std::uint64_t config_hash) {
    if (dataset.samples.empty()) throw Error::data("distill_student: empty dataset");

    Rng rng(seed);
    Rng teacher_rng = rng.fork(7);  // overwritten by the checkpoint anyway
    SingleStreamNet teacher_net(cfg, teacher_rng);
    apply_checkpoint(teacher, teacher_net.params());

    // The teacher is frozen: its combined side-outs per sample are fixed
    // values, computed once up front.
    std::vector<std::vector<Tensor>> teacher_combined(dataset.samples.size());
    {
        NoGradGuard guard;
        for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
            const SideOutputSet outs = teacher_net.forward(dataset.samples[i].rgb);
            for (const Tensor& c : outs.combined) {
                teacher_combined[i].push_back(
                    Tensor::from_values(c.shape(), c.values()));
            }
        }
    }
    auto teacher_outs_for = [&](std::size_t i) {
        SideOutputSet outs;
        outs.levels = cfg.inference_levels;
        outs.raw = teacher_combined[i];  // placeholder; only `combined` is consumed
        outs.combined = teacher_combined[i];
        return outs;
    };

    const StudentInit init_mode =
        cfg.train.student_init == "teacher" ? StudentInit::teacher : StudentInit::random;
    SingleStreamNet student = make_student(cfg, rng.fork(1).seed(), init_mode, &teacher, nullptr);
    Rng order_rng = rng.fork(2);

    std::vector<Tensor> depth_inputs;
    depth_inputs.reserve(dataset.samples.size());
    for (const RgbdSample& s : dataset.samples) {
        depth_inputs.push_back(encode_depth(s.depth, s.id));
    }

    const int batch = cfg.train.batch_size;
    const double lr = cfg.train.lr_distill;

    auto dataset_mean_loss = [&]() {
        NoGradGuard guard;
        double acc = 0.0;
        for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
            const SideOutputSet outs = student.forward(depth_inputs[i]);
            acc += hcd_loss(teacher_outs_for(i), outs, cfg.loss).item();
        }
        return acc / static_cast<double>(dataset.samples.size());
    };

    TrainOutcome outcome;
    outcome.initial_loss = dataset_mean_loss();

    std::vector<std::size_t> idx(dataset.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    int step = 0;
    auto params = student.params().all();
    for (int epoch = 0; epoch < cfg.train.epochs_distill; ++epoch) {
        shuffle_indices(idx, order_rng);
        for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch)) {
            const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(batch));
            const double inv_b = 1.0 / static_cast<double>(end - at);
            Tensor total;
            std::vector<std::pair<std::string, double>> terms;
            for (std::size_t k = at; k < end; ++k) {
                const SideOutputSet outs = student.forward(depth_inputs[idx[k]]);
                std::vector<std::pair<std::string, double>> sample_terms;
                Tensor loss = hcd_loss(teacher_outs_for(idx[k]), outs, cfg.loss, &sample_terms);
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
            report.stage = "distill";
            report.step = step++;
            report.epoch = epoch;
            report.lr = lr;
            report.terms = std::move(terms);
            report.total = total.item();
            outcome.log.steps.push_back(std::move(report));
        }
    }

    outcome.final_loss = dataset_mean_loss();
    outcome.checkpoint = snapshot_parameters(student.params(), config_hash);
    return outcome;
}

EvalReport zero_shot_eval(const Checkpoint& ckpt, const Dataset& test_set,
                          const NetworkConfig& cfg, ZeroShotScheme scheme) {
    if (test_set.samples.empty()) throw Error::data("zero_shot_eval: empty test set");
    for (const RgbdSample& s : test_set.samples) {
        if (!s.has_gt()) {
            throw Error::data("zero_shot_eval: sample " + s.id + " has no ground truth");
        }
    }
    Rng rng(0);
    SingleStreamNet net(cfg, rng);
    apply_checkpoint(ckpt, net.params());

    const std::string input_kind = scheme == ZeroShotScheme::c_teacher_rgb ? "rgb" : "depth";
    std::map<std::string, Tensor> preds, gts;
    for (const RgbdSample& s : test_set.samples) {
        preds[s.id] = predict_saliency(net, stream_input(s, input_kind));
        gts[s.id] = s.gt;
    }
    return evaluate(preds, gts, cfg.eval_beta2);
}

}  // namespace salfuse
