#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace salfuse {

std::vector<std::uint8_t> binarize(const Tensor& map, int threshold) {
    if (threshold < 0 || threshold > 255) {
        throw Error::usage("binarize: threshold must be in [0, 255], got " +
                           std::to_string(threshold));
    }
    const std::size_t n = map.values().size();
    std::vector<std::uint8_t> mask(n);
    const double* v = map.values().data();
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = std::lround(255.0 * v[i]) > threshold ? 1 : 0;
    }
    return mask;
}

std::pair<double, double> precision_recall(const std::vector<std::uint8_t>& pred,
                                           const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size()) {
        throw Error::usage("precision_recall: size mismatch");
    }
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 1 || gt[i] > 1) {
            throw Error::usage("precision_recall: inputs must be binary masks");
        }
        const bool p = pred[i] != 0, g = gt[i] != 0;
        if (p && g) ++tp;
        if (p && !g) ++fp;
        if (!p && g) ++fn;
    }
    const double precision =
        (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                      : ((tp + fn) == 0 ? 1.0 : 0.0);
    const double recall =
        (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
    return {precision, recall};
}

double f_measure(double precision, double recall, double beta2) {
    const double denom = beta2 * precision + recall;
    if (denom <= 0.0) return 0.0;
    return (1.0 + beta2) * precision * recall / denom;
}

double mae(const Tensor& map, const Tensor& gt) {
    if (!(map.shape() == gt.shape())) {
        throw Error::usage("mae: shape mismatch, " + map.shape().str() + " vs " +
                           gt.shape().str());
    }
    const double* a = map.values().data();
    const double* b = gt.values().data();
    double acc = 0.0;
    const std::size_t n = map.values().size();
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(n);
}

ImageEval evaluate_image(const std::string& id, const Tensor& pred, const Tensor& gt,
                         double beta2) {
    if (!(pred.shape() == gt.shape())) {
        throw Error::usage("evaluate_image: shape mismatch for id " + id);
    }
    ImageEval ev;
    ev.id = id;
    ev.mae = mae(pred, gt);

    // Quantized-level histograms split by ground truth give every threshold's
    // confusion counts in one pass; suffix sums realize the strict `>` rule.
    const std::size_t n = pred.values().size();
    const double* pv = pred.values().data();
    const double* gv = gt.values().data();
    std::array<std::int64_t, kThresholdCount> pos_hist{}, neg_hist{};
    std::int64_t gt_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        int level = static_cast<int>(std::lround(255.0 * pv[i]));
        level = std::clamp(level, 0, 255);
        const bool g = gv[i] > 0.5;
        if (g) {
            ++pos_hist[static_cast<std::size_t>(level)];
            ++gt_pos;
        } else {
            ++neg_hist[static_cast<std::size_t>(level)];
        }
    }

    std::int64_t tp = 0, fp = 0;
    ev.max_f = 0.0;
    for (int t = kThresholdCount - 1; t >= 0; --t) {
        // predictions with level > t: accumulate the bucket above t
        if (t < kThresholdCount - 1) {
            tp += pos_hist[static_cast<std::size_t>(t + 1)];
            fp += neg_hist[static_cast<std::size_t>(t + 1)];
        }
        const std::int64_t fn = gt_pos - tp;
        const double precision =
            (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                          : (gt_pos == 0 ? 1.0 : 0.0);
        const double recall = gt_pos > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                                         : 1.0;
        ev.precision[static_cast<std::size_t>(t)] = precision;
        ev.recall[static_cast<std::size_t>(t)] = recall;
        ev.max_f = std::max(ev.max_f, f_measure(precision, recall, beta2));
    }
    return ev;
}

EvalReport evaluate(const std::map<std::string, Tensor>& preds,
                    const std::map<std::string, Tensor>& gts, double beta2) {
    std::ostringstream orphans;
    for (const auto& [id, t] : preds) {
        if (!gts.count(id)) orphans << " pred-only:" << id;
    }
    for (const auto& [id, t] : gts) {
        if (!preds.count(id)) orphans << " gt-only:" << id;
    }
    if (!orphans.str().empty()) {
        throw Error::data("prediction/ground-truth id mismatch:" + orphans.str());
    }
    if (preds.empty()) throw Error::data("evaluate: empty input");

    EvalReport report;
    report.beta2 = beta2;
    for (const auto& [id, pred] : preds) {  // std::map iterates sorted by id
        report.per_image.push_back(evaluate_image(id, pred, gts.at(id), beta2));
    }

    const double inv = 1.0 / static_cast<double>(report.per_image.size());
    for (const ImageEval& ev : report.per_image) {
        report.mean_max_f += ev.max_f * inv;
        report.mean_mae += ev.mae * inv;
        for (int t = 0; t < kThresholdCount; ++t) {
            report.mean_precision[static_cast<std::size_t>(t)] +=
                ev.precision[static_cast<std::size_t>(t)] * inv;
            report.mean_recall[static_cast<std::size_t>(t)] +=
                ev.recall[static_cast<std::size_t>(t)] * inv;
        }
    }
    for (int t = 0; t < kThresholdCount; ++t) {
        double mean_f_t = 0.0;
        for (const ImageEval& ev : report.per_image) {
            mean_f_t += f_measure(ev.precision[static_cast<std::size_t>(t)],
                                  ev.recall[static_cast<std::size_t>(t)], beta2) *
                        inv;
        }
        report.mean_f[static_cast<std::size_t>(t)] = mean_f_t;
    }
    return report;
}

void write_report(const EvalReport& report, const std::string& report_path,
                  const std::string& pr_table_path) {
    using nlohmann::json;
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw Error::io("cannot write report: " + report_path);
    for (const ImageEval& ev : report.per_image) {
        json rec{{"record", "image"}, {"id", ev.id}, {"max_f", ev.max_f}, {"mae", ev.mae}};
        out << rec.dump() << "\n";
    }
    double best_mean_f = 0.0;
    for (double f : report.mean_f) best_mean_f = std::max(best_mean_f, f);
    json summary{{"record", "summary"},
                 {"images", report.per_image.size()},
                 {"beta2", report.beta2},
                 {"mean_max_f", report.mean_max_f},
                 {"best_threshold_mean_f", best_mean_f},
                 {"mean_mae", report.mean_mae}};
    out << summary.dump() << "\n";
    if (!out) throw Error::io("write failed for report: " + report_path);

    std::ofstream pr(pr_table_path, std::ios::trunc);
    if (!pr) throw Error::io("cannot write PR table: " + pr_table_path);
    pr << "recall\tprecision\n";
    pr.precision(17);
    for (int t = 0; t < kThresholdCount; ++t) {
        pr << report.mean_recall[static_cast<std::size_t>(t)] << "\t"
           << report.mean_precision[static_cast<std::size_t>(t)] << "\n";
    }
    if (!pr) throw Error::io("write failed for PR table: " + pr_table_path);
}

}  // namespace salfuse
