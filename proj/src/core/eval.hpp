#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace salfuse {

constexpr int kThresholdCount = 256;

struct ImageEval {
    std::string id;
    std::array<double, kThresholdCount> precision{};
    std::array<double, kThresholdCount> recall{};
    double max_f = 0.0;
    double mae = 0.0;
};

struct EvalReport {
    double beta2 = 0.3;
    std::vector<ImageEval> per_image;                     // sorted by id
    std::array<double, kThresholdCount> mean_precision{};  // per-threshold mean over images
    std::array<double, kThresholdCount> mean_recall{};
    std::array<double, kThresholdCount> mean_f{};          // threshold-wise mean F (logged)
    double mean_max_f = 0.0;
    double mean_mae = 0.0;
};

// Positive iff round(255*value) > threshold; threshold 255 is always empty.
std::vector<std::uint8_t> binarize(const Tensor& map, int threshold);

// Conventions: empty prediction -> precision 1 if gt empty else 0;
// empty gt -> recall 1.
std::pair<double, double> precision_recall(const std::vector<std::uint8_t>& pred,
                                           const std::vector<std::uint8_t>& gt);

// (1+b2)PR / (b2 P + R), defined 0 when the denominator is 0.
double f_measure(double precision, double recall, double beta2);

double mae(const Tensor& map, const Tensor& gt);

ImageEval evaluate_image(const std::string& id, const Tensor& pred, const Tensor& gt,
                         double beta2);

// Full protocol: per-image PR over all 256 thresholds, per-image max F over
// thresholds, dataset curves as per-threshold means. Ids must match between
// the two maps; orphans raise a data error listing them.
EvalReport evaluate(const std::map<std::string, Tensor>& preds,
                    const std::map<std::string, Tensor>& gts, double beta2);

// report as line-oriented JSON records plus a PR-curve table for plotting.
void write_report(const EvalReport& report, const std::string& report_path,
                  const std::string& pr_table_path);

}  // namespace salfuse
