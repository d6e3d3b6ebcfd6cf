#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcdnet/image.hpp"
#include "lcdnet/tensor.hpp"

namespace lcdnet {

/// Pixel tallies; a mergeable monoid (operator+= is the merge).
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
};

/// Metric values in [0, 1]; a metric whose denominator vanishes is reported
/// as absent rather than silently evaluating 0/0.
struct MetricSet {
    std::optional<double> pc, rc, f1, oa, kappa_standard, kappa_literal, iou;
};

/// Tallies a binary prediction against a binary label. Values must be
/// exactly 0 or 1; shapes must match.
ConfusionCounts accumulate(const Tensor<float>& pred, const Tensor<float>& label);
ConfusionCounts accumulate(const std::vector<std::uint8_t>& pred,
                           const std::vector<std::uint8_t>& label);

/// PC = TP/(TP+FP), RC = TP/(TP+FN), F1 = 2*PC*RC/(PC+RC),
/// OA = (TP+TN)/total, IoU = TP/(TP+FP+FN). kappa_literal follows the
/// printed (OA-PC)/(TP+FP) identity verbatim; kappa_standard is Cohen's
/// (po-pe)/(1-pe) and is the value used in reports.
MetricSet compute_metrics(const ConfusionCounts& counts);

/// Per-pixel confusion rendering: TP white, FP red, TN black, FN cyan.
Image render_confusion_map(const Tensor<float>& pred, const Tensor<float>& label);

/// CSV row writer for metric reports: dataset,split,pc,rc,f1,oa,kappa,iou.
/// Absent metrics print as "undefined". `kappa` is Cohen's kappa.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& dataset, const std::string& split,
                            const MetricSet& m);

}  // namespace lcdnet
