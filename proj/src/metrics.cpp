#include "lcdnet/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lcdnet {

namespace {

void check_binary(float v, const char* which) {
    if (v != 0.0f && v != 1.0f) {
        throw std::invalid_argument(std::string(which) + " mask contains a non-binary value");
    }
}

}  // namespace

ConfusionCounts accumulate(const Tensor<float>& pred, const Tensor<float>& label) {
    if (!(pred.shape() == label.shape())) {
        throw std::invalid_argument("accumulate shape mismatch: " + pred.shape().str() + " vs " +
                                    label.shape().str());
    }
    ConfusionCounts c;
    const float* p = pred.data();
    const float* l = label.data();
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        check_binary(p[i], "prediction");
        check_binary(l[i], "label");
        if (l[i] == 1.0f) {
            p[i] == 1.0f ? ++c.tp : ++c.fn;
        } else {
            p[i] == 1.0f ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

ConfusionCounts accumulate(const std::vector<std::uint8_t>& pred,
                           const std::vector<std::uint8_t>& label) {
    if (pred.size() != label.size()) {
        throw std::invalid_argument("accumulate mask size mismatch");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 1 || label[i] > 1) {
            throw std::invalid_argument("mask contains a non-binary value");
        }
        if (label[i] == 1) {
            pred[i] == 1 ? ++c.tp : ++c.fn;
        } else {
            pred[i] == 1 ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

MetricSet compute_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) {
        throw std::invalid_argument("compute_metrics on zero pixels");
    }
    const double tp = static_cast<double>(c.tp);
    const double fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn);
    const double fn = static_cast<double>(c.fn);
    const double total = tp + fp + tn + fn;

    MetricSet m;
    if (tp + fp > 0) {
        m.pc = tp / (tp + fp);
    }
    if (tp + fn > 0) {
        m.rc = tp / (tp + fn);
    }
    if (m.pc && m.rc && *m.pc + *m.rc > 0) {
        m.f1 = 2.0 * *m.pc * *m.rc / (*m.pc + *m.rc);
    }
    m.oa = (tp + tn) / total;
    if (tp + fp + fn > 0) {
        m.iou = tp / (tp + fp + fn);
    }
    if (m.pc && tp + fp > 0) {
        m.kappa_literal = (*m.oa - *m.pc) / (tp + fp);
    }
    const double pe =
        ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (total * total);
    if (pe < 1.0) {
        m.kappa_standard = (*m.oa - pe) / (1.0 - pe);
    } else if (*m.oa == 1.0) {
        m.kappa_standard = 1.0;  // unanimous single-class agreement
    }
    return m;
}

Image render_confusion_map(const Tensor<float>& pred, const Tensor<float>& label) {
    if (!(pred.shape() == label.shape())) {
        throw std::invalid_argument("confusion map shape mismatch");
    }
    const Shape s = pred.shape();
    if (s.n != 1 || s.c != 1) {
        throw std::invalid_argument("confusion map expects a single 1-channel mask");
    }
    Image img;
    img.width = static_cast<int>(s.w);
    img.height = static_cast<int>(s.h);
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(s.h * s.w * 3));
    const float* p = pred.data();
    const float* l = label.data();
    for (std::int64_t i = 0; i < s.h * s.w; ++i) {
        check_binary(p[i], "prediction");
        check_binary(l[i], "label");
        std::uint8_t r = 0, g = 0, b = 0;
        if (l[i] == 1.0f && p[i] == 1.0f) {
            r = g = b = 255;  // TP white
        } else if (l[i] == 0.0f && p[i] == 1.0f) {
            r = 255;  // FP red
        } else if (l[i] == 1.0f && p[i] == 0.0f) {
            g = b = 255;  // FN cyan
        }  // TN black
        img.pixels[static_cast<std::size_t>(3 * i)] = r;
        img.pixels[static_cast<std::size_t>(3 * i + 1)] = g;
        img.pixels[static_cast<std::size_t>(3 * i + 2)] = b;
    }
    return img;
}

namespace {

std::string fmt(const std::optional<double>& v) {
    if (!v) {
        return "undefined";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

}  // namespace

std::string metrics_csv_header() { return "dataset,split,pc,rc,f1,oa,kappa,iou"; }

std::string metrics_csv_row(const std::string& dataset, const std::string& split,
                            const MetricSet& m) {
    std::ostringstream os;
    os << dataset << ',' << split << ',' << fmt(m.pc) << ',' << fmt(m.rc) << ',' << fmt(m.f1)
       << ',' << fmt(m.oa) << ',' << fmt(m.kappa_standard) << ',' << fmt(m.iou);
    return os.str();
}

}  // namespace lcdnet
