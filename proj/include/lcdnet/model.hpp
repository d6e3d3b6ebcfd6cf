#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lcdnet/backbone.hpp"
#include "lcdnet/decoder.hpp"
#include "lcdnet/ffm.hpp"
#include "lcdnet/gmm.hpp"
#include "lcdnet/profiler.hpp"
#include "lcdnet/tif.hpp"

namespace lcdnet {

struct LcdNetConfig {
    EncoderConfig encoder = EncoderConfig::mobilenet_v2();
    /// Decoder widths indexed by pyramid level (0 = shallowest). The default
    /// keeps a uniform 96-wide decoder, tapering to 64 at the finest level.
    std::array<int, 5> decoder_widths = {64, 96, 96, 96, 96};
    double exchange_fraction = 0.5;
    double eps = 1e-5;  // GMM embedding and normalizer epsilon
    bool use_tif = true;
    bool use_ffm = true;
    bool use_gmm = true;
    bool ffm_literal = false;       // reproduce the published FFM listing verbatim
    bool gmm_rms_normalizer = true; // mean-of-squares normalizer (flag off: square of mean)
    bool freeze_bn_stats = false;   // use running statistics even while training

    void validate() const {
        encoder.validate();
        for (int w : decoder_widths) {
            if (w <= 0) {
                throw std::invalid_argument("decoder widths must be positive");
            }
        }
        if (exchange_fraction < 0.0 || exchange_fraction > 1.0) {
            throw std::invalid_argument("exchange fraction must lie in [0, 1]");
        }
        if (eps < 0.0 || eps > 1e-5) {
            throw std::invalid_argument("eps must lie in [0, 1e-5]");
        }
    }

    static LcdNetConfig tiny() {
        LcdNetConfig c;
        c.encoder = EncoderConfig::tiny();
        c.decoder_widths = {6, 6, 8, 8, 8};
        return c;
    }
};

/// Full LCD-Net: shared encoder over both temporal inputs, channel exchange
/// after stages 2-4, per-level fusion, gated hierarchical decoding, and two
/// supervised logit heads at input resolution.
template <typename T>
struct LcdNet {
    LcdNetConfig cfg;
    Encoder<T> encoder;
    std::array<Ffm<T>, 5> ffms;
    Decoder<T> decoder;

    void build(const LcdNetConfig& config, std::uint64_t seed) {
        cfg = config;
        cfg.validate();
        encoder.build(cfg.encoder, seed);
        const std::array<int, 5> chans = cfg.encoder.stage_channels();
        if (cfg.use_ffm) {
            for (std::size_t k = 0; k < 5; ++k) {
                ffms[k].build("ffm.l" + std::to_string(k), chans[k], chans[k], seed);
                ffms[k].literal = cfg.ffm_literal;
            }
        }
        decoder.build(chans, cfg.decoder_widths, cfg.use_gmm, static_cast<T>(cfg.eps),
                      cfg.gmm_rms_normalizer, seed);
    }

    /// Both logit maps at full input resolution.
    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& t1, const Tensor<T>& t2,
                                            bool training) {
        if (!(t1.shape() == t2.shape())) {
            throw std::invalid_argument("temporal inputs differ in shape: " + t1.shape().str() +
                                        " vs " + t2.shape().str());
        }
        if (t1.shape().h % 32 != 0 || t1.shape().w % 32 != 0) {
            throw std::invalid_argument("input spatial dims must be divisible by 32, got " +
                                        t1.shape().str());
        }
        const bool bn_training = training && !cfg.freeze_bn_stats;
        std::array<Tensor<T>, 5> f1, f2;
        Tensor<T> x1 = t1, x2 = t2;
        for (std::size_t k = 0; k < 5; ++k) {
            x1 = encoder.forward_stage(k, x1, bn_training);
            x2 = encoder.forward_stage(k, x2, bn_training);
            if (cfg.use_tif && k >= 2) {
                std::tie(x1, x2) = tif_exchange(x1, x2, cfg.exchange_fraction);
            }
            f1[k] = x1;
            f2[k] = x2;
        }
        std::array<Tensor<T>, 5> fused;
        for (std::size_t k = 0; k < 5; ++k) {
            if (cfg.use_ffm) {
                fused[k] = ffms[k].fuse(f1[k], f2[k]);
            } else {
                fused[k] = mul_scalar(add(f1[k], f2[k]), T(0.5));
            }
        }
        return decoder.decode(fused);
    }

    /// Binary change mask: sigmoid(logits0) strictly above `threshold`.
    Tensor<T> predict(const Tensor<T>& t1, const Tensor<T>& t2, T threshold = T(0.5)) {
        if (!(threshold >= T(0) && threshold <= T(1))) {
            throw std::invalid_argument("threshold must lie in [0, 1]");
        }
        auto [logits0, logits1] = forward(t1, t2, false);
        Tensor<T> prob = sigmoid(logits0);
        Tensor<T> mask = Tensor<T>::zeros(prob.shape());
        const T* pd = prob.data();
        T* md = mask.mutable_data();
        for (std::int64_t i = 0; i < prob.numel(); ++i) {
            md[i] = pd[i] > threshold ? T(1) : T(0);
        }
        return mask;
    }

    void visit_params(const ParamVisitor<T>& v) {
        encoder.visit_params(v);
        if (cfg.use_ffm) {
            for (auto& f : ffms) {
                f.visit_params(v);
            }
        }
        decoder.visit_params(v);
    }

    void visit_buffers(const BufferVisitor<T>& v) { encoder.visit_buffers(v); }

    /// Static complexity walk at batch 1 and the given square input size.
    ComplexityReport profile(std::int64_t input_hw) const {
        if (input_hw % 32 != 0) {
            throw std::invalid_argument("profile input size must be divisible by 32");
        }
        ComplexityReport report;
        report.input_hw = input_hw;
        const Shape in{1, 3, input_hw, input_hw};

        // encoder runs once per temporal stream with shared parameters
        std::vector<LayerRow> enc_rows;
        const std::array<Shape, 5> feat = encoder.describe(in, enc_rows);
        for (const auto& row : enc_rows) {
            report.rows.push_back({row.name, row.out, row.params, 2 * row.macs, row.buffers});
        }
        for (std::size_t k = 2; k < 5; ++k) {
            report.rows.push_back({"tif.l" + std::to_string(k), feat[k], 0, 0, 0});
        }
        for (std::size_t k = 0; k < 5; ++k) {
            if (cfg.use_ffm) {
                ffms[k].describe(feat[k], report.rows);
            } else {
                report.rows.push_back({"merge.l" + std::to_string(k), feat[k], 0,
                                       elementwise_macs(feat[k], 2), 0});
            }
        }
        decoder.describe(feat, report.rows);
        return report;
    }
};

}  // namespace lcdnet
