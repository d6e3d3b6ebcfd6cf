#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lcdnet/gmm.hpp"
#include "lcdnet/nn.hpp"

namespace lcdnet {

/// One decoding level: 1x1 channel reduction, optional GMM gating, a
/// channel-preserving 3x3 convolution, and a residual add from the gated
/// feature so zeroing the 3x3 weights yields the GMM output unchanged.
template <typename T>
struct DecoderLevel {
    Conv2dLayer<T> reduce;
    std::optional<Gmm<T>> gmm;
    Conv2dLayer<T> spatial;

    void build(const std::string& name, std::int64_t in_ch, std::int64_t width, bool use_gmm,
               T eps, bool rms_normalizer, std::uint64_t seed) {
        if (width <= 0) {
            throw std::invalid_argument("decoder width must be positive");
        }
        reduce.build(name + ".reduce", ConvSpec{in_ch, width, 1, 1, 1, 0, 1, true}, seed);
        if (use_gmm) {
            gmm.emplace();
            gmm->build(name + ".gmm", width, eps);
            gmm->rms_normalizer = rms_normalizer;
        }
        spatial.build(name + ".spatial", ConvSpec{width, width, 3, 3, 1, 1, 1, true}, seed);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> r = reduce.forward(x);
        Tensor<T> g = gmm ? gmm->gate(r) : r;
        return add(g, spatial.forward(g));
    }

    void visit_params(const ParamVisitor<T>& v) {
        reduce.visit_params(v);
        if (gmm) {
            gmm->visit_params(v);
        }
        spatial.visit_params(v);
    }

    Shape describe(const Shape& in, std::vector<LayerRow>& rows) const {
        reduce.describe(in, rows);
        Shape s = reduce.spec.out_shape(in);
        if (gmm) {
            gmm->describe(s, rows);
        }
        spatial.describe(s, rows);
        rows.push_back({spatial.name + ".residual_add", s, 0, elementwise_macs(s), 0});
        return s;
    }
};

/// Hierarchical decoder over the fused pyramid. Decoding starts at the
/// deepest level and walks up: upsample x2, concatenate the same-resolution
/// fused feature, apply the level. Head 0 reads the final full-resolution
/// feature; head 1 reads the penultimate level upsampled to full resolution.
template <typename T>
struct Decoder {
    std::array<DecoderLevel<T>, 5> levels;  // index k matches pyramid level k
    Conv2dLayer<T> head0;
    Conv2dLayer<T> head1;

    void build(const std::array<int, 5>& stage_channels, const std::array<int, 5>& widths,
               bool use_gmm, T eps, bool rms_normalizer, std::uint64_t seed) {
        for (int k = 4; k >= 0; --k) {
            const std::int64_t in_ch =
                k == 4 ? stage_channels[4] : widths[static_cast<std::size_t>(k + 1)] +
                                                 stage_channels[static_cast<std::size_t>(k)];
            levels[static_cast<std::size_t>(k)].build("decoder.l" + std::to_string(k), in_ch,
                                                      widths[static_cast<std::size_t>(k)], use_gmm,
                                                      eps, rms_normalizer, seed);
        }
        head0.build("decoder.head0", ConvSpec{widths[0], 1, 1, 1, 1, 0, 1, true}, seed);
        head1.build("decoder.head1", ConvSpec{widths[1], 1, 1, 1, 1, 0, 1, true}, seed);
        // the decoder has no normalization, so fan-in init leaves the logit
        // scale far too hot; damp the heads so training starts near log(2) loss
        for (Conv2dLayer<T>* head : {&head0, &head1}) {
            T* w = head->weight.mutable_data();
            for (std::int64_t i = 0; i < head->weight.numel(); ++i) {
                w[i] *= T(0.1);
            }
        }
    }

    std::pair<Tensor<T>, Tensor<T>> decode(const std::array<Tensor<T>, 5>& fused) const {
        for (int k = 0; k < 4; ++k) {
            if (fused[static_cast<std::size_t>(k)].shape().h !=
                2 * fused[static_cast<std::size_t>(k + 1)].shape().h) {
                throw std::invalid_argument("fused pyramid does not halve between levels " +
                                            std::to_string(k) + " and " + std::to_string(k + 1));
            }
        }
        Tensor<T> d = levels[4].forward(fused[4]);
        Tensor<T> penult;
        for (int k = 3; k >= 0; --k) {
            d = upsample_bilinear_x2(d);
            d = concat_channels(d, fused[static_cast<std::size_t>(k)]);
            d = levels[static_cast<std::size_t>(k)].forward(d);
            if (k == 1) {
                penult = d;
            }
        }
        Tensor<T> logits0 = head0.forward(upsample_bilinear_x2(d));
        Tensor<T> p = upsample_bilinear_x2(upsample_bilinear_x2(penult));
        Tensor<T> logits1 = head1.forward(p);
        return {logits0, logits1};
    }

    void visit_params(const ParamVisitor<T>& v) {
        for (auto& level : levels) {
            level.visit_params(v);
        }
        head0.visit_params(v);
        head1.visit_params(v);
    }

    void describe(const std::array<Shape, 5>& fused, std::vector<LayerRow>& rows) const {
        Shape d = levels[4].describe(fused[4], rows);
        Shape penult{};
        for (int k = 3; k >= 0; --k) {
            Shape up{d.n, d.c, d.h * 2, d.w * 2};
            rows.push_back({"decoder.up" + std::to_string(k), up, 0, elementwise_macs(up, 4), 0});
            Shape cat{up.n, up.c + fused[static_cast<std::size_t>(k)].c, up.h, up.w};
            d = levels[static_cast<std::size_t>(k)].describe(cat, rows);
            if (k == 1) {
                penult = d;
            }
        }
        Shape full{d.n, d.c, d.h * 2, d.w * 2};
        rows.push_back({"decoder.up_final", full, 0, elementwise_macs(full, 4), 0});
        head0.describe(full, rows);
        Shape p2{penult.n, penult.c, penult.h * 2, penult.w * 2};
        rows.push_back({"decoder.head1.up0", p2, 0, elementwise_macs(p2, 4), 0});
        Shape p4{p2.n, p2.c, p2.h * 2, p2.w * 2};
        rows.push_back({"decoder.head1.up1", p4, 0, elementwise_macs(p4, 4), 0});
        head1.describe(p4, rows);
    }
};

}  // namespace lcdnet
