#pragma once

#include <array>
#include <string>
#include <vector>

#include "lcdnet/archive.hpp"
#include "lcdnet/nn.hpp"

namespace lcdnet {

/// One bottleneck group: `repeats` inverted residuals producing
/// `out_channels`, with `stride` applied by the first block only.
struct BottleneckSpec {
    int expand = 6;
    int out_channels = 0;
    int repeats = 1;
    int stride = 1;
};

/// Five-stage encoder table. Stage 0 is the stride-2 stem plus its blocks;
/// every other stage must contain exactly one stride-2 entry so each stage
/// halves the spatial size.
struct EncoderConfig {
    int stem_channels = 32;
    std::array<std::vector<BottleneckSpec>, 5> stages;

    /// Standard MobileNetV2 schedule regrouped into five stages of one
    /// stride-2 each; classifier head and final 1x1 expansion removed.
    static EncoderConfig mobilenet_v2() {
        EncoderConfig c;
        c.stem_channels = 32;
        c.stages[0] = {{1, 16, 1, 1}};
        c.stages[1] = {{6, 24, 2, 2}};
        c.stages[2] = {{6, 32, 3, 2}};
        c.stages[3] = {{6, 64, 4, 2}, {6, 96, 3, 1}};
        c.stages[4] = {{6, 160, 3, 2}, {6, 320, 1, 1}};
        return c;
    }

    /// Down-scaled table for gradient-check and smoke tests.
    static EncoderConfig tiny() {
        EncoderConfig c;
        c.stem_channels = 4;
        c.stages[0] = {{1, 4, 1, 1}};
        c.stages[1] = {{2, 6, 1, 2}};
        c.stages[2] = {{2, 8, 1, 2}};
        c.stages[3] = {{2, 8, 1, 2}};
        c.stages[4] = {{2, 12, 1, 2}};
        return c;
    }

    void validate() const {
        if (stem_channels <= 0) {
            throw std::invalid_argument("encoder stem width must be positive");
        }
        for (std::size_t k = 0; k < stages.size(); ++k) {
            if (stages[k].empty()) {
                throw std::invalid_argument("encoder stage " + std::to_string(k) + " is empty");
            }
            int stride2 = 0;
            for (const auto& b : stages[k]) {
                if (b.out_channels <= 0 || b.expand <= 0 || b.repeats <= 0) {
                    throw std::invalid_argument("encoder stage " + std::to_string(k) +
                                                " has a non-positive width table entry");
                }
                if (b.stride != 1 && b.stride != 2) {
                    throw std::invalid_argument("encoder block stride must be 1 or 2");
                }
                if (b.stride == 2) {
                    ++stride2;
                }
            }
            // stage 0 halves via the stem; stages 1..4 via one block each
            const int want = k == 0 ? 0 : 1;
            if (stride2 != want) {
                throw std::invalid_argument("encoder stage " + std::to_string(k) +
                                            " must contain exactly " + std::to_string(want) +
                                            " stride-2 blocks");
            }
        }
    }

    std::array<int, 5> stage_channels() const {
        std::array<int, 5> c{};
        for (std::size_t k = 0; k < 5; ++k) {
            c[k] = stages[k].back().out_channels;
        }
        return c;
    }
};

/// The five per-stage features of one temporal image; F[k] has spatial size
/// input / 2^(k+1).
template <typename T>
struct FeaturePyramid {
    std::array<Tensor<T>, 5> f;
};

/// expand 1x1 -> depthwise 3x3 -> linear 1x1 projection, with a skip when
/// stride is 1 and the channel count is preserved.
template <typename T>
struct InvertedResidual {
    bool has_expand = false;
    Conv2dLayer<T> expand_conv;
    BatchNorm2dLayer<T> expand_bn;
    Conv2dLayer<T> dw_conv;
    BatchNorm2dLayer<T> dw_bn;
    Conv2dLayer<T> project_conv;
    BatchNorm2dLayer<T> project_bn;
    bool skip = false;

    void build(const std::string& name, std::int64_t in_ch, std::int64_t out_ch, int expand,
               int stride, std::uint64_t seed) {
        const std::int64_t mid = in_ch * expand;
        has_expand = expand != 1;
        if (has_expand) {
            expand_conv.build(name + ".expand.conv",
                              ConvSpec{in_ch, mid, 1, 1, 1, 0, 1, false}, seed);
            expand_bn.build(name + ".expand.bn", mid);
        }
        dw_conv.build(name + ".dw.conv", ConvSpec{mid, mid, 3, 3, stride, 1, mid, false}, seed);
        dw_bn.build(name + ".dw.bn", mid);
        project_conv.build(name + ".project.conv", ConvSpec{mid, out_ch, 1, 1, 1, 0, 1, false},
                           seed);
        project_bn.build(name + ".project.bn", out_ch);
        skip = stride == 1 && in_ch == out_ch;
    }

    Tensor<T> forward(const Tensor<T>& x, bool bn_training) {
        Tensor<T> h = x;
        if (has_expand) {
            h = relu6(expand_bn.forward(expand_conv.forward(h), bn_training));
        }
        h = relu6(dw_bn.forward(dw_conv.forward(h), bn_training));
        h = project_bn.forward(project_conv.forward(h), bn_training);
        return skip ? add(h, x) : h;
    }

    void visit_params(const ParamVisitor<T>& v) {
        if (has_expand) {
            expand_conv.visit_params(v);
            expand_bn.visit_params(v);
        }
        dw_conv.visit_params(v);
        dw_bn.visit_params(v);
        project_conv.visit_params(v);
        project_bn.visit_params(v);
    }

    void visit_buffers(const BufferVisitor<T>& v) {
        if (has_expand) {
            expand_bn.visit_buffers(v);
        }
        dw_bn.visit_buffers(v);
        project_bn.visit_buffers(v);
    }

    Shape describe(const Shape& in, std::vector<LayerRow>& rows) const {
        Shape s = in;
        if (has_expand) {
            expand_conv.describe(s, rows);
            s = expand_conv.spec.out_shape(s);
            expand_bn.describe(s, rows);
            rows.push_back({expand_bn.name + ".relu6", s, 0, elementwise_macs(s), 0});
        }
        dw_conv.describe(s, rows);
        s = dw_conv.spec.out_shape(s);
        dw_bn.describe(s, rows);
        rows.push_back({dw_bn.name + ".relu6", s, 0, elementwise_macs(s), 0});
        project_conv.describe(s, rows);
        s = project_conv.spec.out_shape(s);
        project_bn.describe(s, rows);
        if (skip) {
            rows.push_back({project_bn.name + ".skip_add", s, 0, elementwise_macs(s), 0});
        }
        return s;
    }
};

/// MobileNetV2-style encoder with the classifier head removed; one parameter
/// set shared by both temporal streams.
template <typename T>
struct Encoder {
    EncoderConfig cfg;
    Conv2dLayer<T> stem_conv;
    BatchNorm2dLayer<T> stem_bn;
    std::array<std::vector<InvertedResidual<T>>, 5> stages;

    void build(const EncoderConfig& config, std::uint64_t seed) {
        cfg = config;
        cfg.validate();
        stem_conv.build("encoder.stem.conv", ConvSpec{3, cfg.stem_channels, 3, 3, 2, 1, 1, false},
                        seed);
        stem_bn.build("encoder.stem.bn", cfg.stem_channels);
        std::int64_t in_ch = cfg.stem_channels;
        for (std::size_t k = 0; k < 5; ++k) {
            int bi = 0;
            for (const auto& grp : cfg.stages[k]) {
                for (int r = 0; r < grp.repeats; ++r, ++bi) {
                    const int stride = r == 0 ? grp.stride : 1;
                    InvertedResidual<T> block;
                    block.build("encoder.s" + std::to_string(k) + ".b" + std::to_string(bi),
                                in_ch, grp.out_channels, grp.expand, stride, seed);
                    stages[k].push_back(std::move(block));
                    in_ch = grp.out_channels;
                }
            }
        }
    }

    /// Runs stage k on the stage k-1 feature (stage 0 consumes the image).
    Tensor<T> forward_stage(std::size_t k, const Tensor<T>& x, bool bn_training) {
        Tensor<T> h = x;
        if (k == 0) {
            h = relu6(stem_bn.forward(stem_conv.forward(h), bn_training));
        }
        for (auto& block : stages[k]) {
            h = block.forward(h, bn_training);
        }
        return h;
    }

    /// Full pyramid for one image, with no temporal exchange.
    FeaturePyramid<T> encode(const Tensor<T>& image, bool bn_training) {
        const Shape s = image.shape();
        if (s.h % 32 != 0 || s.w % 32 != 0) {
            throw std::invalid_argument("encoder input spatial dims must be divisible by 32, got " +
                                        s.str());
        }
        FeaturePyramid<T> pyr;
        Tensor<T> h = image;
        for (std::size_t k = 0; k < 5; ++k) {
            h = forward_stage(k, h, bn_training);
            pyr.f[k] = h;
        }
        return pyr;
    }

    void visit_params(const ParamVisitor<T>& v) {
        stem_conv.visit_params(v);
        stem_bn.visit_params(v);
        for (auto& stage : stages) {
            for (auto& block : stage) {
                block.visit_params(v);
            }
        }
    }

    void visit_buffers(const BufferVisitor<T>& v) {
        stem_bn.visit_buffers(v);
        for (auto& stage : stages) {
            for (auto& block : stage) {
                block.visit_buffers(v);
            }
        }
    }

    /// Per-stage output shapes and rows for one stream at the given input.
    std::array<Shape, 5> describe(const Shape& in, std::vector<LayerRow>& rows) const {
        std::array<Shape, 5> out{};
        Shape s = in;
        stem_conv.describe(s, rows);
        s = stem_conv.spec.out_shape(s);
        stem_bn.describe(s, rows);
        rows.push_back({"encoder.stem.relu6", s, 0, elementwise_macs(s), 0});
        for (std::size_t k = 0; k < 5; ++k) {
            for (const auto& block : stages[k]) {
                s = block.describe(s, rows);
            }
            out[k] = s;
        }
        return out;
    }
};

/// Replaces encoder weights from a named-tensor archive. Tensor names absent
/// from the archive keep their current values; archive entries that do not
/// belong to the encoder (for example decoder-side weights) are ignored.
/// A present-but-mismatched shape is an error naming the tensor.
inline void load_encoder_weights(Encoder<float>& enc, const Archive& ar) {
    auto copy_in = [&ar](const std::string& name, Tensor<float>& dst) {
        if (!ar.has(name)) {
            return;
        }
        Tensor<float> src = ar.get<float>(name);
        if (!(src.shape() == dst.shape())) {
            throw std::runtime_error("pretrained tensor '" + name + "' has shape " +
                                     src.shape().str() + ", expected " + dst.shape().str());
        }
        std::copy(src.data(), src.data() + src.numel(), dst.mutable_data());
    };
    enc.visit_params([&](const std::string& n, Tensor<float>& t, bool) { copy_in(n, t); });
    enc.visit_buffers([&](const std::string& n, Tensor<float>& t) { copy_in(n, t); });
}

}  // namespace lcdnet
