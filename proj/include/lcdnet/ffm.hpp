#pragma once

#include <string>
#include <vector>

#include "lcdnet/nn.hpp"

namespace lcdnet {

/// Feature Fusion Module. conv1 is a single 1x1 convolution applied to both
/// inputs; conv2 transforms the first product term. The canonical dataflow is
///   x1' = conv1(x1), x2' = conv1(x2)
///   s1  = relu(x1') * x2'
///   s2  = conv2(s1) + x2'
///   d0  = relu(s2 * x1')
/// With `literal` set, the module instead reproduces the published listing
/// verbatim, which drops conv1(x1) in favor of relu(x1) and skips conv2.
template <typename T>
struct Ffm {
    Conv2dLayer<T> conv1;
    Conv2dLayer<T> conv2;
    bool literal = false;

    void build(const std::string& name, std::int64_t in_planes1, std::int64_t in_planes2,
               std::uint64_t seed) {
        conv1.build(name + ".conv1", ConvSpec{in_planes1, in_planes2, 1, 1, 1, 0, 1, true}, seed);
        conv2.build(name + ".conv2", ConvSpec{in_planes2, in_planes2, 1, 1, 1, 0, 1, true}, seed);
    }

    Tensor<T> fuse(const Tensor<T>& x1, const Tensor<T>& x2) const {
        if (!(x1.shape() == x2.shape())) {
            throw std::invalid_argument("ffm inputs must share a shape, got " + x1.shape().str() +
                                        " and " + x2.shape().str());
        }
        if (x1.shape().c != conv1.spec.in_channels) {
            throw std::invalid_argument("ffm input has " + std::to_string(x1.shape().c) +
                                        " channels, conv1 expects " +
                                        std::to_string(conv1.spec.in_channels));
        }
        if (literal) {
            Tensor<T> o1 = relu(x1);
            Tensor<T> o2 = conv1.forward(x2);
            Tensor<T> ox = relu(mul(o1, o2));
            return relu(mul(add(ox, x2), x1));
        }
        Tensor<T> x1c = conv1.forward(x1);
        Tensor<T> x2c = conv1.forward(x2);
        Tensor<T> s1 = mul(relu(x1c), x2c);
        Tensor<T> s2 = add(conv2.forward(s1), x2c);
        return relu(mul(s2, x1c));
    }

    void visit_params(const ParamVisitor<T>& v) {
        conv1.visit_params(v);
        conv2.visit_params(v);
    }

    void describe(const Shape& in, std::vector<LayerRow>& rows) const {
        const Shape out = conv1.spec.out_shape(in);
        // conv1 parameters counted once, applied to both inputs
        rows.push_back({conv1.name, out, conv1.spec.param_count(),
                        2 * conv1.spec.weight_count() * out.h * out.w, 0});
        conv2.describe(out, rows);
        // relu(x1'), s1 mul, s2 add, final mul, final relu
        rows.push_back({conv1.name + ".elementwise", out, 0, elementwise_macs(out, 5), 0});
    }
};

}  // namespace lcdnet
