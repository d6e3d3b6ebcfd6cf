#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lcdnet/common.hpp"
#include "lcdnet/ops.hpp"
#include "lcdnet/profiler.hpp"
#include "lcdnet/tensor.hpp"

namespace lcdnet {

/// Visitor over named trainable parameters. `decay` marks weight-decay
/// eligibility (batch-norm affine terms and GMM vectors opt out).
template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&, bool decay)>;

/// Visitor over named non-trainable buffers (batch-norm running statistics).
template <typename T>
using BufferVisitor = std::function<void(const std::string&, Tensor<T>&)>;

namespace init {

/// Kaiming-uniform fan-in init: U(-b, b) with b = sqrt(6 / fan_in), giving
/// Var(w) = 2 / fan_in. Seeded per parameter name so sibling modules never
/// shift each other's draws.
template <typename T>
void kaiming_uniform(Tensor<T>& w, std::int64_t fan_in, const std::string& name,
                     std::uint64_t seed) {
    Rng rng(fnv1a64(name) ^ seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    T* d = w.mutable_data();
    for (std::int64_t i = 0; i < w.numel(); ++i) {
        d[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
}

}  // namespace init

template <typename T>
struct Conv2dLayer {
    std::string name;
    ConvSpec spec;
    Tensor<T> weight;
    Tensor<T> bias;

    void build(std::string layer_name, const ConvSpec& s, std::uint64_t seed) {
        name = std::move(layer_name);
        spec = s;
        spec.validate();
        weight = Tensor<T>::zeros({spec.out_channels, spec.in_channels / spec.groups, spec.kh,
                                   spec.kw},
                                  true);
        const std::int64_t fan_in = (spec.in_channels / spec.groups) * spec.kh * spec.kw;
        init::kaiming_uniform(weight, fan_in, name + ".weight", seed);
        if (spec.has_bias) {
            bias = Tensor<T>::zeros({1, spec.out_channels, 1, 1}, true);
        }
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d(x, weight, spec.has_bias ? &bias : nullptr, spec);
    }

    void visit_params(const ParamVisitor<T>& v) {
        v(name + ".weight", weight, true);
        if (spec.has_bias) {
            v(name + ".bias", bias, true);
        }
    }

    void describe(const Shape& in, std::vector<LayerRow>& rows) const {
        const Shape out = spec.out_shape(in);
        rows.push_back({name, out, spec.param_count(), spec.weight_count() * out.h * out.w, 0});
    }
};

template <typename T>
struct BatchNorm2dLayer {
    std::string name;
    std::int64_t channels = 0;
    T momentum = T(0.1);
    T eps = T(1e-5);
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;

    void build(std::string layer_name, std::int64_t c) {
        name = std::move(layer_name);
        channels = c;
        gamma = Tensor<T>::full({1, c, 1, 1}, T(1), true);
        beta = Tensor<T>::zeros({1, c, 1, 1}, true);
        running_mean = Tensor<T>::zeros({1, c, 1, 1});
        running_var = Tensor<T>::full({1, c, 1, 1}, T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        return batchnorm2d(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }

    void visit_params(const ParamVisitor<T>& v) {
        v(name + ".gamma", gamma, false);
        v(name + ".beta", beta, false);
    }

    void visit_buffers(const BufferVisitor<T>& v) {
        v(name + ".running_mean", running_mean);
        v(name + ".running_var", running_var);
    }

    void describe(const Shape& in, std::vector<LayerRow>& rows) const {
        rows.push_back({name, in, 2 * channels, elementwise_macs(in, 2), 2 * channels});
    }
};

}  // namespace lcdnet
