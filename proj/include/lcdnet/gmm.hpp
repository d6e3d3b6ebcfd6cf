#pragma once

#include <string>
#include <vector>

#include "lcdnet/nn.hpp"

namespace lcdnet {

/// Gated Mechanism Module: per-channel gate built from an L2 spatial
/// embedding, a cross-channel competition normalizer and a 1 + tanh gating
/// function. Per batch element:
///   ed_c = alpha_c * sqrt(sum_{h,w} x_c^2 + eps)
///   n_c  = gamma_c / sqrt(mean_c(ed_c^2) + eps)
///   g_c  = 1 + tanh(ed_c * n_c + beta_c)
///   y    = x * g
/// `rms_normalizer` selects the mean-of-squares reading of the normalizer;
/// when cleared the alternative square-of-mean reading is used instead.
template <typename T>
struct Gmm {
    std::string name;
    Tensor<T> alpha, gamma, beta;  // each (1, C, 1, 1)
    T eps = T(1e-5);
    bool rms_normalizer = true;

    /// Identity at init: alpha = 1, gamma = 0, beta = 0, so g == 1 exactly.
    void build(std::string module_name, std::int64_t channels, T eps_value = T(1e-5)) {
        name = std::move(module_name);
        eps = eps_value;
        alpha = Tensor<T>::full({1, channels, 1, 1}, T(1), true);
        gamma = Tensor<T>::zeros({1, channels, 1, 1}, true);
        beta = Tensor<T>::zeros({1, channels, 1, 1}, true);
    }

    Tensor<T> gate(const Tensor<T>& x) const {
        if (x.shape().c != alpha.shape().c) {
            throw std::invalid_argument("gmm input has " + std::to_string(x.shape().c) +
                                        " channels, parameters expect " +
                                        std::to_string(alpha.shape().c));
        }
        Tensor<T> ed = mul(alpha, l2_norm_spatial(x, eps));
        Tensor<T> m;
        if (rms_normalizer) {
            m = channel_mean(mul(ed, ed));
        } else {
            Tensor<T> mc = channel_mean(ed);
            m = mul(mc, mc);
        }
        Tensor<T> n = mul(gamma, rsqrt(add_scalar(m, eps)));
        Tensor<T> g = add_scalar(tanh(add(mul(ed, n), beta)), T(1));
        return mul(x, g);
    }

    void visit_params(const ParamVisitor<T>& v) {
        v(name + ".alpha", alpha, false);
        v(name + ".gamma", gamma, false);
        v(name + ".beta", beta, false);
    }

    void describe(const Shape& in, std::vector<LayerRow>& rows) const {
        rows.push_back({name, in, 3 * alpha.shape().c,
                        2 * in.c * in.h * in.w + 10 * in.c, 0});
    }
};

}  // namespace lcdnet
