#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lcdnet/graph.hpp"
#include "lcdnet/ops.hpp"
#include "lcdnet/tensor.hpp"

namespace lcdnet {

/// RAII watch that records, across every relu/relu6 evaluated while alive,
/// the smallest distance of any activation input to a kink (0 or 6). The
/// finite-difference checker uses it to reject test points where a central
/// difference would straddle a non-differentiable point.
class KinkWatch {
public:
    KinkWatch() : prev_(detail::kink_margin_slot) { detail::kink_margin_slot = &margin_; }
    ~KinkWatch() { detail::kink_margin_slot = prev_; }
    KinkWatch(const KinkWatch&) = delete;
    KinkWatch& operator=(const KinkWatch&) = delete;

    double margin() const { return margin_; }

private:
    double margin_ = std::numeric_limits<double>::infinity();
    double* prev_;
};

/// Scalar-valued function of one tensor, 64-bit.
using TensorFn = std::function<Tensor<double>(const Tensor<double>&)>;

/// Central finite-difference check of d f / d x at 64-bit precision.
/// Returns max over elements of |analytic - central| / max(1, |central|).
/// When `indices` is non-empty only those flat elements are probed.
inline double finite_diff_check(const TensorFn& f, const Tensor<double>& x, double h,
                                const std::vector<std::int64_t>& indices = {}) {
    Tensor<double> probe = x.clone();
    probe.set_requires_grad(true);

    std::vector<double> analytic;
    {
        Graph<double> tape;
        Graph<double>::Scope scope(tape);
        Tensor<double> y = f(probe);
        if (y.numel() != 1) {
            throw std::invalid_argument("finite_diff_check requires a scalar-valued function");
        }
        tape.backward(y);
        analytic.assign(probe.grad().begin(), probe.grad().end());
        if (analytic.empty()) {
            analytic.assign(static_cast<std::size_t>(probe.numel()), 0.0);
        }
    }

    std::vector<std::int64_t> idx = indices;
    if (idx.empty()) {
        idx.resize(static_cast<std::size_t>(x.numel()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            idx[i] = static_cast<std::int64_t>(i);
        }
    }

    probe.set_requires_grad(false);
    double* pd = probe.mutable_data();
    double max_err = 0.0;
    for (std::int64_t i : idx) {
        const double saved = pd[i];
        pd[i] = saved + h;
        const double yp = f(probe).scalar();
        pd[i] = saved - h;
        const double ym = f(probe).scalar();
        pd[i] = saved;
        const double fd = (yp - ym) / (2.0 * h);
        const double err = std::abs(analytic[static_cast<std::size_t>(i)] - fd) /
                           std::max(1.0, std::abs(fd));
        if (err > max_err) {
            max_err = err;
        }
    }
    return max_err;
}

}  // namespace lcdnet
