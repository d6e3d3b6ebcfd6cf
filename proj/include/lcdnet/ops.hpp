#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lcdnet/graph.hpp"
#include "lcdnet/kernels.hpp"
#include "lcdnet/tensor.hpp"

namespace lcdnet {

/// Parameters of a 2-D cross-correlation (no kernel flip).
struct ConvSpec {
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kh = 1;
    std::int64_t kw = 1;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t groups = 1;
    bool has_bias = true;

    void validate() const {
        if (in_channels <= 0 || out_channels <= 0) {
            throw std::invalid_argument("conv spec requires positive channel counts");
        }
        if (kh <= 0 || kw <= 0 || stride < 1 || padding < 0 || groups < 1) {
            throw std::invalid_argument("conv spec has invalid kernel/stride/padding/groups");
        }
        if (in_channels % groups != 0 || out_channels % groups != 0) {
            throw std::invalid_argument("conv groups must divide both channel counts");
        }
    }

    Shape out_shape(const Shape& in) const {
        const std::int64_t oh = (in.h + 2 * padding - kh) / stride + 1;
        const std::int64_t ow = (in.w + 2 * padding - kw) / stride + 1;
        return Shape{in.n, out_channels, oh, ow};
    }

    std::int64_t weight_count() const { return out_channels * (in_channels / groups) * kh * kw; }
    std::int64_t param_count() const { return weight_count() + (has_bias ? out_channels : 0); }
};

namespace detail {

// Finite-distance watch used by the gradient checker to keep test points away
// from activation kinks. Inactive outside tests.
inline thread_local double* kink_margin_slot = nullptr;

template <typename T>
inline void note_kink(T distance) {
    double* slot = kink_margin_slot;
    if (slot && static_cast<double>(distance) < *slot) {
        *slot = static_cast<double>(distance);
    }
}

// Exponent-bit tests; immune to floating-point optimization levels.
inline bool finite_bits(float v) {
    std::uint32_t b;
    std::memcpy(&b, &v, 4);
    return (b & 0x7f800000u) != 0x7f800000u;
}
inline bool finite_bits(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, 8);
    return (b & 0x7ff0000000000000ull) != 0x7ff0000000000000ull;
}

template <typename T>
void check_finite_span(const T* v, std::int64_t n, const char* op) {
    bool ok = true;
    for (std::int64_t i = 0; i < n; ++i) {
        ok &= finite_bits(v[i]);
    }
    if (!ok) {
        throw std::runtime_error(std::string(op) + " produced a non-finite value");
    }
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
    check_finite_span(t.data(), t.numel(), op);
}

template <typename T>
inline bool tape_active() {
    return Graph<T>::current() != nullptr;
}

template <typename T, typename... Ts>
bool wants_grad(const Tensor<T>& first, const Ts&... rest) {
    if constexpr (sizeof...(rest) == 0) {
        return first.requires_grad();
    } else {
        return first.requires_grad() || wants_grad(rest...);
    }
}

// -------------------------------------------------------------------------
// im2col / col2im for grouped convolution. `cols` is (icg*kh*kw) x (oh*ow),
// row-major, for one (sample, group) slice.
// -------------------------------------------------------------------------

/// Valid output-x range [lo, hi) for which ix = ox*stride - pad + kx lands
/// inside [0, w).
inline std::pair<std::int64_t, std::int64_t> ox_span(std::int64_t kx, std::int64_t stride,
                                                     std::int64_t pad, std::int64_t w,
                                                     std::int64_t ow) {
    const std::int64_t off = kx - pad;
    std::int64_t lo = off < 0 ? (-off + stride - 1) / stride : 0;
    std::int64_t hi = off >= w ? 0 : (w - 1 - off) / stride + 1;
    lo = std::clamp<std::int64_t>(lo, 0, ow);
    hi = std::clamp<std::int64_t>(hi, lo, ow);
    return {lo, hi};
}

template <typename T>
void im2col(const T* x, std::int64_t icg, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t oh,
            std::int64_t ow, T* cols) {
    std::int64_t row = 0;
    for (std::int64_t ic = 0; ic < icg; ++ic) {
        const T* plane = x + ic * h * w;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx, ++row) {
                T* dst = cols + row * oh * ow;
                const auto [lo, hi] = ox_span(kx, stride, pad, w, ow);
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    T* d = dst + oy * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(d, d + ow, T(0));
                        continue;
                    }
                    const T* src = plane + iy * w + kx - pad;
                    std::fill(d, d + lo, T(0));
                    if (stride == 1) {
                        std::memcpy(d + lo, src + lo, sizeof(T) * static_cast<std::size_t>(hi - lo));
                    } else {
                        for (std::int64_t ox = lo; ox < hi; ++ox) {
                            d[ox] = src[ox * stride];
                        }
                    }
                    std::fill(d + hi, d + ow, T(0));
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, std::int64_t icg, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t oh,
                std::int64_t ow, T* gx) {
    std::int64_t row = 0;
    for (std::int64_t ic = 0; ic < icg; ++ic) {
        T* plane = gx + ic * h * w;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx, ++row) {
                const T* src = cols + row * oh * ow;
                const auto [lo, hi] = ox_span(kx, stride, pad, w, ow);
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        continue;
                    }
                    const T* s = src + oy * ow;
                    T* d = plane + iy * w + kx - pad;
                    if (stride == 1) {
                        for (std::int64_t ox = lo; ox < hi; ++ox) {
                            d[ox] += s[ox];
                        }
                    } else {
                        for (std::int64_t ox = lo; ox < hi; ++ox) {
                            d[ox * stride] += s[ox];
                        }
                    }
                }
            }
        }
    }
}

// Depthwise kernels: a single-pass 3x3 path for the common case and
// tap-sweeps for generic kernel sizes.

template <typename T>
void depthwise3x3_forward_plane(const T* plane, const T* k, T* dst, std::int64_t h,
                                std::int64_t w, std::int64_t stride, std::int64_t pad,
                                std::int64_t oh, std::int64_t ow) {
    // interior ox range where the whole 3-wide window is in bounds
    std::int64_t lo = pad > 0 ? (pad + stride - 1) / stride : 0;
    std::int64_t hi = (w - 3 + pad) < 0 ? 0 : (w - 3 + pad) / stride + 1;
    lo = std::clamp<std::int64_t>(lo, 0, ow);
    hi = std::clamp<std::int64_t>(hi, lo, ow);
    for (std::int64_t oy = 0; oy < oh; ++oy) {
        const std::int64_t iy = oy * stride - pad;
        const T* r0 = (iy >= 0 && iy < h) ? plane + iy * w : nullptr;
        const T* r1 = (iy + 1 >= 0 && iy + 1 < h) ? plane + (iy + 1) * w : nullptr;
        const T* r2 = (iy + 2 >= 0 && iy + 2 < h) ? plane + (iy + 2) * w : nullptr;
        T* d = dst + oy * ow;
        auto guarded = [&](std::int64_t ox) {
            const std::int64_t ix = ox * stride - pad;
            T acc = 0;
            const T* rows[3] = {r0, r1, r2};
            for (int ky = 0; ky < 3; ++ky) {
                if (!rows[ky]) {
                    continue;
                }
                for (int kx = 0; kx < 3; ++kx) {
                    const std::int64_t x = ix + kx;
                    if (x >= 0 && x < w) {
                        acc += k[ky * 3 + kx] * rows[ky][x];
                    }
                }
            }
            d[ox] = acc;
        };
        for (std::int64_t ox = 0; ox < lo; ++ox) {
            guarded(ox);
        }
        if (r0 && r1 && r2) {
            const T* p0 = r0 - pad;
            const T* p1 = r1 - pad;
            const T* p2 = r2 - pad;
            if (stride == 1) {
                for (std::int64_t ox = lo; ox < hi; ++ox) {
                    d[ox] = k[0] * p0[ox] + k[1] * p0[ox + 1] + k[2] * p0[ox + 2] +
                            k[3] * p1[ox] + k[4] * p1[ox + 1] + k[5] * p1[ox + 2] +
                            k[6] * p2[ox] + k[7] * p2[ox + 1] + k[8] * p2[ox + 2];
                }
            } else {
                for (std::int64_t ox = lo; ox < hi; ++ox) {
                    const std::int64_t ix = ox * stride;
                    d[ox] = k[0] * p0[ix] + k[1] * p0[ix + 1] + k[2] * p0[ix + 2] +
                            k[3] * p1[ix] + k[4] * p1[ix + 1] + k[5] * p1[ix + 2] +
                            k[6] * p2[ix] + k[7] * p2[ix + 1] + k[8] * p2[ix + 2];
                }
            }
        } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) {
                guarded(ox);
            }
        }
        for (std::int64_t ox = hi; ox < ow; ++ox) {
            guarded(ox);
        }
    }
}

template <typename T>
void depthwise_forward_plane(const T* plane, const T* ker, T* dst, std::int64_t h, std::int64_t w,
                             std::int64_t kh, std::int64_t kw, std::int64_t stride,
                             std::int64_t pad, std::int64_t oh, std::int64_t ow) {
    if (kh == 3 && kw == 3) {
        depthwise3x3_forward_plane(plane, ker, dst, h, w, stride, pad, oh, ow);
        return;
    }
    std::fill(dst, dst + oh * ow, T(0));
    for (std::int64_t ky = 0; ky < kh; ++ky) {
        for (std::int64_t kx = 0; kx < kw; ++kx) {
            const T kv = ker[ky * kw + kx];
            const auto [lo, hi] = ox_span(kx, stride, pad, w, ow);
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                const std::int64_t iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) {
                    continue;
                }
                const T* src = plane + iy * w + kx - pad;
                T* d = dst + oy * ow;
                if (stride == 1) {
                    for (std::int64_t ox = lo; ox < hi; ++ox) {
                        d[ox] += kv * src[ox];
                    }
                } else {
                    for (std::int64_t ox = lo; ox < hi; ++ox) {
                        d[ox] += kv * src[ox * stride];
                    }
                }
            }
        }
    }
}

template <typename T>
void depthwise_backward_plane(const T* plane, const T* ker, const T* gout, T* gx, T* gw,
                              std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                              std::int64_t stride, std::int64_t pad, std::int64_t oh,
                              std::int64_t ow) {
    for (std::int64_t ky = 0; ky < kh; ++ky) {
        for (std::int64_t kx = 0; kx < kw; ++kx) {
            const T kv = ker[ky * kw + kx];
            const auto [lo, hi] = ox_span(kx, stride, pad, w, ow);
            T wacc = 0;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                const std::int64_t iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) {
                    continue;
                }
                const T* src = plane + iy * w + kx - pad;
                const T* g = gout + oy * ow;
                T* gd = gx ? gx + iy * w + kx - pad : nullptr;
                if (stride == 1) {
                    for (std::int64_t ox = lo; ox < hi; ++ox) {
                        wacc += g[ox] * src[ox];
                        if (gd) {
                            gd[ox] += kv * g[ox];
                        }
                    }
                } else {
                    for (std::int64_t ox = lo; ox < hi; ++ox) {
                        wacc += g[ox] * src[ox * stride];
                        if (gd) {
                            gd[ox * stride] += kv * g[ox];
                        }
                    }
                }
            }
            if (gw) {
                gw[ky * kw + kx] += wacc;
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 const ConvSpec& spec) {
    spec.validate();
    const Shape xs = x.shape();
    if (xs.c != spec.in_channels) {
        throw std::invalid_argument("conv2d input has " + std::to_string(xs.c) +
                                    " channels, spec expects " +
                                    std::to_string(spec.in_channels));
    }
    const std::int64_t icg = spec.in_channels / spec.groups;
    const std::int64_t ocg = spec.out_channels / spec.groups;
    const Shape want_w{spec.out_channels, icg, spec.kh, spec.kw};
    if (weight.shape() != want_w) {
        throw std::invalid_argument("conv2d weight shape " + weight.shape().str() +
                                    " does not match spec " + want_w.str());
    }
    if (spec.has_bias != (bias != nullptr && bias->defined())) {
        throw std::invalid_argument("conv2d bias presence does not match spec");
    }
    if (bias && bias->defined() && bias->numel() != spec.out_channels) {
        throw std::invalid_argument("conv2d bias must have out_channels elements");
    }
    const Shape os = spec.out_shape(xs);
    if (os.h <= 0 || os.w <= 0) {
        throw std::invalid_argument("conv2d produces a zero-sized output for input " + xs.str());
    }

    const std::int64_t h = xs.h, w = xs.w, oh = os.h, ow = os.w;
    const std::int64_t p = oh * ow;
    const std::int64_t k = icg * spec.kh * spec.kw;
    const bool pointwise = spec.kh == 1 && spec.kw == 1 && spec.stride == 1 && spec.padding == 0;
    const bool depthwise = icg == 1 && ocg == 1;

    Tensor<T> out = Tensor<T>::uninit(os);
    T* od = out.mutable_data();
    const T* xd = x.data();
    const T* wd = weight.data();

    if (depthwise && !pointwise) {
        for (std::int64_t n = 0; n < xs.n; ++n) {
            for (std::int64_t c = 0; c < xs.c; ++c) {
                detail::depthwise_forward_plane(xd + (n * xs.c + c) * h * w,
                                                wd + c * spec.kh * spec.kw,
                                                od + (n * os.c + c) * p, h, w, spec.kh, spec.kw,
                                                spec.stride, spec.padding, oh, ow);
            }
        }
    } else {
        std::vector<T> cols;
        if (!pointwise) {
            cols.resize(static_cast<std::size_t>(k * p));
        }
        for (std::int64_t n = 0; n < xs.n; ++n) {
            for (std::int64_t g = 0; g < spec.groups; ++g) {
                const T* xslice = xd + (n * xs.c + g * icg) * h * w;
                const T* cslice = xslice;
                if (!pointwise) {
                    detail::im2col(xslice, icg, h, w, spec.kh, spec.kw, spec.stride, spec.padding,
                                   oh, ow, cols.data());
                    cslice = cols.data();
                }
                detail::gemm_nn(wd + g * ocg * k, cslice, od + (n * os.c + g * ocg) * p, ocg, k, p,
                                false);
            }
        }
    }

    if (spec.has_bias) {
        const T* bd = bias->data();
        for (std::int64_t n = 0; n < os.n; ++n) {
            for (std::int64_t c = 0; c < os.c; ++c) {
                T* dst = od + (n * os.c + c) * p;
                const T bv = bd[c];
                for (std::int64_t i = 0; i < p; ++i) {
                    dst[i] += bv;
                }
            }
        }
    }
    detail::check_finite(out, "conv2d");

    Graph<T>* tape = Graph<T>::current();
    const bool track = tape && (x.requires_grad() || weight.requires_grad() ||
                                (bias && bias->defined() && bias->requires_grad()));
    if (track) {
        out.set_requires_grad(true);
        Tensor<T> xh = x, wh = weight;
        Tensor<T> bh = (bias && bias->defined()) ? *bias : Tensor<T>();
        tape->record(
            out,
            [xh, wh, bh, spec, os](std::span<const T> gout) mutable {
                const Shape xs2 = xh.shape();
                const std::int64_t icg2 = spec.in_channels / spec.groups;
                const std::int64_t ocg2 = spec.out_channels / spec.groups;
                const std::int64_t k2 = icg2 * spec.kh * spec.kw;
                const std::int64_t p2 = os.h * os.w;
                const std::int64_t h2 = xs2.h, w2 = xs2.w;
                const bool pw = spec.kh == 1 && spec.kw == 1 && spec.stride == 1 &&
                                spec.padding == 0;

                if (bh.defined() && bh.requires_grad()) {
                    T* gb = bh.grad_accum();
                    for (std::int64_t n = 0; n < xs2.n; ++n) {
                        for (std::int64_t c = 0; c < spec.out_channels; ++c) {
                            const T* gslice = gout.data() + (n * spec.out_channels + c) * p2;
                            T acc = 0;
                            for (std::int64_t i = 0; i < p2; ++i) {
                                acc += gslice[i];
                            }
                            gb[c] += acc;
                        }
                    }
                }

                const bool need_gw = wh.requires_grad();
                const bool need_gx = xh.requires_grad();
                if (!need_gw && !need_gx) {
                    return;
                }
                T* gw = need_gw ? wh.grad_accum() : nullptr;
                T* gx = nullptr;
                bool gx_fresh = false;
                if (need_gx) {
                    std::tie(gx, gx_fresh) = xh.grad_sink();
                    // scatter-style paths accumulate and need a zeroed base
                    if (gx_fresh && !pw) {
                        std::fill(gx, gx + xh.numel(), T(0));
                        gx_fresh = false;
                    }
                }
                const T* wd2 = wh.data();
                const T* xd2 = xh.data();

                const bool dw = icg2 == 1 && ocg2 == 1 && !pw;
                if (dw) {
                    for (std::int64_t n = 0; n < xs2.n; ++n) {
                        for (std::int64_t c = 0; c < xs2.c; ++c) {
                            detail::depthwise_backward_plane(
                                xd2 + (n * xs2.c + c) * h2 * w2, wd2 + c * spec.kh * spec.kw,
                                gout.data() + (n * spec.out_channels + c) * p2,
                                gx ? gx + (n * xs2.c + c) * h2 * w2 : nullptr,
                                gw ? gw + c * spec.kh * spec.kw : nullptr, h2, w2, spec.kh,
                                spec.kw, spec.stride, spec.padding, os.h, os.w);
                        }
                    }
                    return;
                }

                std::vector<T> cols, gcols;
                if (!pw) {
                    cols.resize(static_cast<std::size_t>(k2 * p2));
                    if (need_gx) {
                        gcols.resize(static_cast<std::size_t>(k2 * p2));
                    }
                }
                for (std::int64_t n = 0; n < xs2.n; ++n) {
                    for (std::int64_t g = 0; g < spec.groups; ++g) {
                        const T* gslice = gout.data() + (n * spec.out_channels + g * ocg2) * p2;
                        const T* xslice = xd2 + (n * xs2.c + g * icg2) * h2 * w2;
                        if (need_gw) {
                            const T* cslice = xslice;
                            if (!pw) {
                                detail::im2col(xslice, icg2, h2, w2, spec.kh, spec.kw, spec.stride,
                                               spec.padding, os.h, os.w, cols.data());
                                cslice = cols.data();
                            }
                            detail::gemm_nt(gslice, cslice, gw + g * ocg2 * k2, ocg2, k2, p2,
                                            true);
                        }
                        if (need_gx) {
                            T* gxslice = gx + (n * xs2.c + g * icg2) * h2 * w2;
                            if (pw) {
                                detail::gemm_tn(wd2 + g * ocg2 * k2, gslice, gxslice, ocg2, k2, p2,
                                                !gx_fresh);
                            } else {
                                detail::gemm_tn(wd2 + g * ocg2 * k2, gslice, gcols.data(), ocg2,
                                                k2, p2, false);
                                detail::col2im_add(gcols.data(), icg2, h2, w2, spec.kh, spec.kw,
                                                   spec.stride, spec.padding, os.h, os.w, gxslice);
                            }
                        }
                    }
                }
            },
            "conv2d");
    }
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec) {
    return conv2d(x, weight, static_cast<const Tensor<T>*>(nullptr), spec);
}

/// conv2d with groups == in_channels.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvSpec& spec) {
    if (spec.groups != spec.in_channels) {
        throw std::invalid_argument("depthwise_conv2d requires groups == in_channels");
    }
    return conv2d(x, weight, bias, spec);
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec) {
    return depthwise_conv2d(x, weight, static_cast<const Tensor<T>*>(nullptr), spec);
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& x, Fwd fwd, Bwd bwd, const char* name) {
    Tensor<T> out = Tensor<T>::uninit(x.shape());
    const T* xd = x.data();
    T* od = out.mutable_data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        od[i] = fwd(xd[i]);
    }
    check_finite(out, name);
    Graph<T>* tape = Graph<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xh = x, oh = out;
        tape->record(
            out,
            [xh, oh, bwd](std::span<const T> gout) mutable {
                const auto [gx, fresh] = xh.grad_sink();
                const T* xd2 = xh.data();
                const T* od2 = oh.data();
                const std::int64_t m = xh.numel();
                if (fresh) {
                    for (std::int64_t i = 0; i < m; ++i) {
                        gx[i] = gout[i] * bwd(xd2[i], od2[i]);
                    }
                } else {
                    for (std::int64_t i = 0; i < m; ++i) {
                        gx[i] += gout[i] * bwd(xd2[i], od2[i]);
                    }
                }
            },
            name);
    }
    return out;
}

/// Activations whose derivative is a 0/1 mask of x alone.
template <typename T, typename Fwd, typename Mask>
Tensor<T> masked_unary_op(const Tensor<T>& x, Fwd fwd, Mask mask, const char* name) {
    Tensor<T> out = Tensor<T>::uninit(x.shape());
    const T* xd = x.data();
    T* od = out.mutable_data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        od[i] = fwd(xd[i]);
    }
    Graph<T>* tape = Graph<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xh = x;
        tape->record(
            out,
            [xh, mask](std::span<const T> gout) mutable {
                const auto [gx, fresh] = xh.grad_sink();
                const T* xd2 = xh.data();
                const std::int64_t m = xh.numel();
                if (fresh) {
                    for (std::int64_t i = 0; i < m; ++i) {
                        gx[i] = mask(xd2[i]) ? gout[i] : T(0);
                    }
                } else {
                    for (std::int64_t i = 0; i < m; ++i) {
                        gx[i] += mask(xd2[i]) ? gout[i] : T(0);
                    }
                }
            },
            name);
    }
    return out;
}

}  // namespace detail

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    if (detail::kink_margin_slot) {
        const T* v = x.data();
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            detail::note_kink(std::abs(v[i]));
        }
    }
    Tensor<T> out = detail::masked_unary_op(
        x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0); }, "relu");
    detail::check_finite(out, "relu");
    return out;
}

template <typename T>
Tensor<T> relu6(const Tensor<T>& x) {
    if (detail::kink_margin_slot) {
        const T* v = x.data();
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            detail::note_kink(std::min(std::abs(v[i]), std::abs(v[i] - T(6))));
        }
    }
    // clamped output is finite by construction
    return detail::masked_unary_op(
        x, [](T v) { return std::min(std::max(v, T(0)), T(6)); },
        [](T v) { return v > T(0) && v < T(6); }, "relu6");
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; }, "tanh");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op(
        x,
        [](T v) {
            return v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                             : std::exp(v) / (T(1) + std::exp(v));
        },
        [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

/// y = 1/sqrt(x); requires x > 0 (enforced via the finite-value check).
template <typename T>
Tensor<T> rsqrt(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return T(1) / std::sqrt(v); },
        [](T, T y) { return T(-0.5) * y * y * y; }, "rsqrt");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary_op(
        x, [s](T v) { return v + s; }, [](T, T) { return T(1); }, "add_scalar");
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
    return detail::unary_op(
        x, [s](T v) { return v * s; }, [s](T, T) { return s; }, "mul_scalar");
}

// ---------------------------------------------------------------------------
// Broadcast binary ops
// ---------------------------------------------------------------------------

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    auto merge = [](std::int64_t da, std::int64_t db, const char* axis) {
        if (da == db || db == 1) return da;
        if (da == 1) return db;
        throw std::invalid_argument(std::string("broadcast mismatch on ") + axis);
    };
    return Shape{merge(a.n, b.n, "n"), merge(a.c, b.c, "c"), merge(a.h, b.h, "h"),
                 merge(a.w, b.w, "w")};
}

inline std::array<std::int64_t, 4> broadcast_strides(const Shape& s, const Shape& out) {
    std::array<std::int64_t, 4> st{s.c * s.h * s.w, s.h * s.w, s.w, 1};
    const std::int64_t dims[4] = {s.n, s.c, s.h, s.w};
    const std::int64_t odims[4] = {out.n, out.c, out.h, out.w};
    for (int i = 0; i < 4; ++i) {
        if (dims[i] == 1 && odims[i] != 1) {
            st[static_cast<std::size_t>(i)] = 0;
        }
    }
    return st;
}

/// Accumulates `g` (shaped `from`) into `dst` (shaped `to`), summing over
/// broadcast axes. Fixed loop order keeps this bit-deterministic.
template <typename T>
void reduce_into(const T* g, const Shape& from, T* dst, const Shape& to) {
    if (from == to) {
        const std::int64_t n = from.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            dst[i] += g[i];
        }
        return;
    }
    const auto st = broadcast_strides(to, from);
    std::int64_t i = 0;
    for (std::int64_t n = 0; n < from.n; ++n) {
        for (std::int64_t c = 0; c < from.c; ++c) {
            for (std::int64_t h = 0; h < from.h; ++h) {
                const std::int64_t base = n * st[0] + c * st[1] + h * st[2];
                for (std::int64_t w = 0; w < from.w; ++w, ++i) {
                    dst[base + w * st[3]] += g[i];
                }
            }
        }
    }
}

/// True when `s` broadcasts over the spatial axes only: (1|N, C, 1, 1).
inline bool channel_shaped(const Shape& s, const Shape& out) {
    return s.h == 1 && s.w == 1 && s.c == out.c && (s.n == 1 || s.n == out.n);
}

template <typename T, typename Op>
Tensor<T> binary_forward(const Tensor<T>& a, const Tensor<T>& b, Op op, const char* name) {
    const Shape os = broadcast_shape(a.shape(), b.shape());
    Tensor<T> out = Tensor<T>::uninit(os);
    T* od = out.mutable_data();
    const T* ad = a.data();
    const T* bd = b.data();
    const std::int64_t hw = os.h * os.w;
    if (a.shape() == b.shape()) {
        const std::int64_t n = os.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            od[i] = op(ad[i], bd[i]);
        }
    } else if (a.shape() == os && channel_shaped(b.shape(), os)) {
        for (std::int64_t n = 0; n < os.n; ++n) {
            for (std::int64_t c = 0; c < os.c; ++c) {
                const T bv = bd[(b.shape().n == 1 ? 0 : n) * os.c + c];
                const T* src = ad + (n * os.c + c) * hw;
                T* dst = od + (n * os.c + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    dst[i] = op(src[i], bv);
                }
            }
        }
    } else if (b.shape() == os && channel_shaped(a.shape(), os)) {
        for (std::int64_t n = 0; n < os.n; ++n) {
            for (std::int64_t c = 0; c < os.c; ++c) {
                const T av = ad[(a.shape().n == 1 ? 0 : n) * os.c + c];
                const T* src = bd + (n * os.c + c) * hw;
                T* dst = od + (n * os.c + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    dst[i] = op(av, src[i]);
                }
            }
        }
    } else {
        const auto sa = broadcast_strides(a.shape(), os);
        const auto sb = broadcast_strides(b.shape(), os);
        std::int64_t i = 0;
        for (std::int64_t n = 0; n < os.n; ++n) {
            for (std::int64_t c = 0; c < os.c; ++c) {
                const std::int64_t an = n * sa[0] + c * sa[1];
                const std::int64_t bn = n * sb[0] + c * sb[1];
                for (std::int64_t h = 0; h < os.h; ++h) {
                    const std::int64_t ah = an + h * sa[2];
                    const std::int64_t bh = bn + h * sb[2];
                    for (std::int64_t w = 0; w < os.w; ++w, ++i) {
                        od[i] = op(ad[ah + w * sa[3]], bd[bh + w * sb[3]]);
                    }
                }
            }
        }
    }
    check_finite(out, name);
    return out;
}

/// grad contribution of a broadcast multiply: dst += reduce(gout * other)
/// where `other` broadcasts to `os` and dst is shaped like `self`.
template <typename T>
void mul_backward_into(std::span<const T> gout, const Shape& os, const Tensor<T>& other,
                       Tensor<T>& self) {
    T* dst = self.grad_accum();
    const T* ov = other.data();
    const Shape ss = self.shape();
    const std::int64_t hw = os.h * os.w;
    if (ss == os && other.shape() == os) {
        for (std::int64_t i = 0; i < os.numel(); ++i) {
            dst[i] += gout[i] * ov[i];
        }
    } else if (ss == os && channel_shaped(other.shape(), os)) {
        for (std::int64_t n = 0; n < os.n; ++n) {
            for (std::int64_t c = 0; c < os.c; ++c) {
                const T b = ov[(other.shape().n == 1 ? 0 : n) * os.c + c];
                const T* g = gout.data() + (n * os.c + c) * hw;
                T* d = dst + (n * os.c + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    d[i] += g[i] * b;
                }
            }
        }
    } else if (channel_shaped(ss, os) && other.shape() == os) {
        for (std::int64_t n = 0; n < os.n; ++n) {
            for (std::int64_t c = 0; c < os.c; ++c) {
                const T* g = gout.data() + (n * os.c + c) * hw;
                const T* o = ov + (n * os.c + c) * hw;
                T acc = 0;
                for (std::int64_t i = 0; i < hw; ++i) {
                    acc += g[i] * o[i];
                }
                dst[(ss.n == 1 ? 0 : n) * os.c + c] += acc;
            }
        }
    } else {
        // generic: elementwise product in broadcast space, reduced to self
        const auto so = broadcast_strides(other.shape(), os);
        const auto sd = broadcast_strides(ss, os);
        std::int64_t i = 0;
        for (std::int64_t n = 0; n < os.n; ++n) {
            for (std::int64_t c = 0; c < os.c; ++c) {
                const std::int64_t on = n * so[0] + c * so[1];
                const std::int64_t dn = n * sd[0] + c * sd[1];
                for (std::int64_t h = 0; h < os.h; ++h) {
                    const std::int64_t oh2 = on + h * so[2];
                    const std::int64_t dh = dn + h * sd[2];
                    for (std::int64_t w = 0; w < os.w; ++w, ++i) {
                        dst[dh + w * sd[3]] += gout[i] * ov[oh2 + w * so[3]];
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = detail::binary_forward(a, b, [](T x, T y) { return x + y; }, "add");
    Graph<T>* tape = Graph<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ah = a, bh = b;
        const Shape os = out.shape();
        tape->record(
            out,
            [ah, bh, os](std::span<const T> gout) mutable {
                if (ah.requires_grad()) {
                    detail::reduce_into(gout.data(), os, ah.grad_accum(), ah.shape());
                }
                if (bh.requires_grad()) {
                    detail::reduce_into(gout.data(), os, bh.grad_accum(), bh.shape());
                }
            },
            "add");
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = detail::binary_forward(a, b, [](T x, T y) { return x * y; }, "mul");
    Graph<T>* tape = Graph<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ah = a, bh = b;
        const Shape os = out.shape();
        tape->record(
            out,
            [ah, bh, os](std::span<const T> gout) mutable {
                if (ah.requires_grad()) {
                    detail::mul_backward_into(gout, os, bh, ah);
                }
                if (bh.requires_grad()) {
                    detail::mul_backward_into(gout, os, ah, bh);
                }
            },
            "mul");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and shape ops
// ---------------------------------------------------------------------------

/// Mean over the channel axis: (N,C,H,W) -> (N,1,H,W).
template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {
    const Shape xs = x.shape();
    Tensor<T> out = Tensor<T>::zeros(Shape{xs.n, 1, xs.h, xs.w});
    const T* xd = x.data();
    T* od = out.mutable_data();
    const std::int64_t hw = xs.h * xs.w;
    for (std::int64_t n = 0; n < xs.n; ++n) {
        for (std::int64_t c = 0; c < xs.c; ++c) {
            const T* src = xd + (n * xs.c + c) * hw;
            T* dst = od + n * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                dst[i] += src[i];
            }
        }
        T* dst = od + n * hw;
        const T inv = T(1) / static_cast<T>(xs.c);
        for (std::int64_t i = 0; i < hw; ++i) {
            dst[i] *= inv;
        }
    }
    detail::check_finite(out, "channel_mean");
    Graph<T>* tape = Graph<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xh = x;
        tape->record(
            out,
            [xh, hw](std::span<const T> gout) mutable {
                const Shape s = xh.shape();
                T* gx = xh.grad_accum();
                const T inv = T(1) / static_cast<T>(s.c);
                for (std::int64_t n = 0; n < s.n; ++n) {
                    for (std::int64_t c = 0; c < s.c; ++c) {
                        T* dst = gx + (n * s.c + c) * hw;
                        const T* src = gout.data() + n * hw;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            dst[i] += src[i] * inv;
                        }
                    }
                }
            },
            "channel_mean");
    }
    return out;
}

/// Sum of all elements -> scalar (1,1,1,1).
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = 0;
    const T* xd = x.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        acc += xd[i];
    }
    Tensor<T> out = Tensor<T>::from_data(Shape{1, 1, 1, 1}, {acc});
    detail::check_finite(out, "sum_all");
    Graph<T>* tape = Graph<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xh = x;
        tape->record(
            out,
            [xh](std::span<const T> gout) mutable {
                T* gx = xh.grad_accum();
                const std::int64_t m = xh.numel();
                for (std::int64_t i = 0; i < m; ++i) {
                    gx[i] += gout[0];
                }
            },
            "sum_all");
    }
    return out;
}

/// Channel concatenation of two tensors with matching (N,H,W).
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape as = a.shape(), bs = b.shape();
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
        throw std::invalid_argument("concat_channels requires matching N/H/W, got " + as.str() +
                                    " and " + bs.str());
    }
    const Shape os{as.n, as.c + bs.c, as.h, as.w};
    Tensor<T> out = Tensor<T>::uninit(os);
    const std::int64_t hw = as.h * as.w;
    T* od = out.mutable_data();
    for (std::int64_t n = 0; n < as.n; ++n) {
        std::memcpy(od + n * os.c * hw, a.data() + n * as.c * hw,
                    sizeof(T) * static_cast<std::size_t>(as.c * hw));
        std::memcpy(od + (n * os.c + as.c) * hw, b.data() + n * bs.c * hw,
                    sizeof(T) * static_cast<std::size_t>(bs.c * hw));
    }
    Graph<T>* tape = Graph<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ah = a, bh = b;
        tape->record(
            out,
            [ah, bh, os, hw](std::span<const T> gout) mutable {
                const std::int64_t ca = ah.shape().c, cb = bh.shape().c;
                if (ah.requires_grad()) {
                    T* ga = ah.grad_accum();
                    for (std::int64_t n = 0; n < os.n; ++n) {
                        const T* src = gout.data() + n * os.c * hw;
                        T* dst = ga + n * ca * hw;
                        for (std::int64_t i = 0; i < ca * hw; ++i) {
                            dst[i] += src[i];
                        }
                    }
                }
                if (bh.requires_grad()) {
                    T* gb = bh.grad_accum();
                    for (std::int64_t n = 0; n < os.n; ++n) {
                        const T* src = gout.data() + (n * os.c + ca) * hw;
                        T* dst = gb + n * cb * hw;
                        for (std::int64_t i = 0; i < cb * hw; ++i) {
                            dst[i] += src[i];
                        }
                    }
                }
            },
            "concat_channels");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// In training mode, normalizes with batch statistics and updates the running
/// buffers in place (they are plain buffers, never differentiated). In eval
/// mode, normalizes with the running statistics.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                      T eps_bn) {
    const Shape xs = x.shape();
    const std::int64_t c = xs.c;
    if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
        running_var.numel() != c) {
        throw std::invalid_argument("batchnorm2d parameter vectors must have length C");
    }
    const std::int64_t hw = xs.h * xs.w;
    const std::int64_t count = xs.n * hw;

    std::vector<T> mean(static_cast<std::size_t>(c)), invstd(static_cast<std::size_t>(c));
    if (training) {
        if (count <= 0) {
            throw std::invalid_argument("batchnorm2d training mode needs a non-empty batch");
        }
        const T* xd = x.data();
        for (std::int64_t ci = 0; ci < c; ++ci) {
            T s = 0, sq = 0;
            for (std::int64_t n = 0; n < xs.n; ++n) {
                const T* src = xd + (n * c + ci) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    s += src[i];
                    sq += src[i] * src[i];
                }
            }
            const T m = s / static_cast<T>(count);
            T v = std::max(sq / static_cast<T>(count) - m * m, T(0));
            mean[static_cast<std::size_t>(ci)] = m;
            invstd[static_cast<std::size_t>(ci)] = T(1) / std::sqrt(v + eps_bn);
            // PyTorch convention: running update uses the unbiased variance.
            const T vu = count > 1 ? v * static_cast<T>(count) / static_cast<T>(count - 1) : v;
            T* rm = running_mean.mutable_data();
            T* rv = running_var.mutable_data();
            rm[ci] = (T(1) - momentum) * rm[ci] + momentum * m;
            rv[ci] = (T(1) - momentum) * rv[ci] + momentum * vu;
        }
    } else {
        const T* rm = running_mean.data();
        const T* rv = running_var.data();
        for (std::int64_t ci = 0; ci < c; ++ci) {
            mean[static_cast<std::size_t>(ci)] = rm[ci];
            invstd[static_cast<std::size_t>(ci)] = T(1) / std::sqrt(rv[ci] + eps_bn);
        }
    }

    Graph<T>* tape = Graph<T>::current();
    const bool track =
        tape && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());

    Tensor<T> out = Tensor<T>::uninit(xs);
    std::vector<T> xhat;  // saved only when the tape needs it
    if (track) {
        xhat.resize(static_cast<std::size_t>(xs.numel()));
    }
    {
        const T* xd = x.data();
        T* od = out.mutable_data();
        const T* gd = gamma.data();
        const T* bd = beta.data();
        for (std::int64_t n = 0; n < xs.n; ++n) {
            for (std::int64_t ci = 0; ci < c; ++ci) {
                const std::int64_t base = (n * c + ci) * hw;
                const T m = mean[static_cast<std::size_t>(ci)];
                const T is = invstd[static_cast<std::size_t>(ci)];
                const T g = gd[ci], b = bd[ci];
                if (track) {
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const T xh = (xd[base + i] - m) * is;
                        xhat[static_cast<std::size_t>(base + i)] = xh;
                        od[base + i] = g * xh + b;
                    }
                } else {
                    const T scale = g * is;
                    const T shift = b - scale * m;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        od[base + i] = scale * xd[base + i] + shift;
                    }
                }
            }
        }
    }
    detail::check_finite(out, "batchnorm2d");

    if (track) {
        out.set_requires_grad(true);
        Tensor<T> xh = x, gh = gamma, bh = beta;
        auto xhat_s = std::make_shared<std::vector<T>>(std::move(xhat));
        auto invstd_s = std::make_shared<std::vector<T>>(std::move(invstd));
        tape->record(
            out,
            [xh, gh, bh, xhat_s, invstd_s, training, hw, count](std::span<const T> gout) mutable {
                const Shape s = xh.shape();
                const std::int64_t cc = s.c;
                const std::vector<T>& xv = *xhat_s;
                const T* gd = gh.data();
                if (bh.requires_grad()) {
                    T* gb = bh.grad_accum();
                    for (std::int64_t ci = 0; ci < cc; ++ci) {
                        T acc = 0;
                        for (std::int64_t n = 0; n < s.n; ++n) {
                            const std::int64_t base = (n * cc + ci) * hw;
                            for (std::int64_t i = 0; i < hw; ++i) {
                                acc += gout[base + i];
                            }
                        }
                        gb[ci] += acc;
                    }
                }
                if (gh.requires_grad()) {
                    T* gg = gh.grad_accum();
                    for (std::int64_t ci = 0; ci < cc; ++ci) {
                        T acc = 0;
                        for (std::int64_t n = 0; n < s.n; ++n) {
                            const std::int64_t base = (n * cc + ci) * hw;
                            for (std::int64_t i = 0; i < hw; ++i) {
                                acc += gout[base + i] * xv[static_cast<std::size_t>(base + i)];
                            }
                        }
                        gg[ci] += acc;
                    }
                }
                if (xh.requires_grad()) {
                    T* gx = xh.grad_accum();
                    for (std::int64_t ci = 0; ci < cc; ++ci) {
                        const T gis = gd[ci] * (*invstd_s)[static_cast<std::size_t>(ci)];
                        if (training) {
                            T sum_g = 0, sum_gx = 0;
                            for (std::int64_t n = 0; n < s.n; ++n) {
                                const std::int64_t base = (n * cc + ci) * hw;
                                for (std::int64_t i = 0; i < hw; ++i) {
                                    sum_g += gout[base + i];
                                    sum_gx +=
                                        gout[base + i] * xv[static_cast<std::size_t>(base + i)];
                                }
                            }
                            const T mg = sum_g / static_cast<T>(count);
                            const T mgx = sum_gx / static_cast<T>(count);
                            for (std::int64_t n = 0; n < s.n; ++n) {
                                const std::int64_t base = (n * cc + ci) * hw;
                                for (std::int64_t i = 0; i < hw; ++i) {
                                    const T xhv = xv[static_cast<std::size_t>(base + i)];
                                    gx[base + i] += gis * (gout[base + i] - mg - xhv * mgx);
                                }
                            }
                        } else {
                            for (std::int64_t n = 0; n < s.n; ++n) {
                                const std::int64_t base = (n * cc + ci) * hw;
                                for (std::int64_t i = 0; i < hw; ++i) {
                                    gx[base + i] += gis * gout[base + i];
                                }
                            }
                        }
                    }
                }
            },
            "batchnorm2d");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bilinear upsampling (x2, half-pixel centers, align-corners off)
// ---------------------------------------------------------------------------

namespace detail {

struct LerpIndex {
    std::int64_t i0;
    std::int64_t i1;
    double w1;  // weight of i1; weight of i0 is 1 - w1
};

inline LerpIndex lerp_index_x2(std::int64_t o, std::int64_t in_size) {
    const double src = 0.5 * (static_cast<double>(o) + 0.5) - 0.5;
    double f = std::floor(src);
    std::int64_t i0 = static_cast<std::int64_t>(f);
    double w1 = src - f;
    std::int64_t i1 = i0 + 1;
    i0 = std::clamp<std::int64_t>(i0, 0, in_size - 1);
    i1 = std::clamp<std::int64_t>(i1, 0, in_size - 1);
    return {i0, i1, w1};
}

}  // namespace detail

template <typename T>
Tensor<T> upsample_bilinear_x2(const Tensor<T>& x) {
    const Shape xs = x.shape();
    if (xs.h < 1 || xs.w < 1) {
        throw std::invalid_argument("upsample_bilinear_x2 requires H, W >= 1");
    }
    const Shape os{xs.n, xs.c, xs.h * 2, xs.w * 2};
    std::vector<detail::LerpIndex> ly(static_cast<std::size_t>(os.h)),
        lx(static_cast<std::size_t>(os.w));
    for (std::int64_t o = 0; o < os.h; ++o) {
        ly[static_cast<std::size_t>(o)] = detail::lerp_index_x2(o, xs.h);
    }
    for (std::int64_t o = 0; o < os.w; ++o) {
        lx[static_cast<std::size_t>(o)] = detail::lerp_index_x2(o, xs.w);
    }

    Tensor<T> out = Tensor<T>::uninit(os);
    const T* xd = x.data();
    T* od = out.mutable_data();
    for (std::int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
        const T* src = xd + nc * xs.h * xs.w;
        T* dst = od + nc * os.h * os.w;
        for (std::int64_t oy = 0; oy < os.h; ++oy) {
            const auto& iy = ly[static_cast<std::size_t>(oy)];
            const T wy1 = static_cast<T>(iy.w1);
            const T wy0 = T(1) - wy1;
            const T* r0 = src + iy.i0 * xs.w;
            const T* r1 = src + iy.i1 * xs.w;
            T* d = dst + oy * os.w;
            for (std::int64_t ox = 0; ox < os.w; ++ox) {
                const auto& ix = lx[static_cast<std::size_t>(ox)];
                const T wx1 = static_cast<T>(ix.w1);
                const T wx0 = T(1) - wx1;
                d[ox] = wy0 * (wx0 * r0[ix.i0] + wx1 * r0[ix.i1]) +
                        wy1 * (wx0 * r1[ix.i0] + wx1 * r1[ix.i1]);
            }
        }
    }
    detail::check_finite(out, "upsample_bilinear_x2");

    Graph<T>* tape = Graph<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xh = x;
        // adjoint as a gather: per input index, the (output, weight) pairs
        // that read it; at most four for a x2 resize
        struct Stencil {
            std::int32_t o[4];
            T w[4];
            int n = 0;
        };
        auto build_adjoint = [](const std::vector<detail::LerpIndex>& lerp, std::int64_t in) {
            std::vector<Stencil> st(static_cast<std::size_t>(in));
            for (std::size_t o = 0; o < lerp.size(); ++o) {
                const auto& l = lerp[o];
                auto push = [&](std::int64_t i, double wgt) {
                    Stencil& s = st[static_cast<std::size_t>(i)];
                    s.o[s.n] = static_cast<std::int32_t>(o);
                    s.w[s.n] = static_cast<T>(wgt);
                    ++s.n;
                };
                push(l.i0, 1.0 - l.w1);
                push(l.i1, l.w1);
            }
            return st;
        };
        auto sy = std::make_shared<std::vector<Stencil>>(build_adjoint(ly, xs.h));
        auto sx = std::make_shared<std::vector<Stencil>>(build_adjoint(lx, xs.w));
        tape->record(
            out,
            [xh, sy, sx, os](std::span<const T> gout) mutable {
                const Shape s = xh.shape();
                const auto [gx, fresh] = xh.grad_sink();
                for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
                    T* gsrc = gx + nc * s.h * s.w;
                    const T* gdst = gout.data() + nc * os.h * os.w;
                    for (std::int64_t iy = 0; iy < s.h; ++iy) {
                        const Stencil& ry = (*sy)[static_cast<std::size_t>(iy)];
                        for (std::int64_t ix = 0; ix < s.w; ++ix) {
                            const Stencil& rx = (*sx)[static_cast<std::size_t>(ix)];
                            T acc = 0;
                            for (int a = 0; a < ry.n; ++a) {
                                const T* grow = gdst + ry.o[a] * os.w;
                                T rowacc = 0;
                                for (int b = 0; b < rx.n; ++b) {
                                    rowacc += rx.w[b] * grow[rx.o[b]];
                                }
                                acc += ry.w[a] * rowacc;
                            }
                            if (fresh) {
                                gsrc[iy * s.w + ix] = acc;
                            } else {
                                gsrc[iy * s.w + ix] += acc;
                            }
                        }
                    }
                }
            },
            "upsample_bilinear_x2");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spatial L2 norm per channel
// ---------------------------------------------------------------------------

/// y[n,c] = sqrt(sum_{h,w} x^2 + eps), shaped (N,C,1,1). eps must lie in the
/// documented range [0, 1e-5].
template <typename T>
Tensor<T> l2_norm_spatial(const Tensor<T>& x, T eps) {
    if (!(eps >= T(0) && eps <= T(1e-5))) {
        throw std::invalid_argument("l2_norm_spatial eps must be in [0, 1e-5]");
    }
    const Shape xs = x.shape();
    Tensor<T> out = Tensor<T>::uninit(Shape{xs.n, xs.c, 1, 1});
    const T* xd = x.data();
    T* od = out.mutable_data();
    const std::int64_t hw = xs.h * xs.w;
    for (std::int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
        const T* src = xd + nc * hw;
        T acc = 0;
        for (std::int64_t i = 0; i < hw; ++i) {
            acc += src[i] * src[i];
        }
        od[nc] = std::sqrt(acc + eps);
    }
    detail::check_finite(out, "l2_norm_spatial");

    Graph<T>* tape = Graph<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xh = x, oh = out;
        tape->record(
            out,
            [xh, oh, hw](std::span<const T> gout) mutable {
                const Shape s = xh.shape();
                T* gx = xh.grad_accum();
                const T* xd2 = xh.data();
                const T* od2 = oh.data();
                for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
                    const T norm = od2[nc];
                    if (norm == T(0)) {
                        continue;  // subgradient 0 at the all-zero channel with eps = 0
                    }
                    const T scale = gout[nc] / norm;
                    const T* src = xd2 + nc * hw;
                    T* dst = gx + nc * hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        dst[i] += scale * src[i];
                    }
                }
            },
            "l2_norm_spatial");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Channel exchange (TIF primitive)
// ---------------------------------------------------------------------------

/// Swaps masked channels between two same-shaped streams. No parameters; the
/// backward pass routes gradients through the same permutation.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> exchange(const Tensor<T>& f1, const Tensor<T>& f2,
                                         const std::vector<std::uint8_t>& mask) {
    const Shape s = f1.shape();
    if (!(s == f2.shape())) {
        throw std::invalid_argument("exchange requires matching shapes, got " + s.str() + " and " +
                                    f2.shape().str());
    }
    if (static_cast<std::int64_t>(mask.size()) != s.c) {
        throw std::invalid_argument("exchange mask must have one entry per channel");
    }
    const std::int64_t hw = s.h * s.w;
    auto build = [&](const Tensor<T>& keep, const Tensor<T>& take) {
        Tensor<T> out = Tensor<T>::uninit(s);
        T* od = out.mutable_data();
        for (std::int64_t n = 0; n < s.n; ++n) {
            for (std::int64_t c = 0; c < s.c; ++c) {
                const Tensor<T>& src = mask[static_cast<std::size_t>(c)] ? take : keep;
                std::memcpy(od + (n * s.c + c) * hw, src.data() + (n * s.c + c) * hw,
                            sizeof(T) * static_cast<std::size_t>(hw));
            }
        }
        return out;
    };
    Tensor<T> o1 = build(f1, f2);
    Tensor<T> o2 = build(f2, f1);

    Graph<T>* tape = Graph<T>::current();
    if (tape && (f1.requires_grad() || f2.requires_grad())) {
        auto route = [s, hw, mask](Tensor<T> keep, Tensor<T> take) {
            return [keep, take, s, hw, mask](std::span<const T> gout) mutable {
                for (std::int64_t n = 0; n < s.n; ++n) {
                    for (std::int64_t c = 0; c < s.c; ++c) {
                        Tensor<T>& dst_t = mask[static_cast<std::size_t>(c)] ? take : keep;
                        if (!dst_t.requires_grad()) {
                            continue;
                        }
                        T* dst = dst_t.grad_accum() + (n * s.c + c) * hw;
                        const T* src = gout.data() + (n * s.c + c) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            dst[i] += src[i];
                        }
                    }
                }
            };
        };
        o1.set_requires_grad(true);
        o2.set_requires_grad(true);
        tape->record(o1, route(f1, f2), "exchange");
        tape->record(o2, route(f2, f1), "exchange");
    }
    return {o1, o2};
}

// ---------------------------------------------------------------------------
// Binary cross entropy with logits
// ---------------------------------------------------------------------------

/// Mean over all elements of max(z,0) - z*y + log(1 + exp(-|z|)). Labels must
/// be exactly 0 or 1.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels) {
    const Shape s = logits.shape();
    if (!(s == labels.shape())) {
        throw std::invalid_argument("bce_with_logits shape mismatch: " + s.str() + " vs " +
                                    labels.shape().str());
    }
    const std::int64_t m = s.numel();
    if (m == 0) {
        throw std::invalid_argument("bce_with_logits on an empty tensor");
    }
    const T* zd = logits.data();
    const T* yd = labels.data();
    T acc = 0;
    for (std::int64_t i = 0; i < m; ++i) {
        if (yd[i] != T(0) && yd[i] != T(1)) {
            throw std::invalid_argument("bce_with_logits labels must be exactly 0 or 1");
        }
        const T z = zd[i];
        acc += std::max(z, T(0)) - z * yd[i] + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor<T> out = Tensor<T>::from_data(Shape{1, 1, 1, 1}, {acc / static_cast<T>(m)});
    detail::check_finite(out, "bce_with_logits");

    Graph<T>* tape = Graph<T>::current();
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> zh = logits, yh = labels;
        tape->record(
            out,
            [zh, yh, m](std::span<const T> gout) mutable {
                T* gz = zh.grad_accum();
                const T* zd2 = zh.data();
                const T* yd2 = yh.data();
                const T scale = gout[0] / static_cast<T>(m);
                for (std::int64_t i = 0; i < m; ++i) {
                    const T z = zd2[i];
                    const T sig = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                                            : std::exp(z) / (T(1) + std::exp(z));
                    gz[i] += scale * (sig - yd2[i]);
                }
            },
            "bce_with_logits");
    }
    return out;
}

}  // namespace lcdnet
