#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lcdnet/ops.hpp"

namespace lcdnet {

/// Deterministic per-channel exchange mask: with fraction f, every
/// round(1/f)-th channel starting at 0 is swapped, so the default f = 1/2
/// swaps the even-indexed channels. No learned state.
inline std::vector<std::uint8_t> exchange_mask(std::int64_t channels, double fraction) {
    if (channels <= 0) {
        throw std::invalid_argument("exchange_mask needs a positive channel count");
    }
    if (fraction < 0.0 || fraction > 1.0) {
        throw std::invalid_argument("exchange fraction must lie in [0, 1]");
    }
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(channels), 0);
    if (fraction <= 0.0) {
        return mask;
    }
    const auto period = static_cast<std::int64_t>(std::llround(1.0 / fraction));
    for (std::int64_t c = 0; c < channels; ++c) {
        mask[static_cast<std::size_t>(c)] = (c % std::max<std::int64_t>(period, 1)) == 0;
    }
    return mask;
}

/// TIF: swaps the masked channels between the two temporal streams.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> tif_exchange(const Tensor<T>& f1, const Tensor<T>& f2,
                                             double fraction) {
    return exchange(f1, f2, exchange_mask(f1.shape().c, fraction));
}

}  // namespace lcdnet
