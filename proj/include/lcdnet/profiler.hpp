#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcdnet/tensor.hpp"

namespace lcdnet {

/// One profiled primitive: trainable parameter count and multiply-accumulate
/// count at batch size 1. `buffers` counts non-trainable state (batch-norm
/// running statistics), reported separately from the headline total.
struct LayerRow {
    std::string name;
    Shape out;
    std::int64_t params = 0;
    std::int64_t macs = 0;
    std::int64_t buffers = 0;
};

struct ComplexityReport {
    std::vector<LayerRow> rows;
    std::int64_t input_hw = 0;

    std::int64_t total_params() const;
    std::int64_t total_macs() const;
    std::int64_t total_buffers() const;

    /// FLOPs under the 1 FLOP/MAC and 2 FLOP/MAC conventions.
    double gflops_1x() const { return static_cast<double>(total_macs()) * 1e-9; }
    double gflops_2x() const { return 2.0 * static_cast<double>(total_macs()) * 1e-9; }

    /// Aligned text table with a totals row.
    std::string table() const;

    /// CSV with schema: layer,out_n,out_c,out_h,out_w,params,macs
    void write_csv(const std::string& path) const;
    static ComplexityReport read_csv(const std::string& path);
};

// Counting conventions (documented in the README):
//   conv        weight_count * out_h * out_w MACs (bias add not counted)
//   batch norm  2 ops per element (scale, shift)
//   activation  1 op per element
//   add/merge   1 op per element
//   upsample    4 MACs per output element
//   GMM         2*C*H*W + 10*C
//   TIF         0 params, 0 MACs

inline std::int64_t elementwise_macs(const Shape& s, std::int64_t ops_per_elem = 1) {
    return s.numel() * ops_per_elem;
}

}  // namespace lcdnet
