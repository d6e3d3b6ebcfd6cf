#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lcdnet::gradsuite {

struct CheckResult {
    std::string name;
    double max_err = 0.0;
};

/// Central finite-difference checks of every differentiable operation at
/// 64-bit precision, `trials` random inputs each. Returns the worst relative
/// error per operation.
std::vector<CheckResult> run_op_checks(int trials, std::uint64_t seed);

/// The composite blocks: FFM, GMM (both normalizer readings), one decoder
/// level, and a tiny full model on 2x3x32x32 inputs.
std::vector<CheckResult> run_composite_checks(int trials, std::uint64_t seed);

/// Tolerance shared by every check.
inline constexpr double kTolerance = 1e-4;

}  // namespace lcdnet::gradsuite
