#pragma once

#include <cstdint>

namespace lcdnet::detail {

// Row-major matrix products backing the convolution kernels. Each call runs
// on the calling thread with a fixed accumulation order, so results do not
// depend on any parallel schedule.

/// C (MxP) = A (MxK) * B (KxP), accumulating into C when `accumulate`.
void gemm_nn(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate);
void gemm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate);

/// C (KxP) = A^T * B where A is stored (MxK) row-major and B is (MxP).
void gemm_tn(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate);

/// C (MxK) = A (MxP) * B^T where B is stored (KxP) row-major.
void gemm_nt(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate);

}  // namespace lcdnet::detail
