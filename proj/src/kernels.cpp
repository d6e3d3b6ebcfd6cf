#include "lcdnet/kernels.hpp"

#include <Eigen/Dense>

namespace lcdnet::detail {

namespace {

template <typename T>
using MatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using MutMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
void gemm_nn_impl(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t p,
                  bool accumulate) {
    MatMap<T> A(a, m, k);
    MatMap<T> B(b, k, p);
    MutMap<T> C(c, m, p);
    if (accumulate) {
        C.noalias() += A * B;
    } else {
        C.noalias() = A * B;
    }
}

template <typename T>
void gemm_tn_impl(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t p,
                  bool accumulate) {
    MatMap<T> A(a, m, k);
    MatMap<T> B(b, m, p);
    MutMap<T> C(c, k, p);
    if (accumulate) {
        C.noalias() += A.transpose() * B;
    } else {
        C.noalias() = A.transpose() * B;
    }
}

template <typename T>
void gemm_nt_impl(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t p,
                  bool accumulate) {
    MatMap<T> A(a, m, p);
    MatMap<T> B(b, k, p);
    MutMap<T> C(c, m, k);
    if (accumulate) {
        C.noalias() += A * B.transpose();
    } else {
        C.noalias() = A * B.transpose();
    }
}

}  // namespace

void gemm_nn(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate) {
    gemm_nn_impl(a, b, c, m, k, p, accumulate);
}
void gemm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate) {
    gemm_nn_impl(a, b, c, m, k, p, accumulate);
}
void gemm_tn(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate) {
    gemm_tn_impl(a, b, c, m, k, p, accumulate);
}
void gemm_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate) {
    gemm_tn_impl(a, b, c, m, k, p, accumulate);
}
void gemm_nt(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate) {
    gemm_nt_impl(a, b, c, m, k, p, accumulate);
}
void gemm_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
             std::int64_t p, bool accumulate) {
    gemm_nt_impl(a, b, c, m, k, p, accumulate);
}

}  // namespace lcdnet::detail
