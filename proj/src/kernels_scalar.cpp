#include "isoseg/kernels.hpp"

#include <cstring>

// Scalar reference kernels. These define the semantics; SIMD variants must
// match them within floating-point reassociation tolerance.
namespace isoseg::kern::detail {

void sgemm_scalar(int M, int N, int K, const float* A, int lda, bool trans_a, const float* B,
                  int ldb, bool trans_b, float* C, int ldc, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        float* crow = C + static_cast<int64_t>(i) * ldc;
        if (!accumulate) std::memset(crow, 0, sizeof(float) * static_cast<size_t>(N));
        for (int k = 0; k < K; ++k) {
            const float a = trans_a ? A[static_cast<int64_t>(k) * lda + i]
                                    : A[static_cast<int64_t>(i) * lda + k];
            if (a == 0.0f) continue;
            const float* brow = trans_b ? nullptr : B + static_cast<int64_t>(k) * ldb;
            if (trans_b) {
                for (int j = 0; j < N; ++j) crow[j] += a * B[static_cast<int64_t>(j) * ldb + k];
            } else {
                for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
            }
        }
    }
}

void axpy_scalar(int64_t n, float a, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar(int64_t n, const float* x, const float* y, float* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_scalar(int64_t n, const float* x, const float* y, float* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_scalar(int64_t n, float a, float* x) {
    for (int64_t i = 0; i < n; ++i) x[i] *= a;
}

void lrelu_fwd_scalar(int64_t n, float slope, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void lrelu_bwd_scalar(int64_t n, float slope, const float* x, const float* dy, float* dx) {
    for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

} // namespace isoseg::kern::detail
