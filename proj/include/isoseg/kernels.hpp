#pragma once

#include <cstdint>

// Low-level compute kernels. Every kernel has a scalar reference
// implementation; hot kernels additionally have an AVX2/FMA variant selected
// at runtime. Scalar and SIMD paths are equivalence-tested; transcendental
// activations stay scalar so both paths round identically.
namespace isoseg::kern {

enum class SimdLevel { Scalar, Avx2 };

// Highest level supported by the running CPU (honors ISOSEG_SIMD env
// override: "scalar" or "avx2").
SimdLevel active_level();
// Force a level (tests only). Returns the previous level.
SimdLevel set_level(SimdLevel lvl);
const char* level_name(SimdLevel lvl);

// C[M,N] (+)= op(A)[M,K] * op(B)[K,N]; row-major with leading dimensions.
// trans_a/trans_b select op = transpose. accumulate=false overwrites C.
void sgemm(int M, int N, int K, const float* A, int lda, bool trans_a, const float* B, int ldb,
           bool trans_b, float* C, int ldc, bool accumulate);

// y[i] += a * x[i]
void axpy(int64_t n, float a, const float* x, float* y);
// out[i] = x[i] + y[i]
void add(int64_t n, const float* x, const float* y, float* out);
// out[i] = x[i] * y[i]
void mul(int64_t n, const float* x, const float* y, float* out);
// x[i] *= a
void scale(int64_t n, float a, float* x);
// Leaky ReLU forward: y = x > 0 ? x : slope * x (slope 0 gives plain ReLU).
void lrelu_fwd(int64_t n, float slope, const float* x, float* y);
// Leaky ReLU backward against the forward input.
void lrelu_bwd(int64_t n, float slope, const float* x, const float* dy, float* dx);

// Serial double-precision reductions (deterministic regardless of SIMD level).
double sum(int64_t n, const float* x);
double sum_sq(int64_t n, const float* x);
double sum_abs_diff(int64_t n, const float* x, const float* y);

// im2col for NCHW convolution. Column buffer layout: [C*KH*KW, OH*OW] per
// image, images concatenated along columns -> [C*KH*KW, N*OH*OW].
void im2col(const float* img, int C, int H, int W, int KH, int KW, int stride, int pad,
            float* col);
// Scatter-add transpose of im2col (gradient path).
void col2im(const float* col, int C, int H, int W, int KH, int KW, int stride, int pad,
            float* img);

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

} // namespace isoseg::kern
