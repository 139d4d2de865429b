#include "isoseg/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>

namespace isoseg::kern {

namespace detail {
void sgemm_scalar(int, int, int, const float*, int, bool, const float*, int, bool, float*, int, bool);
void axpy_scalar(int64_t, float, const float*, float*);
void add_scalar(int64_t, const float*, const float*, float*);
void mul_scalar(int64_t, const float*, const float*, float*);
void scale_scalar(int64_t, float, float*);
void lrelu_fwd_scalar(int64_t, float, const float*, float*);
void lrelu_bwd_scalar(int64_t, float, const float*, const float*, float*);
#ifdef ISOSEG_AVX2_BUILT
void sgemm_avx2(int, int, int, const float*, int, bool, const float*, int, bool, float*, int, bool);
void axpy_avx2(int64_t, float, const float*, float*);
void add_avx2(int64_t, const float*, const float*, float*);
void mul_avx2(int64_t, const float*, const float*, float*);
void scale_avx2(int64_t, float, float*);
void lrelu_fwd_avx2(int64_t, float, const float*, float*);
void lrelu_bwd_avx2(int64_t, float, const float*, const float*, float*);
#endif
} // namespace detail

namespace {

SimdLevel detect_level() {
#ifdef ISOSEG_AVX2_BUILT
    if (const char* env = std::getenv("ISOSEG_SIMD")) {
        const std::string v(env);
        if (v == "scalar") return SimdLevel::Scalar;
        if (v == "avx2") return SimdLevel::Avx2;
    }
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return SimdLevel::Avx2;
#endif
    return SimdLevel::Scalar;
}

SimdLevel g_level = detect_level();

} // namespace

SimdLevel active_level() { return g_level; }

SimdLevel set_level(SimdLevel lvl) {
    const SimdLevel prev = g_level;
#ifdef ISOSEG_AVX2_BUILT
    g_level = lvl;
#else
    g_level = SimdLevel::Scalar;
    (void)lvl;
#endif
    return prev;
}

const char* level_name(SimdLevel lvl) { return lvl == SimdLevel::Avx2 ? "avx2" : "scalar"; }

void sgemm(int M, int N, int K, const float* A, int lda, bool trans_a, const float* B, int ldb,
           bool trans_b, float* C, int ldc, bool accumulate) {
#ifdef ISOSEG_AVX2_BUILT
    if (g_level == SimdLevel::Avx2) {
        detail::sgemm_avx2(M, N, K, A, lda, trans_a, B, ldb, trans_b, C, ldc, accumulate);
        return;
    }
#endif
    detail::sgemm_scalar(M, N, K, A, lda, trans_a, B, ldb, trans_b, C, ldc, accumulate);
}

void axpy(int64_t n, float a, const float* x, float* y) {
#ifdef ISOSEG_AVX2_BUILT
    if (g_level == SimdLevel::Avx2) return detail::axpy_avx2(n, a, x, y);
#endif
    detail::axpy_scalar(n, a, x, y);
}

void add(int64_t n, const float* x, const float* y, float* out) {
#ifdef ISOSEG_AVX2_BUILT
    if (g_level == SimdLevel::Avx2) return detail::add_avx2(n, x, y, out);
#endif
    detail::add_scalar(n, x, y, out);
}

void mul(int64_t n, const float* x, const float* y, float* out) {
#ifdef ISOSEG_AVX2_BUILT
    if (g_level == SimdLevel::Avx2) return detail::mul_avx2(n, x, y, out);
#endif
    detail::mul_scalar(n, x, y, out);
}

void scale(int64_t n, float a, float* x) {
#ifdef ISOSEG_AVX2_BUILT
    if (g_level == SimdLevel::Avx2) return detail::scale_avx2(n, a, x);
#endif
    detail::scale_scalar(n, a, x);
}

void lrelu_fwd(int64_t n, float slope, const float* x, float* y) {
#ifdef ISOSEG_AVX2_BUILT
    if (g_level == SimdLevel::Avx2) return detail::lrelu_fwd_avx2(n, slope, x, y);
#endif
    detail::lrelu_fwd_scalar(n, slope, x, y);
}

void lrelu_bwd(int64_t n, float slope, const float* x, const float* dy, float* dx) {
#ifdef ISOSEG_AVX2_BUILT
    if (g_level == SimdLevel::Avx2) return detail::lrelu_bwd_avx2(n, slope, x, dy, dx);
#endif
    detail::lrelu_bwd_scalar(n, slope, x, dy, dx);
}

double sum(int64_t n, const float* x) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double sum_sq(int64_t n, const float* x) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
    return s;
}

double sum_abs_diff(int64_t n, const float* x, const float* y) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(x[i]) - y[i]);
    return s;
}

void im2col(const float* img, int C, int H, int W, int KH, int KW, int stride, int pad,
            float* col) {
    const int OH = conv_out_dim(H, KH, stride, pad);
    const int OW = conv_out_dim(W, KW, stride, pad);
    const int64_t ncols = static_cast<int64_t>(OH) * OW;
    for (int c = 0; c < C; ++c) {
        const float* plane = img + static_cast<int64_t>(c) * H * W;
        for (int kh = 0; kh < KH; ++kh) {
            for (int kw = 0; kw < KW; ++kw) {
                float* dst = col + (static_cast<int64_t>(c) * KH * KW + kh * KW + kw) * ncols;
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= H) {
                        std::memset(dst + static_cast<int64_t>(oh) * OW, 0,
                                    sizeof(float) * static_cast<size_t>(OW));
                        continue;
                    }
                    const float* src = plane + static_cast<int64_t>(ih) * W;
                    float* drow = dst + static_cast<int64_t>(oh) * OW;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kw;
                        drow[ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* col, int C, int H, int W, int KH, int KW, int stride, int pad,
            float* img) {
    const int OH = conv_out_dim(H, KH, stride, pad);
    const int OW = conv_out_dim(W, KW, stride, pad);
    const int64_t ncols = static_cast<int64_t>(OH) * OW;
    std::memset(img, 0, sizeof(float) * static_cast<size_t>(C) * H * W);
    for (int c = 0; c < C; ++c) {
        float* plane = img + static_cast<int64_t>(c) * H * W;
        for (int kh = 0; kh < KH; ++kh) {
            for (int kw = 0; kw < KW; ++kw) {
                const float* src = col + (static_cast<int64_t>(c) * KH * KW + kh * KW + kw) * ncols;
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= H) continue;
                    float* drow = plane + static_cast<int64_t>(ih) * W;
                    const float* srow = src + static_cast<int64_t>(oh) * OW;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kw;
                        if (iw >= 0 && iw < W) drow[iw] += srow[ow];
                    }
                }
            }
        }
    }
}

} // namespace isoseg::kern
