// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be reached after a runtime CPU check.
#include "isoseg/kernels.hpp"

#include <cstring>
#include <immintrin.h>
#include <vector>

namespace isoseg::kern::detail {

namespace {

// Cache blocking: Ap panel MC x KC stays in L2, Bp panel KC x NC in L3.
constexpr int MR = 6;
constexpr int NR = 16;
constexpr int KC = 256;
constexpr int MC = 96;
constexpr int NC = 2048;

inline float a_elem(const float* A, int lda, bool trans, int i, int k) {
    return trans ? A[static_cast<int64_t>(k) * lda + i] : A[static_cast<int64_t>(i) * lda + k];
}

inline float b_elem(const float* B, int ldb, bool trans, int k, int j) {
    return trans ? B[static_cast<int64_t>(j) * ldb + k] : B[static_cast<int64_t>(k) * ldb + j];
}

// Pack an mc x kc block of A into MR-row strips, zero-padding partial strips.
void pack_a(const float* A, int lda, bool trans, int i0, int k0, int mc, int kc, float* Ap) {
    for (int i = 0; i < mc; i += MR) {
        const int mr = mc - i < MR ? mc - i : MR;
        if (!trans) {
            const float* base = A + static_cast<int64_t>(i0 + i) * lda + k0;
            for (int k = 0; k < kc; ++k) {
                for (int r = 0; r < mr; ++r) Ap[k * MR + r] = base[static_cast<int64_t>(r) * lda + k];
                for (int r = mr; r < MR; ++r) Ap[k * MR + r] = 0.0f;
            }
        } else {
            for (int k = 0; k < kc; ++k) {
                for (int r = 0; r < mr; ++r) Ap[k * MR + r] = a_elem(A, lda, true, i0 + i + r, k0 + k);
                for (int r = mr; r < MR; ++r) Ap[k * MR + r] = 0.0f;
            }
        }
        Ap += static_cast<int64_t>(kc) * MR;
    }
}

// Pack a kc x nc block of B into NR-column strips, zero-padding partial strips.
void pack_b(const float* B, int ldb, bool trans, int k0, int j0, int kc, int nc, float* Bp) {
    for (int j = 0; j < nc; j += NR) {
        const int nr = nc - j < NR ? nc - j : NR;
        if (!trans) {
            const float* base = B + static_cast<int64_t>(k0) * ldb + j0 + j;
            if (nr == NR) {
                for (int k = 0; k < kc; ++k)
                    std::memcpy(Bp + k * NR, base + static_cast<int64_t>(k) * ldb, NR * sizeof(float));
            } else {
                for (int k = 0; k < kc; ++k) {
                    for (int c = 0; c < nr; ++c) Bp[k * NR + c] = base[static_cast<int64_t>(k) * ldb + c];
                    for (int c = nr; c < NR; ++c) Bp[k * NR + c] = 0.0f;
                }
            }
        } else {
            for (int k = 0; k < kc; ++k) {
                for (int c = 0; c < nr; ++c) Bp[k * NR + c] = b_elem(B, ldb, true, k0 + k, j0 + j + c);
                for (int c = nr; c < NR; ++c) Bp[k * NR + c] = 0.0f;
            }
        }
        Bp += static_cast<int64_t>(kc) * NR;
    }
}

// 6x16 FMA microkernel over one packed strip pair; acc is a 6x16 scratch tile.
void micro_6x16(int kc, const float* Ap, const float* Bp, float* acc) {
    __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
    __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
    __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
    __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
    __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
    __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
    for (int k = 0; k < kc; ++k) {
        const __m256 b0 = _mm256_loadu_ps(Bp + k * NR);
        const __m256 b1 = _mm256_loadu_ps(Bp + k * NR + 8);
        const float* a = Ap + k * MR;
        __m256 av;
        av = _mm256_broadcast_ss(a + 0);
        c00 = _mm256_fmadd_ps(av, b0, c00);
        c01 = _mm256_fmadd_ps(av, b1, c01);
        av = _mm256_broadcast_ss(a + 1);
        c10 = _mm256_fmadd_ps(av, b0, c10);
        c11 = _mm256_fmadd_ps(av, b1, c11);
        av = _mm256_broadcast_ss(a + 2);
        c20 = _mm256_fmadd_ps(av, b0, c20);
        c21 = _mm256_fmadd_ps(av, b1, c21);
        av = _mm256_broadcast_ss(a + 3);
        c30 = _mm256_fmadd_ps(av, b0, c30);
        c31 = _mm256_fmadd_ps(av, b1, c31);
        av = _mm256_broadcast_ss(a + 4);
        c40 = _mm256_fmadd_ps(av, b0, c40);
        c41 = _mm256_fmadd_ps(av, b1, c41);
        av = _mm256_broadcast_ss(a + 5);
        c50 = _mm256_fmadd_ps(av, b0, c50);
        c51 = _mm256_fmadd_ps(av, b1, c51);
    }
    _mm256_storeu_ps(acc + 0 * NR, c00);
    _mm256_storeu_ps(acc + 0 * NR + 8, c01);
    _mm256_storeu_ps(acc + 1 * NR, c10);
    _mm256_storeu_ps(acc + 1 * NR + 8, c11);
    _mm256_storeu_ps(acc + 2 * NR, c20);
    _mm256_storeu_ps(acc + 2 * NR + 8, c21);
    _mm256_storeu_ps(acc + 3 * NR, c30);
    _mm256_storeu_ps(acc + 3 * NR + 8, c31);
    _mm256_storeu_ps(acc + 4 * NR, c40);
    _mm256_storeu_ps(acc + 4 * NR + 8, c41);
    _mm256_storeu_ps(acc + 5 * NR, c50);
    _mm256_storeu_ps(acc + 5 * NR + 8, c51);
}

} // namespace

void sgemm_avx2(int M, int N, int K, const float* A, int lda, bool trans_a, const float* B,
                int ldb, bool trans_b, float* C, int ldc, bool accumulate) {
    thread_local std::vector<float> Ap, Bp;
    Ap.resize(static_cast<size_t>(MC + MR) * KC);
    Bp.resize(static_cast<size_t>(KC) * (NC + NR));
    alignas(32) float acc[MR * NR];

    for (int jc = 0; jc < N; jc += NC) {
        const int nc = N - jc < NC ? N - jc : NC;
        const int nc_strips = (nc + NR - 1) / NR;
        for (int pc = 0; pc < K; pc += KC) {
            const int kc = K - pc < KC ? K - pc : KC;
            const bool first_k = pc == 0;
            pack_b(B, ldb, trans_b, pc, jc, kc, nc, Bp.data());
            for (int ic = 0; ic < M; ic += MC) {
                const int mc = M - ic < MC ? M - ic : MC;
                const int mc_strips = (mc + MR - 1) / MR;
                pack_a(A, lda, trans_a, ic, pc, mc, kc, Ap.data());
                for (int js = 0; js < nc_strips; ++js) {
                    const float* bp = Bp.data() + static_cast<int64_t>(js) * kc * NR;
                    const int nr = nc - js * NR < NR ? nc - js * NR : NR;
                    for (int is = 0; is < mc_strips; ++is) {
                        const float* ap = Ap.data() + static_cast<int64_t>(is) * kc * MR;
                        const int mr = mc - is * MR < MR ? mc - is * MR : MR;
                        micro_6x16(kc, ap, bp, acc);
                        float* cblk = C + static_cast<int64_t>(ic + is * MR) * ldc + jc + js * NR;
                        const bool overwrite = first_k && !accumulate;
                        if (mr == MR && nr == NR) {
                            for (int r = 0; r < MR; ++r) {
                                float* crow = cblk + static_cast<int64_t>(r) * ldc;
                                __m256 t0 = _mm256_loadu_ps(acc + r * NR);
                                __m256 t1 = _mm256_loadu_ps(acc + r * NR + 8);
                                if (!overwrite) {
                                    t0 = _mm256_add_ps(t0, _mm256_loadu_ps(crow));
                                    t1 = _mm256_add_ps(t1, _mm256_loadu_ps(crow + 8));
                                }
                                _mm256_storeu_ps(crow, t0);
                                _mm256_storeu_ps(crow + 8, t1);
                            }
                        } else {
                            for (int r = 0; r < mr; ++r) {
                                float* crow = cblk + static_cast<int64_t>(r) * ldc;
                                for (int c = 0; c < nr; ++c) {
                                    if (overwrite)
                                        crow[c] = acc[r * NR + c];
                                    else
                                        crow[c] += acc[r * NR + c];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void axpy_avx2(int64_t n, float a, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void add_avx2(int64_t n, const float* x, const float* y, float* out) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_avx2(int64_t n, const float* x, const float* y, float* out) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_avx2(int64_t n, float a, float* x) {
    const __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void lrelu_fwd_avx2(int64_t n, float slope, const float* x, float* y) {
    const __m256 sl = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        const __m256 neg = _mm256_mul_ps(sl, v);
        const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(y + i, _mm256_blendv_ps(neg, v, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void lrelu_bwd_avx2(int64_t n, float slope, const float* x, const float* dy, float* dx) {
    const __m256 sl = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        const __m256 g = _mm256_loadu_ps(dy + i);
        const __m256 neg = _mm256_mul_ps(sl, g);
        const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_blendv_ps(neg, g, mask));
    }
    for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

} // namespace isoseg::kern::detail
