#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "isoseg/tensor.hpp"

// Double-precision naive reference implementations used as oracles for the
// float kernels and layers, plus finite-difference helpers. Everything here
// favors independence and clarity over speed: plain loops, no im2col, no
// shared code with the library under test.
namespace refop {

using isoseg::Tensor;

// C[M,N] (+)= op(A)[M,K] * op(B)[K,N], row-major with leading dims.
// C0 (same layout, ldc) seeds the accumulation when non-null.
std::vector<double> gemm(int M, int N, int K, const float* A, int lda, bool ta, const float* B,
                         int ldb, bool tb, const double* C0, int ldc);

struct ConvOut {
    std::vector<double> y; // {N, OC, OH, OW} flattened
    int oh = 0, ow = 0;
};
// x {N,C,H,W}, w {OC, C*k*k}, b {OC}; same layout contract as the float layer.
ConvOut conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int k, int stride, int pad);

// Per-(n,c) normalization over spatial dims, population variance, eps in sqrt.
std::vector<double> instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                  double eps);

std::vector<double> maxpool2x(const Tensor& x);
std::vector<double> upsample2x(const Tensor& x);
std::vector<double> gap(const Tensor& x);

double max_abs_diff(const float* a, const double* b, int64_t n);
// max over i of |a-b| / max(floor, |b|).
double max_rel_diff(const float* a, const double* b, int64_t n, double floor);

// Central finite difference of f() with respect to one float slot. The step
// actually realized in float is measured and used as the divisor, so the
// returned slope carries no input-rounding error. Restores x before returning.
double fd_slope(const std::function<double()>& f, float& x, double h);

// Directional FD derivative of f along direction u over the given slots;
// compares a whole gradient at once, which is far better conditioned than
// per-element probes on deep float chains. Restores all slots.
double fd_directional(const std::function<double()>& f, const std::vector<float*>& xs,
                      const std::vector<float>& u, double h);

// |a-b| <= abs_tol + rel_tol * max(|a|,|b|)
bool close(double a, double b, double rel_tol, double abs_tol);

// Deterministic filler: independent uniform values in [lo,hi).
void fill_tensor(Tensor& t, uint64_t seed, float lo = -1.0f, float hi = 1.0f);

// Evenly spread deterministic index sample (includes first and last).
std::vector<int64_t> sample_indices(int64_t n, int64_t want);

} // namespace refop
