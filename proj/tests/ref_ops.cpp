#include "ref_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "isoseg/rng.hpp"

namespace refop {

std::vector<double> gemm(int M, int N, int K, const float* A, int lda, bool ta, const float* B,
                         int ldb, bool tb, const double* C0, int ldc) {
    std::vector<double> c(static_cast<size_t>(M) * N, 0.0);
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = C0 ? C0[static_cast<int64_t>(i) * ldc + j] : 0.0;
            for (int k = 0; k < K; ++k) {
                const double a = ta ? A[static_cast<int64_t>(k) * lda + i]
                                    : A[static_cast<int64_t>(i) * lda + k];
                const double b = tb ? B[static_cast<int64_t>(j) * ldb + k]
                                    : B[static_cast<int64_t>(k) * ldb + j];
                acc += a * b;
            }
            c[static_cast<size_t>(i) * N + j] = acc;
        }
    }
    return c;
}

ConvOut conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int k, int stride, int pad) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OC = w.dim(0);
    const int OH = (H + 2 * pad - k) / stride + 1;
    const int OW = (W + 2 * pad - k) / stride + 1;
    ConvOut out;
    out.oh = OH;
    out.ow = OW;
    out.y.assign(static_cast<size_t>(N) * OC * OH * OW, 0.0);
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = b[oc];
                    for (int c = 0; c < C; ++c)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                const int ih = oh * stride - pad + kh;
                                const int iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                const double xv = x.at(n, c, ih, iw);
                                const double wv = w[static_cast<int64_t>(oc) * C * k * k +
                                                    (static_cast<int64_t>(c) * k + kh) * k + kw];
                                acc += xv * wv;
                            }
                    out.y[((static_cast<size_t>(n) * OC + oc) * OH + oh) * OW + ow] = acc;
                }
    return out;
}

std::vector<double> instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                  double eps) {
    const int N = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    std::vector<double> y(static_cast<size_t>(x.numel()), 0.0);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * hw;
            double mean = 0.0;
            for (int64_t i = 0; i < hw; ++i) mean += x[off + i];
            mean /= static_cast<double>(hw);
            double var = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                const double d = x[off + i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(hw);
            const double istd = 1.0 / std::sqrt(var + eps);
            for (int64_t i = 0; i < hw; ++i)
                y[static_cast<size_t>(off + i)] = gamma[c] * (x[off + i] - mean) * istd + beta[c];
        }
    return y;
}

std::vector<double> maxpool2x(const Tensor& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OH = H / 2, OW = W / 2;
    std::vector<double> y(static_cast<size_t>(N) * C * OH * OW, 0.0);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double best = x.at(n, c, oh * 2, ow * 2);
                    best = std::max<double>(best, x.at(n, c, oh * 2, ow * 2 + 1));
                    best = std::max<double>(best, x.at(n, c, oh * 2 + 1, ow * 2));
                    best = std::max<double>(best, x.at(n, c, oh * 2 + 1, ow * 2 + 1));
                    y[((static_cast<size_t>(n) * C + c) * OH + oh) * OW + ow] = best;
                }
    return y;
}

std::vector<double> upsample2x(const Tensor& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<double> y(static_cast<size_t>(x.numel()) * 4, 0.0);
    const int OH = H * 2, OW = W * 2;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow)
                    y[((static_cast<size_t>(n) * C + c) * OH + oh) * OW + ow] =
                        x.at(n, c, oh / 2, ow / 2);
    return y;
}

std::vector<double> gap(const Tensor& x) {
    const int N = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    std::vector<double> y(static_cast<size_t>(N) * C, 0.0);
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) acc += x[nc * hw + i];
        y[static_cast<size_t>(nc)] = acc / static_cast<double>(hw);
    }
    return y;
}

double max_abs_diff(const float* a, const double* b, int64_t n) {
    double worst = 0.0;
    for (int64_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

double max_rel_diff(const float* a, const double* b, int64_t n, double floor) {
    double worst = 0.0;
    for (int64_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(floor, std::abs(b[i])));
    return worst;
}

double fd_slope(const std::function<double()>& f, float& x, double h) {
    const float x0 = x;
    const float xp = static_cast<float>(static_cast<double>(x0) + h);
    const float xm = static_cast<float>(static_cast<double>(x0) - h);
    if (xp == xm) throw std::runtime_error("fd_slope: step vanished in float");
    x = xp;
    const double fp = f();
    x = xm;
    const double fm = f();
    x = x0;
    return (fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm));
}

double fd_directional(const std::function<double()>& f, const std::vector<float*>& xs,
                      const std::vector<float>& u, double h) {
    if (xs.size() != u.size()) throw std::runtime_error("fd_directional: size mismatch");
    std::vector<float> x0(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) x0[i] = *xs[i];
    for (size_t i = 0; i < xs.size(); ++i)
        *xs[i] = static_cast<float>(static_cast<double>(x0[i]) + h * u[i]);
    const double fp = f();
    for (size_t i = 0; i < xs.size(); ++i)
        *xs[i] = static_cast<float>(static_cast<double>(x0[i]) - h * u[i]);
    const double fm = f();
    for (size_t i = 0; i < xs.size(); ++i) *xs[i] = x0[i];
    return (fp - fm) / (2.0 * h);
}

bool close(double a, double b, double rel_tol, double abs_tol) {
    return std::abs(a - b) <= abs_tol + rel_tol * std::max(std::abs(a), std::abs(b));
}

void fill_tensor(Tensor& t, uint64_t seed, float lo, float hi) {
    isoseg::Rng rng(isoseg::Rng::splitmix64(seed));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = lo + static_cast<float>(rng.uniform()) * (hi - lo);
}

std::vector<int64_t> sample_indices(int64_t n, int64_t want) {
    std::vector<int64_t> idx;
    if (n <= 0) return idx;
    if (want >= n) {
        for (int64_t i = 0; i < n; ++i) idx.push_back(i);
        return idx;
    }
    for (int64_t j = 0; j < want; ++j) idx.push_back(j * (n - 1) / (want - 1));
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

} // namespace refop
