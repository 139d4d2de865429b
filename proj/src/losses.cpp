#include "isoseg/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace isoseg::loss {

namespace {

int64_t g_clamp_events = 0;

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw std::runtime_error(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                                 b.shape_str());
}

} // namespace

int64_t clamp_events() { return g_clamp_events; }

LossBreakdown total_coda(LossBreakdown c, const LossWeights& w) {
    const struct {
        const char* name;
        double v;
    } parts[] = {{"cyc", c.cyc},
                 {"adv_g", c.adv_g},
                 {"adv_d", c.adv_d},
                 {"sup", c.sup},
                 {"latent_recon", c.latent_recon}};
    for (const auto& p : parts)
        if (!std::isfinite(p.v))
            throw std::runtime_error(std::string("total_coda: non-finite component ") + p.name);
    c.total = w.lambda_cyc * c.cyc + w.lambda_adv * c.adv_g + w.lambda_sup * c.sup +
              w.lambda_latent * c.latent_recon;
    return c;
}

double cross_entropy_masked(const Tensor& Y, const Tensor& yhat,
                            const std::vector<uint8_t>& labeled, double scale, Tensor* dyhat) {
    check_same_shape(Y, yhat, "cross_entropy_masked");
    const int B = Y.dim(0);
    if (static_cast<int>(labeled.size()) != B)
        throw std::runtime_error("cross_entropy_masked: labeled flag count != batch size");
    const int64_t per = Y.numel() / B;

    int64_t active_pixels = 0;
    for (int b = 0; b < B; ++b)
        if (labeled[static_cast<size_t>(b)]) active_pixels += per;
    if (active_pixels == 0) return 0.0;

    constexpr double eps = 1e-7;
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(active_pixels);
    for (int b = 0; b < B; ++b) {
        if (!labeled[static_cast<size_t>(b)]) continue;
        const int64_t off = static_cast<int64_t>(b) * per;
        for (int64_t i = 0; i < per; ++i) {
            double p = yhat[off + i];
            if (p < eps || p > 1.0 - eps) {
                p = p < eps ? eps : 1.0 - eps;
                ++g_clamp_events;
            }
            const double y = Y[off + i];
            total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
            if (dyhat)
                (*dyhat)[off + i] +=
                    static_cast<float>(scale * inv_n * (-y / p + (1.0 - y) / (1.0 - p)));
        }
    }
    return total * inv_n;
}

double adversarial_d(const Tensor& scores_real, const Tensor& scores_fake, double scale,
                     Tensor* dreal, Tensor* dfake) {
    const int64_t nr = scores_real.numel(), nf = scores_fake.numel();
    double sr = 0.0, sf = 0.0;
    for (int64_t i = 0; i < nr; ++i) {
        const double d = scores_real[i] - 1.0;
        sr += d * d;
        if (dreal) (*dreal)[i] += static_cast<float>(scale * d / static_cast<double>(nr));
    }
    for (int64_t i = 0; i < nf; ++i) {
        const double d = scores_fake[i];
        sf += d * d;
        if (dfake) (*dfake)[i] += static_cast<float>(scale * d / static_cast<double>(nf));
    }
    return 0.5 * sr / static_cast<double>(nr) + 0.5 * sf / static_cast<double>(nf);
}

double adversarial_g(const Tensor& scores_fake, double scale, Tensor* dfake) {
    const int64_t n = scores_fake.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = scores_fake[i] - 1.0;
        s += d * d;
        if (dfake) (*dfake)[i] += static_cast<float>(scale * d / static_cast<double>(n));
    }
    return 0.5 * s / static_cast<double>(n);
}

double l1_mean(const Tensor& a, const Tensor& b, double scale, Tensor* da, Tensor* db) {
    check_same_shape(a, b, "l1_mean");
    const int64_t n = a.numel();
    double s = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += std::abs(d);
        const float g = static_cast<float>(scale * inv_n * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)));
        if (da) (*da)[i] += g;
        if (db) (*db)[i] -= g;
    }
    return s * inv_n;
}

} // namespace isoseg::loss
