#pragma once

#include <cstdint>
#include <vector>

#include "isoseg/tensor.hpp"

namespace isoseg::loss {

struct LossWeights {
    double lambda_cyc = 10.0;
    double lambda_adv = 1.0;
    double lambda_sup = 100.0;
    double lambda_latent = 1.0; // content/style variant only
};

struct LossBreakdown {
    double cyc = 0.0;
    double adv_g = 0.0;
    double adv_d = 0.0;
    double sup = 0.0;
    double latent_recon = 0.0;
    double total = 0.0;
};

// Weighted composition. adv_d is the discriminator's mirror objective and by
// definition stays out of total. Throws on a non-finite component, naming it.
LossBreakdown total_coda(LossBreakdown components, const LossWeights& w);

// Pixel-mean binary cross-entropy over labeled samples only. Y in {0,1},
// yhat clamped into [eps, 1-eps] with eps=1e-7 (clamp events are counted).
// Returns 0 with an all-false mask; gradients of unlabeled samples are
// exactly 0. If dyhat is non-null, scale * dL/dyhat is accumulated into it.
double cross_entropy_masked(const Tensor& Y, const Tensor& yhat,
                            const std::vector<uint8_t>& labeled, double scale = 1.0,
                            Tensor* dyhat = nullptr);

// Least-squares adversarial objectives over raw score maps.
// D side: 1/2 mean((real-1)^2) + 1/2 mean(fake^2).
double adversarial_d(const Tensor& scores_real, const Tensor& scores_fake, double scale = 1.0,
                     Tensor* dreal = nullptr, Tensor* dfake = nullptr);
// G side: 1/2 mean((fake-1)^2).
double adversarial_g(const Tensor& scores_fake, double scale = 1.0, Tensor* dfake = nullptr);

// Mean absolute difference; serves both the image cycle loss and the latent
// reconstruction loss. Either gradient side may be requested.
double l1_mean(const Tensor& a, const Tensor& b, double scale = 1.0, Tensor* da = nullptr,
               Tensor* db = nullptr);

inline double cycle_l1(const Tensor& x, const Tensor& x_rec, double scale = 1.0,
                       Tensor* dx_rec = nullptr) {
    return l1_mean(x, x_rec, scale, nullptr, dx_rec);
}

inline double latent_recon(const Tensor& latent, const Tensor& latent_re, double scale = 1.0,
                           Tensor* dlatent = nullptr, Tensor* dlatent_re = nullptr) {
    return l1_mean(latent, latent_re, scale, dlatent, dlatent_re);
}

// Number of predictions clamped away from {0,1} since process start.
int64_t clamp_events();

} // namespace isoseg::loss
