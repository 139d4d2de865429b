#include "isoseg/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "isoseg/kernels.hpp"

namespace isoseg::nn {

namespace {

void check(bool ok, const char* msg) {
    if (!ok) throw std::runtime_error(msg);
}

std::vector<float>& scratch_a() {
    thread_local std::vector<float> buf;
    return buf;
}

std::vector<float>& scratch_b() {
    thread_local std::vector<float> buf;
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_c, int out_c, int k, int stride, int pad, float gain)
    : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), gain_(gain) {
    w_.name = name + ".w";
    w_.w = Tensor({out_c, in_c * k * k});
    w_.g = Tensor({out_c, in_c * k * k});
    b_.name = name + ".b";
    b_.w = Tensor({out_c});
    b_.g = Tensor({out_c});
}

void Conv2d::init(Rng& rng) {
    const float fan_in = static_cast<float>(in_c_ * k_ * k_);
    const float stddev = std::sqrt(gain_ / fan_in);
    for (int64_t i = 0; i < w_.w.numel(); ++i) w_.w[i] = stddev * rng.normal();
    b_.w.fill(0.0f);
}

Tensor Conv2d::forward(const Tensor& x, Ctx& ctx) {
    check(x.rank() == 4 && x.dim(1) == in_c_, "conv2d: input channel mismatch");
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int OH = kern::conv_out_dim(H, k_, stride_, pad_);
    const int OW = kern::conv_out_dim(W, k_, stride_, pad_);
    check(OH > 0 && OW > 0, "conv2d: output collapsed to zero size");
    const int K = in_c_ * k_ * k_;
    const int64_t cols = static_cast<int64_t>(OH) * OW;

    Tensor y({N, out_c_, OH, OW});
    auto& col = scratch_a();
    col.resize(static_cast<size_t>(K) * cols);
    for (int n = 0; n < N; ++n) {
        kern::im2col(x.data() + static_cast<int64_t>(n) * in_c_ * H * W, in_c_, H, W, k_, k_,
                     stride_, pad_, col.data());
        float* yn = y.data() + static_cast<int64_t>(n) * out_c_ * cols;
        kern::sgemm(out_c_, static_cast<int>(cols), K, w_.w.data(), K, false, col.data(),
                    static_cast<int>(cols), false, yn, static_cast<int>(cols), false);
        for (int oc = 0; oc < out_c_; ++oc) {
            const float bv = b_.w[oc];
            float* row = yn + static_cast<int64_t>(oc) * cols;
            for (int64_t i = 0; i < cols; ++i) row[i] += bv;
        }
    }
    ctx.push(this, x);
    return y;
}

Tensor Conv2d::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    Tensor x = ctx.pop(this);
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int OH = dy.dim(2), OW = dy.dim(3);
    const int K = in_c_ * k_ * k_;
    const int64_t cols = static_cast<int64_t>(OH) * OW;

    Tensor dx;
    if (need_dx) dx = Tensor({N, in_c_, H, W});
    auto& col = scratch_a();
    col.resize(static_cast<size_t>(K) * cols);
    auto& dcol = scratch_b();
    if (need_dx) dcol.resize(static_cast<size_t>(K) * cols);

    for (int n = 0; n < N; ++n) {
        const float* dyn = dy.data() + static_cast<int64_t>(n) * out_c_ * cols;
        // im2col is recomputed rather than cached: trades FLOPs for memory.
        kern::im2col(x.data() + static_cast<int64_t>(n) * in_c_ * H * W, in_c_, H, W, k_, k_,
                     stride_, pad_, col.data());
        kern::sgemm(out_c_, K, static_cast<int>(cols), dyn, static_cast<int>(cols), false,
                    col.data(), static_cast<int>(cols), true, w_.g.data(), K, true);
        for (int oc = 0; oc < out_c_; ++oc)
            b_.g[oc] += static_cast<float>(kern::sum(cols, dyn + static_cast<int64_t>(oc) * cols));
        if (need_dx) {
            kern::sgemm(K, static_cast<int>(cols), out_c_, w_.w.data(), K, true, dyn,
                        static_cast<int>(cols), false, dcol.data(), static_cast<int>(cols), false);
            kern::col2im(dcol.data(), in_c_, H, W, k_, k_, stride_, pad_,
                         dx.data() + static_cast<int64_t>(n) * in_c_ * H * W);
        }
    }
    return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
}

// ---------------------------------------------------------------------------
// InstanceNorm

InstanceNorm::InstanceNorm(std::string name, int channels, float eps)
    : channels_(channels), eps_(eps) {
    gamma_.name = name + ".gamma";
    gamma_.w = Tensor::full({channels}, 1.0f);
    gamma_.g = Tensor({channels});
    beta_.name = name + ".beta";
    beta_.w = Tensor({channels});
    beta_.g = Tensor({channels});
}

Tensor InstanceNorm::forward(const Tensor& x, Ctx& ctx) {
    check(x.rank() == 4 && x.dim(1) == channels_, "instance_norm: channel mismatch");
    const int N = x.dim(0), C = x.dim(1);
    // hw == 1 degenerates to y = beta with zero input gradient; consistent
    // with central differences, so it is allowed for toy-sized latents.
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    check(hw >= 1, "instance_norm: empty spatial extent");

    Tensor xhat(x.shape());
    Tensor invstd({N, C, 1, 1});
    Tensor y(x.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * hw;
            const float* xp = x.data() + off;
            const double mean = kern::sum(hw, xp) / static_cast<double>(hw);
            double var = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                const double d = xp[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(hw);
            const float istd = static_cast<float>(1.0 / std::sqrt(var + eps_));
            invstd[static_cast<int64_t>(n) * C + c] = istd;
            const float g = gamma_.w[c], b = beta_.w[c], mu = static_cast<float>(mean);
            float* xh = xhat.data() + off;
            float* yp = y.data() + off;
            for (int64_t i = 0; i < hw; ++i) {
                xh[i] = (xp[i] - mu) * istd;
                yp[i] = g * xh[i] + b;
            }
        }
    }
    ctx.push(this, std::move(xhat));
    ctx.push(this, std::move(invstd));
    return y;
}

Tensor InstanceNorm::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    Tensor invstd = ctx.pop(this);
    Tensor xhat = ctx.pop(this);
    const int N = dy.dim(0), C = dy.dim(1);
    const int64_t hw = static_cast<int64_t>(dy.dim(2)) * dy.dim(3);

    Tensor dx;
    if (need_dx) dx = Tensor(dy.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * hw;
            const float* dyp = dy.data() + off;
            const float* xh = xhat.data() + off;
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                sum_dy += dyp[i];
                sum_dy_xh += static_cast<double>(dyp[i]) * xh[i];
            }
            gamma_.g[c] += static_cast<float>(sum_dy_xh);
            beta_.g[c] += static_cast<float>(sum_dy);
            if (!need_dx) continue;
            const double inv_hw = 1.0 / static_cast<double>(hw);
            const float k = gamma_.w[c] * invstd[static_cast<int64_t>(n) * C + c];
            const float mean_dy = static_cast<float>(sum_dy * inv_hw);
            const float mean_dy_xh = static_cast<float>(sum_dy_xh * inv_hw);
            float* dxp = dx.data() + off;
            for (int64_t i = 0; i < hw; ++i)
                dxp[i] = k * (dyp[i] - mean_dy - xh[i] * mean_dy_xh);
        }
    }
    return dx;
}

void InstanceNorm::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// Activations

Tensor LeakyReLU::forward(const Tensor& x, Ctx& ctx) {
    Tensor y(x.shape());
    kern::lrelu_fwd(x.numel(), slope_, x.data(), y.data());
    ctx.push(this, x);
    return y;
}

Tensor LeakyReLU::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    Tensor x = ctx.pop(this);
    if (!need_dx) return {};
    Tensor dx(dy.shape());
    kern::lrelu_bwd(dy.numel(), slope_, x.data(), dy.data(), dx.data());
    return dx;
}

Tensor Tanh::forward(const Tensor& x, Ctx& ctx) {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
    ctx.push(this, y);
    return y;
}

Tensor Tanh::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    Tensor y = ctx.pop(this);
    if (!need_dx) return {};
    Tensor dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * (1.0f - y[i] * y[i]);
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x, Ctx& ctx) {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
    ctx.push(this, y);
    return y;
}

Tensor Sigmoid::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    Tensor y = ctx.pop(this);
    if (!need_dx) return {};
    Tensor dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y[i] * (1.0f - y[i]);
    return dx;
}

// ---------------------------------------------------------------------------
// MaxPool2x / Upsample2xNearest

Tensor MaxPool2x::forward(const Tensor& x, Ctx& ctx) {
    check(x.rank() == 4 && x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0, "maxpool2x: odd spatial size");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OH = H / 2, OW = W / 2;
    Tensor y({N, C, OH, OW});
    // Winner offsets (0..3) stored as floats; exact for this value range.
    Tensor arg({N, C, OH, OW});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float* plane = x.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            float* yp = y.data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
            float* ap = arg.data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    const int ih = oh * 2, iw = ow * 2;
                    float best = plane[ih * W + iw];
                    int besti = 0;
                    const float cand1 = plane[ih * W + iw + 1];
                    if (cand1 > best) { best = cand1; besti = 1; }
                    const float cand2 = plane[(ih + 1) * W + iw];
                    if (cand2 > best) { best = cand2; besti = 2; }
                    const float cand3 = plane[(ih + 1) * W + iw + 1];
                    if (cand3 > best) { best = cand3; besti = 3; }
                    yp[oh * OW + ow] = best;
                    ap[oh * OW + ow] = static_cast<float>(besti);
                }
            }
        }
    }
    ctx.push(this, std::move(arg));
    return y;
}

Tensor MaxPool2x::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    Tensor arg = ctx.pop(this);
    if (!need_dx) return {};
    const int N = dy.dim(0), C = dy.dim(1), OH = dy.dim(2), OW = dy.dim(3);
    const int H = OH * 2, W = OW * 2;
    Tensor dx({N, C, H, W});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            float* dplane = dx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            const float* dyp = dy.data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
            const float* ap = arg.data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    const int besti = static_cast<int>(ap[oh * OW + ow]);
                    const int ih = oh * 2 + besti / 2, iw = ow * 2 + besti % 2;
                    dplane[ih * W + iw] += dyp[oh * OW + ow];
                }
            }
        }
    }
    return dx;
}

Tensor Upsample2xNearest::forward(const Tensor& x, Ctx& ctx) {
    (void)ctx;
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C, H * 2, W * 2});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float* plane = x.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            float* yp = y.data() + (static_cast<int64_t>(n) * C + c) * H * W * 4;
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    const float v = plane[h * W + w];
                    float* row0 = yp + (h * 2) * W * 2 + w * 2;
                    float* row1 = row0 + W * 2;
                    row0[0] = v;
                    row0[1] = v;
                    row1[0] = v;
                    row1[1] = v;
                }
            }
        }
    }
    return y;
}

Tensor Upsample2xNearest::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    (void)ctx;
    if (!need_dx) return {};
    const int N = dy.dim(0), C = dy.dim(1), OH = dy.dim(2), OW = dy.dim(3);
    const int H = OH / 2, W = OW / 2;
    Tensor dx({N, C, H, W});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float* dyp = dy.data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
            float* dxp = dx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    dxp[h * W + w] = dyp[(h * 2) * OW + w * 2] + dyp[(h * 2) * OW + w * 2 + 1] +
                                     dyp[(h * 2 + 1) * OW + w * 2] +
                                     dyp[(h * 2 + 1) * OW + w * 2 + 1];
        }
    }
    return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Ctx& ctx) {
    const int N = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor y({N, C, 1, 1});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc)
        y[nc] = static_cast<float>(kern::sum(hw, x.data() + nc * hw) / static_cast<double>(hw));
    Tensor shape_info({2});
    shape_info[0] = static_cast<float>(x.dim(2));
    shape_info[1] = static_cast<float>(x.dim(3));
    ctx.push(this, std::move(shape_info));
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy, Ctx& ctx, bool need_dx) {
    Tensor shape_info = ctx.pop(this);
    if (!need_dx) return {};
    const int H = static_cast<int>(shape_info[0]), W = static_cast<int>(shape_info[1]);
    const int N = dy.dim(0), C = dy.dim(1);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor dx({N, C, H, W});
    const float inv = 1.0f / static_cast<float>(hw);
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float g = dy[nc] * inv;
        float* p = dx.data() + nc * hw;
        for (int64_t i = 0; i < hw; ++i) p[i] = g;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Concat / split

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check(a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
              a.dim(3) == b.dim(3),
          "concat_channels: shape mismatch");
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    Tensor out({N, Ca + Cb, a.dim(2), a.dim(3)});
    for (int n = 0; n < N; ++n) {
        std::memcpy(out.data() + static_cast<int64_t>(n) * (Ca + Cb) * hw,
                    a.data() + static_cast<int64_t>(n) * Ca * hw,
                    sizeof(float) * static_cast<size_t>(Ca * hw));
        std::memcpy(out.data() + (static_cast<int64_t>(n) * (Ca + Cb) + Ca) * hw,
                    b.data() + static_cast<int64_t>(n) * Cb * hw,
                    sizeof(float) * static_cast<size_t>(Cb * hw));
    }
    return out;
}

void split_channels(const Tensor& d, int c_first, Tensor& da, Tensor& db) {
    const int N = d.dim(0), C = d.dim(1);
    check(c_first > 0 && c_first < C, "split_channels: bad split point");
    const int Cb = C - c_first;
    const int64_t hw = static_cast<int64_t>(d.dim(2)) * d.dim(3);
    da = Tensor({N, c_first, d.dim(2), d.dim(3)});
    db = Tensor({N, Cb, d.dim(2), d.dim(3)});
    for (int n = 0; n < N; ++n) {
        std::memcpy(da.data() + static_cast<int64_t>(n) * c_first * hw,
                    d.data() + static_cast<int64_t>(n) * C * hw,
                    sizeof(float) * static_cast<size_t>(c_first * hw));
        std::memcpy(db.data() + static_cast<int64_t>(n) * Cb * hw,
                    d.data() + (static_cast<int64_t>(n) * C + c_first) * hw,
                    sizeof(float) * static_cast<size_t>(Cb * hw));
    }
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<Param*> params, float lr, float beta1, float beta2, float weight_decay,
           float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      weight_decay_(weight_decay), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
        m_.emplace_back(p->w.shape());
        v_.emplace_back(p->w.shape());
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Param* p = params_[pi];
        float* w = p->w.data();
        const float* g = p->g.data();
        float* m = m_[pi].data();
        float* v = v_[pi].data();
        const int64_t n = p->w.numel();
        for (int64_t i = 0; i < n; ++i) {
            // Classic L2 coupling: decay enters the gradient before the moments.
            const float gi = g[i] + weight_decay_ * w[i];
            m[i] = beta1_ * m[i] + (1.0f - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0f - beta2_) * gi * gi;
            const float mhat = static_cast<float>(m[i] / bc1);
            const float vhat = static_cast<float>(v[i] / bc2);
            w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

} // namespace isoseg::nn
