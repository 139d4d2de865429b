#include "isoseg/networks.hpp"

#include <cstring>
#include <stdexcept>

#include "isoseg/kernels.hpp"

namespace isoseg::net {

namespace {

Tensor add_tensors(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    kern::add(a.numel(), a.data(), b.data(), out.data());
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// ResBlock

ResBlock::ResBlock(const std::string& name, int channels)
    : c1_(name + ".c1", channels, channels, 3, 1, 1), c2_(name + ".c2", channels, channels, 3, 1, 1),
      n1_(name + ".n1", channels), n2_(name + ".n2", channels) {}

void ResBlock::init(Rng& rng) {
    c1_.init(rng);
    c2_.init(rng);
}

Tensor ResBlock::forward(const Tensor& x, nn::Ctx& ctx) {
    Tensor h = relu_.forward(n1_.forward(c1_.forward(x, ctx), ctx), ctx);
    return add_tensors(x, n2_.forward(c2_.forward(h, ctx), ctx));
}

Tensor ResBlock::backward(const Tensor& dy, nn::Ctx& ctx, bool need_dx) {
    Tensor d = c2_.backward(n2_.backward(dy, ctx), ctx);
    d = c1_.backward(n1_.backward(relu_.backward(d, ctx), ctx), ctx, need_dx);
    if (!need_dx) return {};
    return add_tensors(dy, d);
}

void ResBlock::collect_params(std::vector<nn::Param*>& out) {
    c1_.collect_params(out);
    n1_.collect_params(out);
    c2_.collect_params(out);
    n2_.collect_params(out);
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(const GeneratorSpec& spec)
    : spec_(spec),
      c0_("ge.c0", 1 + spec.n_datasets, spec.base_filters, 7, 1, 3),
      d1_("ge.d1", spec.base_filters, spec.base_filters * 2, 4, 2, 1),
      d2_("ge.d2", spec.base_filters * 2, spec.base_filters * 4, 4, 2, 1),
      n0_("ge.n0", spec.base_filters), nd1_("ge.nd1", spec.base_filters * 2),
      nd2_("ge.nd2", spec.base_filters * 4) {
    for (int i = 0; i < spec.residual_layers; ++i)
        res_.push_back(std::make_unique<ResBlock>("ge.res" + std::to_string(i),
                                                  spec.base_filters * 4));
    if (spec.style_dim > 0) {
        sc1_ = std::make_unique<nn::Conv2d>("ge.sc1", 1 + spec.n_datasets, spec.base_filters, 4, 2, 1);
        sc2_ = std::make_unique<nn::Conv2d>("ge.sc2", spec.base_filters, spec.base_filters * 2, 4, 2, 1);
        shead_ = std::make_unique<nn::Conv2d>("ge.shead", spec.base_filters * 2, spec.style_dim, 1,
                                              1, 0, 1.0f);
    }
}

void Encoder::init(Rng& rng) {
    c0_.init(rng);
    d1_.init(rng);
    d2_.init(rng);
    for (auto& r : res_) r->init(rng);
    if (sc1_) {
        sc1_->init(rng);
        sc2_->init(rng);
        shead_->init(rng);
    }
}

LatentCode Encoder::forward(const Tensor& images, const cond::OneHotCode& code, nn::Ctx& ctx) {
    if (images.dim(2) % 4 != 0 || images.dim(3) % 4 != 0)
        throw std::runtime_error("encode: spatial dims must be divisible by 4, got " +
                                 images.shape_str());
    const Tensor xin = cond::attach_code(images, code);
    Tensor h = relu_.forward(n0_.forward(c0_.forward(xin, ctx), ctx), ctx);
    h = relu_.forward(nd1_.forward(d1_.forward(h, ctx), ctx), ctx);
    h = relu_.forward(nd2_.forward(d2_.forward(h, ctx), ctx), ctx);
    for (auto& r : res_) h = r->forward(h, ctx);

    LatentCode lat;
    lat.content = std::move(h);
    if (sc1_) {
        Tensor s = srelu_.forward(sc1_->forward(xin, ctx), ctx);
        s = srelu_.forward(sc2_->forward(s, ctx), ctx);
        lat.style = shead_->forward(sgap_.forward(s, ctx), ctx);
    }
    return lat;
}

Tensor Encoder::backward(const Tensor& dcontent, const Tensor* dstyle, nn::Ctx& ctx,
                         bool need_dx) {
    Tensor dxin_style;
    if (sc1_) {
        Tensor ds = dstyle ? *dstyle : Tensor({dcontent.dim(0), spec_.style_dim, 1, 1});
        Tensor d = sgap_.backward(shead_->backward(ds, ctx), ctx);
        d = sc2_->backward(srelu_.backward(d, ctx), ctx);
        dxin_style = sc1_->backward(srelu_.backward(d, ctx), ctx, need_dx);
    }
    Tensor d = dcontent;
    for (auto it = res_.rbegin(); it != res_.rend(); ++it) d = (*it)->backward(d, ctx);
    d = d2_.backward(nd2_.backward(relu_.backward(d, ctx), ctx), ctx);
    d = d1_.backward(nd1_.backward(relu_.backward(d, ctx), ctx), ctx);
    Tensor dxin = c0_.backward(n0_.backward(relu_.backward(d, ctx), ctx), ctx, need_dx);
    if (!need_dx) return {};
    if (sc1_) kern::add(dxin.numel(), dxin.data(), dxin_style.data(), dxin.data());
    Tensor dimg, dcode;
    nn::split_channels(dxin, 1, dimg, dcode);
    return dimg;
}

void Encoder::collect_params(std::vector<nn::Param*>& out) {
    c0_.collect_params(out);
    n0_.collect_params(out);
    d1_.collect_params(out);
    nd1_.collect_params(out);
    d2_.collect_params(out);
    nd2_.collect_params(out);
    for (auto& r : res_) r->collect_params(out);
    if (sc1_) {
        sc1_->collect_params(out);
        sc2_->collect_params(out);
        shead_->collect_params(out);
    }
}

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(const GeneratorSpec& spec)
    : spec_(spec),
      c0_("gd.c0", spec.base_filters * 4 + spec.n_datasets + spec.style_dim,
          spec.base_filters * 4, 3, 1, 1),
      n0_("gd.n0", spec.base_filters * 4),
      up1_(), up2_(),
      uc1_("gd.uc1", spec.base_filters * 4, spec.base_filters * 2, 3, 1, 1),
      uc2_("gd.uc2", spec.base_filters * 2, spec.base_filters, 3, 1, 1),
      out_("gd.out", spec.base_filters, 1, 7, 1, 3, 1.0f),
      un1_("gd.un1", spec.base_filters * 2), un2_("gd.un2", spec.base_filters) {
    for (int i = 0; i < spec.residual_layers; ++i)
        res_.push_back(std::make_unique<ResBlock>("gd.res" + std::to_string(i),
                                                  spec.base_filters * 4));
}

void Decoder::init(Rng& rng) {
    c0_.init(rng);
    for (auto& r : res_) r->init(rng);
    uc1_.init(rng);
    uc2_.init(rng);
    out_.init(rng);
}

Tensor Decoder::forward(const Tensor& content, const cond::OneHotCode& code, const Tensor* style,
                        nn::Ctx& ctx) {
    const int B = content.dim(0), C = content.dim(1), H = content.dim(2), W = content.dim(3);
    const int N = spec_.n_datasets, S = spec_.style_dim;
    if (S > 0 && (style == nullptr || style->dim(0) != B || style->dim(1) != S))
        throw std::runtime_error("decode: style vector missing or mis-shaped");
    const int64_t hw = static_cast<int64_t>(H) * W;

    Tensor xin({B, C + N + S, H, W});
    const std::vector<float> hv = code.vec();
    for (int b = 0; b < B; ++b) {
        std::memcpy(xin.data() + static_cast<int64_t>(b) * (C + N + S) * hw,
                    content.data() + static_cast<int64_t>(b) * C * hw,
                    sizeof(float) * static_cast<size_t>(C * hw));
        for (int e = 0; e < N + S; ++e) {
            const float v = e < N ? hv[static_cast<size_t>(e)]
                                  : (*style)[static_cast<int64_t>(b) * S + (e - N)];
            float* plane = xin.data() + (static_cast<int64_t>(b) * (C + N + S) + C + e) * hw;
            for (int64_t i = 0; i < hw; ++i) plane[i] = v;
        }
    }

    Tensor h = relu_.forward(n0_.forward(c0_.forward(xin, ctx), ctx), ctx);
    for (auto& r : res_) h = r->forward(h, ctx);
    h = relu_.forward(un1_.forward(uc1_.forward(up1_.forward(h, ctx), ctx), ctx), ctx);
    h = relu_.forward(un2_.forward(uc2_.forward(up2_.forward(h, ctx), ctx), ctx), ctx);
    return tanh_.forward(out_.forward(h, ctx), ctx);
}

Tensor Decoder::backward(const Tensor& dimages, nn::Ctx& ctx, bool need_dcontent,
                         Tensor* dstyle) {
    Tensor d = out_.backward(tanh_.backward(dimages, ctx), ctx);
    d = up2_.backward(uc2_.backward(un2_.backward(relu_.backward(d, ctx), ctx), ctx), ctx);
    d = up1_.backward(uc1_.backward(un1_.backward(relu_.backward(d, ctx), ctx), ctx), ctx);
    for (auto it = res_.rbegin(); it != res_.rend(); ++it) d = (*it)->backward(d, ctx);
    const bool need_dxin = need_dcontent || dstyle != nullptr;
    Tensor dxin = c0_.backward(n0_.backward(relu_.backward(d, ctx), ctx), ctx, need_dxin);
    if (!need_dxin) return {};

    const int B = dxin.dim(0), Call = dxin.dim(1);
    const int C = spec_.base_filters * 4, N = spec_.n_datasets, S = spec_.style_dim;
    const int64_t hw = static_cast<int64_t>(dxin.dim(2)) * dxin.dim(3);
    if (dstyle) {
        for (int b = 0; b < B; ++b)
            for (int s = 0; s < S; ++s) {
                const float* plane =
                    dxin.data() + (static_cast<int64_t>(b) * Call + C + N + s) * hw;
                (*dstyle)[static_cast<int64_t>(b) * S + s] +=
                    static_cast<float>(kern::sum(hw, plane));
            }
    }
    if (!need_dcontent) return {};
    Tensor dcontent({B, C, dxin.dim(2), dxin.dim(3)});
    for (int b = 0; b < B; ++b)
        std::memcpy(dcontent.data() + static_cast<int64_t>(b) * C * hw,
                    dxin.data() + static_cast<int64_t>(b) * Call * hw,
                    sizeof(float) * static_cast<size_t>(C * hw));
    return dcontent;
}

void Decoder::collect_params(std::vector<nn::Param*>& out) {
    c0_.collect_params(out);
    n0_.collect_params(out);
    for (auto& r : res_) r->collect_params(out);
    uc1_.collect_params(out);
    un1_.collect_params(out);
    uc2_.collect_params(out);
    un2_.collect_params(out);
    out_.collect_params(out);
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(int n_datasets, int base_filters)
    : n_datasets_(n_datasets),
      c1_("d.c1", 1 + n_datasets, base_filters, 4, 2, 1),
      c2_("d.c2", base_filters, base_filters * 2, 4, 2, 1),
      head_("d.head", base_filters * 2, 1, 3, 1, 1, 1.0f) {}

void Discriminator::init(Rng& rng) {
    c1_.init(rng);
    c2_.init(rng);
    head_.init(rng);
}

Tensor Discriminator::forward(const Tensor& images, const cond::OneHotCode& code, nn::Ctx& ctx) {
    const Tensor xin = cond::attach_code(images, code);
    Tensor h = lrelu_.forward(c1_.forward(xin, ctx), ctx);
    h = lrelu_.forward(c2_.forward(h, ctx), ctx);
    return head_.forward(h, ctx);
}

Tensor Discriminator::backward(const Tensor& dscores, nn::Ctx& ctx, bool need_dimages) {
    Tensor d = head_.backward(dscores, ctx);
    d = c2_.backward(lrelu_.backward(d, ctx), ctx);
    Tensor dxin = c1_.backward(lrelu_.backward(d, ctx), ctx, need_dimages);
    if (!need_dimages) return {};
    Tensor dimg, dcode;
    nn::split_channels(dxin, 1, dimg, dcode);
    return dimg;
}

void Discriminator::collect_params(std::vector<nn::Param*>& out) {
    c1_.collect_params(out);
    c2_.collect_params(out);
    head_.collect_params(out);
}

// ---------------------------------------------------------------------------
// SegmenterM

SegmenterM::SegmenterM(int cc)
    : e1a_("m.e1a", cc, cc, 3, 1, 1), e1b_("m.e1b", cc, cc, 3, 1, 1),
      b1_("m.b1", cc, cc * 2, 3, 1, 1), b2_("m.b2", cc * 2, cc * 2, 3, 1, 1),
      u1_("m.u1", cc * 2, cc, 3, 1, 1), u2_("m.u2", cc * 2, cc, 3, 1, 1),
      u3_("m.u3", cc, cc / 2, 3, 1, 1), u4_("m.u4", cc / 2, cc / 2, 3, 1, 1),
      u5_("m.u5", cc / 2, cc / 4, 3, 1, 1), u6_("m.u6", cc / 4, cc / 4, 3, 1, 1),
      head_("m.head", cc / 4, 1, 1, 1, 0, 1.0f),
      ne1a_("m.ne1a", cc), ne1b_("m.ne1b", cc), nb1_("m.nb1", cc * 2), nb2_("m.nb2", cc * 2),
      nu1_("m.nu1", cc), nu2_("m.nu2", cc), nu3_("m.nu3", cc / 2), nu4_("m.nu4", cc / 2),
      nu5_("m.nu5", cc / 4), nu6_("m.nu6", cc / 4) {}

void SegmenterM::init(Rng& rng) {
    e1a_.init(rng);
    e1b_.init(rng);
    b1_.init(rng);
    b2_.init(rng);
    u1_.init(rng);
    u2_.init(rng);
    u3_.init(rng);
    u4_.init(rng);
    u5_.init(rng);
    u6_.init(rng);
    head_.init(rng);
}

Tensor SegmenterM::forward(const Tensor& content, nn::Ctx& ctx) {
    Tensor a = relu_.forward(ne1a_.forward(e1a_.forward(content, ctx), ctx), ctx);
    a = relu_.forward(ne1b_.forward(e1b_.forward(a, ctx), ctx), ctx);
    Tensor h = pool_.forward(a, ctx);
    h = relu_.forward(nb1_.forward(b1_.forward(h, ctx), ctx), ctx);
    h = relu_.forward(nb2_.forward(b2_.forward(h, ctx), ctx), ctx);
    h = relu_.forward(nu1_.forward(u1_.forward(upa_.forward(h, ctx), ctx), ctx), ctx);
    h = nn::concat_channels(h, a);
    h = relu_.forward(nu2_.forward(u2_.forward(h, ctx), ctx), ctx);
    h = relu_.forward(nu3_.forward(u3_.forward(upb_.forward(h, ctx), ctx), ctx), ctx);
    h = relu_.forward(nu4_.forward(u4_.forward(h, ctx), ctx), ctx);
    h = relu_.forward(nu5_.forward(u5_.forward(upc_.forward(h, ctx), ctx), ctx), ctx);
    h = relu_.forward(nu6_.forward(u6_.forward(h, ctx), ctx), ctx);
    return sig_.forward(head_.forward(h, ctx), ctx);
}

Tensor SegmenterM::backward(const Tensor& dprobs, nn::Ctx& ctx, bool need_dcontent) {
    Tensor d = head_.backward(sig_.backward(dprobs, ctx), ctx);
    d = u6_.backward(nu6_.backward(relu_.backward(d, ctx), ctx), ctx);
    d = upc_.backward(u5_.backward(nu5_.backward(relu_.backward(d, ctx), ctx), ctx), ctx);
    d = u4_.backward(nu4_.backward(relu_.backward(d, ctx), ctx), ctx);
    d = upb_.backward(u3_.backward(nu3_.backward(relu_.backward(d, ctx), ctx), ctx), ctx);
    d = u2_.backward(nu2_.backward(relu_.backward(d, ctx), ctx), ctx);
    Tensor du, da_skip;
    nn::split_channels(d, d.dim(1) / 2, du, da_skip);
    d = upa_.backward(u1_.backward(nu1_.backward(relu_.backward(du, ctx), ctx), ctx), ctx);
    d = b2_.backward(nb2_.backward(relu_.backward(d, ctx), ctx), ctx);
    d = b1_.backward(nb1_.backward(relu_.backward(d, ctx), ctx), ctx);
    Tensor da = add_tensors(pool_.backward(d, ctx), da_skip);
    da = e1b_.backward(ne1b_.backward(relu_.backward(da, ctx), ctx), ctx);
    return e1a_.backward(ne1a_.backward(relu_.backward(da, ctx), ctx), ctx, need_dcontent);
}

void SegmenterM::collect_params(std::vector<nn::Param*>& out) {
    e1a_.collect_params(out);
    ne1a_.collect_params(out);
    e1b_.collect_params(out);
    ne1b_.collect_params(out);
    b1_.collect_params(out);
    nb1_.collect_params(out);
    b2_.collect_params(out);
    nb2_.collect_params(out);
    u1_.collect_params(out);
    nu1_.collect_params(out);
    u2_.collect_params(out);
    nu2_.collect_params(out);
    u3_.collect_params(out);
    nu3_.collect_params(out);
    u4_.collect_params(out);
    nu4_.collect_params(out);
    u5_.collect_params(out);
    nu5_.collect_params(out);
    u6_.collect_params(out);
    nu6_.collect_params(out);
    head_.collect_params(out);
}

Tensor sample_style(int batch, int style_dim, Rng& rng) {
    if (batch < 1 || style_dim < 1)
        throw std::runtime_error("sample_style: batch and style_dim must be >= 1");
    Tensor s({batch, style_dim, 1, 1});
    for (int64_t i = 0; i < s.numel(); ++i) s[i] = rng.normal();
    return s;
}

// ---------------------------------------------------------------------------
// BaselineUNet

BaselineUNet::BaselineUNet(int base) : base_(base) {
    int in_c = 1;
    for (int i = 0; i < 4; ++i) {
        const int c = base << i;
        const std::string p = "base.enc" + std::to_string(i);
        enc_[i].ca = std::make_unique<nn::Conv2d>(p + ".ca", in_c, c, 3, 1, 1);
        enc_[i].na = std::make_unique<nn::InstanceNorm>(p + ".na", c);
        enc_[i].cb = std::make_unique<nn::Conv2d>(p + ".cb", c, c, 3, 1, 1);
        enc_[i].nb = std::make_unique<nn::InstanceNorm>(p + ".nb", c);
        in_c = c;
    }
    const int cb = base << 4;
    bott_.ca = std::make_unique<nn::Conv2d>("base.bott.ca", base << 3, cb, 3, 1, 1);
    bott_.na = std::make_unique<nn::InstanceNorm>("base.bott.na", cb);
    bott_.cb = std::make_unique<nn::Conv2d>("base.bott.cb", cb, cb, 3, 1, 1);
    bott_.nb = std::make_unique<nn::InstanceNorm>("base.bott.nb", cb);
    for (int i = 3; i >= 0; --i) {
        const int c = base << i;
        const std::string p = "base.dec" + std::to_string(i);
        up_conv_[i] = std::make_unique<nn::Conv2d>(p + ".up", c * 2, c, 3, 1, 1);
        up_norm_[i] = std::make_unique<nn::InstanceNorm>(p + ".upn", c);
        dec_[i].ca = std::make_unique<nn::Conv2d>(p + ".ca", c * 2, c, 3, 1, 1);
        dec_[i].na = std::make_unique<nn::InstanceNorm>(p + ".na", c);
        dec_[i].cb = std::make_unique<nn::Conv2d>(p + ".cb", c, c, 3, 1, 1);
        dec_[i].nb = std::make_unique<nn::InstanceNorm>(p + ".nb", c);
    }
    head_ = std::make_unique<nn::Conv2d>("base.head", base, 1, 1, 1, 0, 1.0f);
}

void BaselineUNet::init(Rng& rng) {
    for (int i = 0; i < 4; ++i) {
        enc_[i].ca->init(rng);
        enc_[i].cb->init(rng);
    }
    bott_.ca->init(rng);
    bott_.cb->init(rng);
    for (int i = 3; i >= 0; --i) {
        up_conv_[i]->init(rng);
        dec_[i].ca->init(rng);
        dec_[i].cb->init(rng);
    }
    head_->init(rng);
}

Tensor BaselineUNet::forward(const Tensor& images, nn::Ctx& ctx) {
    if (images.dim(2) % 16 != 0 || images.dim(3) % 16 != 0)
        throw std::runtime_error("baseline unet: spatial dims must be divisible by 16");
    Tensor skips[4];
    Tensor h = images;
    for (int i = 0; i < 4; ++i) {
        h = relu_.forward(enc_[i].na->forward(enc_[i].ca->forward(h, ctx), ctx), ctx);
        h = relu_.forward(enc_[i].nb->forward(enc_[i].cb->forward(h, ctx), ctx), ctx);
        skips[i] = h;
        h = pool_.forward(h, ctx);
    }
    h = relu_.forward(bott_.na->forward(bott_.ca->forward(h, ctx), ctx), ctx);
    h = relu_.forward(bott_.nb->forward(bott_.cb->forward(h, ctx), ctx), ctx);
    for (int i = 3; i >= 0; --i) {
        h = relu_.forward(up_norm_[i]->forward(up_conv_[i]->forward(up_.forward(h, ctx), ctx), ctx),
                          ctx);
        h = nn::concat_channels(h, skips[i]);
        h = relu_.forward(dec_[i].na->forward(dec_[i].ca->forward(h, ctx), ctx), ctx);
        h = relu_.forward(dec_[i].nb->forward(dec_[i].cb->forward(h, ctx), ctx), ctx);
    }
    return sig_.forward(head_->forward(h, ctx), ctx);
}

Tensor BaselineUNet::backward(const Tensor& dprobs, nn::Ctx& ctx) {
    Tensor d = head_->backward(sig_.backward(dprobs, ctx), ctx);
    Tensor dskips[4];
    for (int i = 0; i <= 3; ++i) {
        d = dec_[i].cb->backward(dec_[i].nb->backward(relu_.backward(d, ctx), ctx), ctx);
        d = dec_[i].ca->backward(dec_[i].na->backward(relu_.backward(d, ctx), ctx), ctx);
        Tensor dup;
        nn::split_channels(d, d.dim(1) / 2, dup, dskips[i]);
        d = up_.backward(
            up_conv_[i]->backward(up_norm_[i]->backward(relu_.backward(dup, ctx), ctx), ctx), ctx);
    }
    d = bott_.cb->backward(bott_.nb->backward(relu_.backward(d, ctx), ctx), ctx);
    d = bott_.ca->backward(bott_.na->backward(relu_.backward(d, ctx), ctx), ctx);
    for (int i = 3; i >= 0; --i) {
        d = add_tensors(pool_.backward(d, ctx), dskips[i]);
        d = enc_[i].cb->backward(enc_[i].nb->backward(relu_.backward(d, ctx), ctx), ctx);
        d = enc_[i].ca->backward(enc_[i].na->backward(relu_.backward(d, ctx), ctx), ctx, i != 0);
    }
    return d;
}

void BaselineUNet::collect_params(std::vector<nn::Param*>& out) {
    for (int i = 0; i < 4; ++i) {
        enc_[i].ca->collect_params(out);
        enc_[i].na->collect_params(out);
        enc_[i].cb->collect_params(out);
        enc_[i].nb->collect_params(out);
    }
    bott_.ca->collect_params(out);
    bott_.na->collect_params(out);
    bott_.cb->collect_params(out);
    bott_.nb->collect_params(out);
    for (int i = 3; i >= 0; --i) {
        up_conv_[i]->collect_params(out);
        up_norm_[i]->collect_params(out);
        dec_[i].ca->collect_params(out);
        dec_[i].na->collect_params(out);
        dec_[i].cb->collect_params(out);
        dec_[i].nb->collect_params(out);
    }
    head_->collect_params(out);
}

} // namespace isoseg::net
