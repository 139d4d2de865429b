#pragma once

#include <memory>
#include <vector>

#include "isoseg/nn.hpp"
#include "isoseg/onehot.hpp"
#include "isoseg/rng.hpp"
#include "isoseg/tensor.hpp"

namespace isoseg::net {

// Shared isomorphic representation. style is {B,S,1,1} and present only in
// the content/style variant; the segmenter must never see it.
struct LatentCode {
    Tensor content; // {B, 4*base, H/4, W/4}
    Tensor style;
};

struct GeneratorSpec {
    int n_datasets = 2;
    int base_filters = 32;
    int residual_layers = 2;
    int style_dim = 0; // 0 selects the shared-latent variant
};

// conv-norm-relu / conv-norm with identity skip.
class ResBlock {
public:
    ResBlock(const std::string& name, int channels);
    void init(Rng& rng);
    Tensor forward(const Tensor& x, nn::Ctx& ctx);
    Tensor backward(const Tensor& dy, nn::Ctx& ctx, bool need_dx = true);
    void collect_params(std::vector<nn::Param*>& out);

private:
    nn::Conv2d c1_, c2_;
    nn::InstanceNorm n1_, n2_;
    nn::LeakyReLU relu_{0.0f};
};

// Conditional encoder: 7x7 stem + two stride-2 blocks + residual stack, with
// an optional style branch. Spatial shrink is exactly 4x.
class Encoder {
public:
    explicit Encoder(const GeneratorSpec& spec);
    void init(Rng& rng);
    LatentCode forward(const Tensor& images, const cond::OneHotCode& code, nn::Ctx& ctx);
    // Returns d(images) when need_dx (the re-encode path chains into the first
    // decode). When the style branch is active every grad-enabled forward must
    // be paired with a backward; a null dstyle is treated as zeros so the
    // per-layer stashes stay balanced.
    Tensor backward(const Tensor& dcontent, const Tensor* dstyle, nn::Ctx& ctx,
                    bool need_dx = false);
    void collect_params(std::vector<nn::Param*>& out);
    int content_channels() const { return spec_.base_filters * 4; }

private:
    GeneratorSpec spec_;
    nn::Conv2d c0_, d1_, d2_;
    nn::InstanceNorm n0_, nd1_, nd2_;
    nn::LeakyReLU relu_{0.0f};
    std::vector<std::unique_ptr<ResBlock>> res_;
    // Style branch (content/style variant only); deliberately norm-free.
    std::unique_ptr<nn::Conv2d> sc1_, sc2_, shead_;
    nn::GlobalAvgPool sgap_;
    nn::LeakyReLU srelu_{0.0f};
};

// Conditional decoder mirroring the encoder; tanh-bounded output. The dataset
// code (and per-sample style, when present) enter as constant planes appended
// to the content tensor.
class Decoder {
public:
    explicit Decoder(const GeneratorSpec& spec);
    void init(Rng& rng);
    Tensor forward(const Tensor& content, const cond::OneHotCode& code, const Tensor* style,
                   nn::Ctx& ctx);
    // Returns dcontent when requested; accumulates dstyle into *dstyle if given.
    Tensor backward(const Tensor& dimages, nn::Ctx& ctx, bool need_dcontent,
                    Tensor* dstyle = nullptr);
    void collect_params(std::vector<nn::Param*>& out);

private:
    GeneratorSpec spec_;
    nn::Conv2d c0_;
    nn::InstanceNorm n0_;
    std::vector<std::unique_ptr<ResBlock>> res_;
    nn::Upsample2xNearest up1_, up2_;
    nn::Conv2d uc1_, uc2_, out_;
    nn::InstanceNorm un1_, un2_;
    nn::LeakyReLU relu_{0.0f};
    nn::Tanh tanh_;
};

// Conditional least-squares discriminator: two stride-2 blocks and a raw
// patch-score head (no output nonlinearity).
class Discriminator {
public:
    Discriminator(int n_datasets, int base_filters);
    void init(Rng& rng);
    Tensor forward(const Tensor& images, const cond::OneHotCode& code, nn::Ctx& ctx);
    // Returns the gradient w.r.t. the input images when requested.
    Tensor backward(const Tensor& dscores, nn::Ctx& ctx, bool need_dimages);
    void collect_params(std::vector<nn::Param*>& out);

private:
    int n_datasets_;
    nn::Conv2d c1_, c2_, head_;
    nn::LeakyReLU lrelu_{0.2f};
};

// Supervised model M: truncated asymmetric U-Net over the content tensor.
// One internal skip level, then upsampling back to full image resolution.
class SegmenterM {
public:
    explicit SegmenterM(int content_channels);
    void init(Rng& rng);
    Tensor forward(const Tensor& content, nn::Ctx& ctx);
    Tensor backward(const Tensor& dprobs, nn::Ctx& ctx, bool need_dcontent = false);
    void collect_params(std::vector<nn::Param*>& out);

private:
    nn::Conv2d e1a_, e1b_, b1_, b2_, u1_, u2_, u3_, u4_, u5_, u6_, head_;
    nn::InstanceNorm ne1a_, ne1b_, nb1_, nb2_, nu1_, nu2_, nu3_, nu4_, nu5_, nu6_;
    nn::MaxPool2x pool_;
    nn::Upsample2xNearest upa_, upb_, upc_;
    nn::LeakyReLU relu_{0.0f};
    nn::Sigmoid sig_;
};

// Standard-normal style draw for the content-style variant, shaped {B,S,1,1}.
Tensor sample_style(int batch, int style_dim, Rng& rng);

// Source-only baseline: standard depth-4 U-Net, base 32, on raw images.
class BaselineUNet {
public:
    explicit BaselineUNet(int base_filters = 32);
    void init(Rng& rng);
    Tensor forward(const Tensor& images, nn::Ctx& ctx);
    Tensor backward(const Tensor& dprobs, nn::Ctx& ctx);
    void collect_params(std::vector<nn::Param*>& out);

private:
    struct Level {
        std::unique_ptr<nn::Conv2d> ca, cb;
        std::unique_ptr<nn::InstanceNorm> na, nb;
    };
    Level enc_[4], dec_[4];
    std::unique_ptr<nn::Conv2d> up_conv_[4];
    std::unique_ptr<nn::InstanceNorm> up_norm_[4];
    Level bott_;
    std::unique_ptr<nn::Conv2d> head_;
    nn::MaxPool2x pool_;
    nn::Upsample2xNearest up_;
    nn::LeakyReLU relu_{0.0f};
    nn::Sigmoid sig_;
    int base_;
};

} // namespace isoseg::net
