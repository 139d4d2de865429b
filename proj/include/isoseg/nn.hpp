#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "isoseg/rng.hpp"
#include "isoseg/tensor.hpp"

// Minimal layer library with explicit forward/backward. There is no tape:
// network code composes layers and calls their backwards in reverse order.
// Each forward pass owns a Ctx; a layer pushes what its backward needs and
// pops LIFO, so one parameter set can serve several concurrent passes
// (encode and re-encode share the encoder within one update).
namespace isoseg::nn {

struct Param {
    std::string name;
    Tensor w;
    Tensor g; // same shape as w, accumulated by backward passes

    void zero_grad() { g.fill(0.0f); }
};

struct Ctx {
    bool grad = true;

    void push(const void* key, Tensor t) {
        if (grad) saved_[key].push_back(std::move(t));
    }
    Tensor pop(const void* key) {
        auto& v = saved_.at(key);
        Tensor t = std::move(v.back());
        v.pop_back();
        return t;
    }

private:
    std::unordered_map<const void*, std::vector<Tensor>> saved_;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, Ctx& ctx) = 0;
    // need_dx=false skips input-gradient computation (first layer of a net).
    virtual Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) = 0;
    virtual void collect_params(std::vector<Param*>& out) { (void)out; }
};

class Conv2d : public Layer {
public:
    // gain: He-style init scale numerator (2 for ReLU-family, 1 for linear/tanh heads).
    Conv2d(std::string name, int in_c, int out_c, int k, int stride, int pad, float gain = 2.0f);

    void init(Rng& rng);
    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;
    void collect_params(std::vector<Param*>& out) override;

    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }

private:
    int in_c_, out_c_, k_, stride_, pad_;
    float gain_;
    Param w_; // {out_c, in_c*k*k}
    Param b_; // {out_c}
};

// Per-sample, per-channel normalization over spatial dims with affine params.
class InstanceNorm : public Layer {
public:
    explicit InstanceNorm(std::string name, int channels, float eps = 1e-5f);

    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;
    void collect_params(std::vector<Param*>& out) override;

private:
    int channels_;
    float eps_;
    Param gamma_, beta_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(float slope) : slope_(slope) {}
    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;

private:
    float slope_;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;
};

class MaxPool2x : public Layer {
public:
    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;
};

class Upsample2xNearest : public Layer {
public:
    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;
};

// {N,C,H,W} -> {N,C,1,1} spatial mean.
class GlobalAvgPool : public Layer {
public:
    Tensor forward(const Tensor& x, Ctx& ctx) override;
    Tensor backward(const Tensor& dy, Ctx& ctx, bool need_dx = true) override;
};

// Channel concat / split helpers used for skip connections and code planes.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int c_first, Tensor& da, Tensor& db);

class Adam {
public:
    Adam(std::vector<Param*> params, float lr, float beta1, float beta2, float weight_decay,
         float eps = 1e-8f);

    void zero_grad();
    void step();
    int64_t steps() const { return t_; }

    // Checkpoint plumbing: moments and step count.
    const std::vector<Tensor>& m() const { return m_; }
    const std::vector<Tensor>& v() const { return v_; }
    std::vector<Tensor>& m() { return m_; }
    std::vector<Tensor>& v() { return v_; }
    void set_steps(int64_t t) { t_ = t; }
    const std::vector<Param*>& params() const { return params_; }
    void set_lr(float lr) { lr_ = lr; }

private:
    std::vector<Param*> params_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
    float lr_, beta1_, beta2_, weight_decay_, eps_;
};

} // namespace isoseg::nn
