#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace isoseg {

// Dense float tensor, row-major, rank <= 4. Feature maps use {N,C,H,W}.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), 0.0f);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    bool empty() const { return data_.empty(); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const {
        assert(i >= 0 && i < rank());
        return shape_[static_cast<size_t>(i)];
    }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // {N,C,H,W} accessor.
    float& at(int n, int c, int h, int w) {
        assert(rank() == 4);
        return data_[idx4(n, c, h, w)];
    }
    float at(int n, int c, int h, int w) const {
        assert(rank() == 4);
        return data_[idx4(n, c, h, w)];
    }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "{";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "}";
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            assert(d >= 0);
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

private:
    size_t idx4(int n, int c, int h, int w) const {
        const int C = shape_[1], H = shape_[2], W = shape_[3];
        assert(n >= 0 && n < shape_[0] && c >= 0 && c < C && h >= 0 && h < H && w >= 0 && w < W);
        return static_cast<size_t>(((static_cast<int64_t>(n) * C + c) * H + h) * W + w);
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

} // namespace isoseg
