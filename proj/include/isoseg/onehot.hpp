#pragma once

#include <vector>

#include "isoseg/tensor.hpp"

namespace isoseg::cond {

// Dataset indicator h_k, broadcast as constant {0,1} planes when attached to
// a tensor. Indicator values are deliberately not remapped to [-1,1].
struct OneHotCode {
    int index = 0;
    int length = 1;

    std::vector<float> vec() const {
        std::vector<float> v(static_cast<size_t>(length), 0.0f);
        v[static_cast<size_t>(index)] = 1.0f;
        return v;
    }
};

OneHotCode encode_onehot(int k, int n);

// Appends one constant plane per value; {N,C,H,W} -> {N,C+len,H,W}. The first
// C channels are copied bit-identically.
Tensor attach_planes(const Tensor& x, const std::vector<float>& values);

inline Tensor attach_code(const Tensor& x, const OneHotCode& code) {
    return attach_planes(x, code.vec());
}

} // namespace isoseg::cond
