#include "isoseg/onehot.hpp"

#include <cstring>
#include <stdexcept>

namespace isoseg::cond {

OneHotCode encode_onehot(int k, int n) {
    if (n < 1) throw std::runtime_error("encode_onehot: length must be >= 1");
    if (k < 0 || k >= n)
        throw std::runtime_error("encode_onehot: index " + std::to_string(k) +
                                 " out of range for length " + std::to_string(n));
    return OneHotCode{k, n};
}

Tensor attach_planes(const Tensor& x, const std::vector<float>& values) {
    if (x.rank() != 4) throw std::runtime_error("attach_planes: expected {N,C,H,W}");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int E = static_cast<int>(values.size());
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor out({N, C + E, H, W});
    for (int n = 0; n < N; ++n) {
        std::memcpy(out.data() + static_cast<int64_t>(n) * (C + E) * hw,
                    x.data() + static_cast<int64_t>(n) * C * hw,
                    sizeof(float) * static_cast<size_t>(C * hw));
        for (int e = 0; e < E; ++e) {
            float* plane = out.data() + (static_cast<int64_t>(n) * (C + E) + C + e) * hw;
            for (int64_t i = 0; i < hw; ++i) plane[i] = values[static_cast<size_t>(e)];
        }
    }
    return out;
}

} // namespace isoseg::cond
