#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qbv {

/// Dense (batch, channels, bands, frames) tensor, row-major.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(size_t(n_) * c_ * h_ * w_, T(0)) {}

    size_t size() const { return v.size(); }
    size_t plane() const { return size_t(h) * w; }
    size_t sample_stride() const { return size_t(c) * h * w; }

    T* sample(int b) { return v.data() + b * sample_stride(); }
    const T* sample(int b) const { return v.data() + b * sample_stride(); }

    T& at(int b, int ch, int y, int x) {
        return v[((size_t(b) * c + ch) * h + y) * w + x];
    }
    T at(int b, int ch, int y, int x) const {
        return v[((size_t(b) * c + ch) * h + y) * w + x];
    }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

/// C (m x n) = or += A (m x k) * B (k x n), all row-major.
template <typename T>
void gemm(int m, int n, int k, const T* A, const T* B, T* C,
          bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        T* ci = C + size_t(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = T(0);
        const T* ai = A + size_t(i) * k;
        for (int l = 0; l < k; ++l) {
            const T a = ai[l];
            if (a == T(0)) continue;
            const T* bl = B + size_t(l) * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bl[j];
        }
    }
}

}  // namespace qbv
