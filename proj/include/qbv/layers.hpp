#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "qbv/tensor.hpp"

namespace qbv {

/// "Same"-padding geometry: out = ceil(in/stride), total padding
/// max((out-1)*stride + kernel - in, 0) split floor-before/ceil-after.
struct ConvGeom {
    int in_h, in_w, kh, kw, sh, sw;
    int out_h, out_w, pad_top, pad_left;

    ConvGeom(int in_h_, int in_w_, int kh_, int kw_, int sh_, int sw_)
        : in_h(in_h_), in_w(in_w_), kh(kh_), kw(kw_), sh(sh_), sw(sw_) {
        out_h = (in_h + sh - 1) / sh;
        out_w = (in_w + sw - 1) / sw;
        const int pad_h = std::max((out_h - 1) * sh + kh - in_h, 0);
        const int pad_w = std::max((out_w - 1) * sw + kw - in_w, 0);
        pad_top = pad_h / 2;
        pad_left = pad_w / 2;
    }
};

namespace detail {

// Valid output ranges for one kernel offset: all oy in [lo_y, hi_y) map
// inside the input, likewise ox. Removes bounds checks from inner loops.
struct TapRange {
    int lo, hi;
};

inline TapRange tap_range(int out, int in, int stride, int pad, int k) {
    // need 0 <= o*stride - pad + k < in
    int lo = 0;
    const int off = k - pad;
    if (off < 0) lo = (-off + stride - 1) / stride;
    int hi = out;
    const int top = in - 1 - off;
    if (top < 0)
        hi = 0;
    else
        hi = std::min(out, top / stride + 1);
    return {lo, std::max(hi, lo)};
}

}  // namespace detail

/// Strided cross-correlation with "same" zero padding.
/// weights: (out_ch, in_ch, kh, kw) row-major; bias: (out_ch).
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const std::vector<T>& weights,
                          const std::vector<T>& bias, int out_ch, int kh,
                          int kw, int sh, int sw) {
    if (sh < 1 || sw < 1)
        throw std::invalid_argument("conv2d: stride must be >= 1");
    if (weights.size() != size_t(out_ch) * x.c * kh * kw)
        throw std::invalid_argument("conv2d: kernel/channel shape mismatch");
    const ConvGeom g(x.h, x.w, kh, kw, sh, sw);
    Tensor4<T> y(x.n, out_ch, g.out_h, g.out_w);
    const size_t n_pix = size_t(g.out_h) * g.out_w;
    for (int b = 0; b < x.n; ++b) {
        const T* xb = x.sample(b);
        T* yb = y.sample(b);
        for (int oc = 0; oc < out_ch; ++oc) {
            T* yo = yb + oc * n_pix;
            std::fill(yo, yo + n_pix, bias[oc]);
        }
        for (int ic = 0; ic < x.c; ++ic) {
            const T* xc = xb + size_t(ic) * g.in_h * g.in_w;
            for (int oc = 0; oc < out_ch; ++oc) {
                const T* wk =
                    weights.data() + ((size_t(oc) * x.c + ic) * kh) * kw;
                T* yo = yb + oc * n_pix;
                for (int ky = 0; ky < kh; ++ky) {
                    const auto ry =
                        detail::tap_range(g.out_h, g.in_h, sh, g.pad_top, ky);
                    for (int kx = 0; kx < kw; ++kx) {
                        const T w = wk[ky * kw + kx];
                        const auto rx = detail::tap_range(g.out_w, g.in_w, sw,
                                                          g.pad_left, kx);
                        for (int oy = ry.lo; oy < ry.hi; ++oy) {
                            const T* xrow =
                                xc +
                                size_t(oy * sh - g.pad_top + ky) * g.in_w +
                                (rx.lo * sw - g.pad_left + kx);
                            T* yrow = yo + size_t(oy) * g.out_w + rx.lo;
                            const int n = rx.hi - rx.lo;
                            if (sw == 1)
                                for (int i = 0; i < n; ++i)
                                    yrow[i] += w * xrow[i];
                            else
                                for (int i = 0; i < n; ++i)
                                    yrow[i] += w * xrow[size_t(i) * sw];
                        }
                    }
                }
            }
        }
    }
    return y;
}

/// Backward pass: accumulates dW/db and, when dx != nullptr, writes the
/// input gradient.
template <typename T>
void conv2d_backward(const Tensor4<T>& x, const std::vector<T>& weights,
                     int out_ch, int kh, int kw, int sh, int sw,
                     const Tensor4<T>& dy, std::vector<T>& dw,
                     std::vector<T>& db, Tensor4<T>* dx) {
    const ConvGeom g(x.h, x.w, kh, kw, sh, sw);
    const size_t n_pix = size_t(g.out_h) * g.out_w;
    if (dx) *dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    for (int b = 0; b < x.n; ++b) {
        const T* xb = x.sample(b);
        const T* dyb = dy.sample(b);
        for (int oc = 0; oc < out_ch; ++oc) {
            const T* dyo = dyb + oc * n_pix;
            T acc = 0;
            for (size_t p = 0; p < n_pix; ++p) acc += dyo[p];
            db[oc] += acc;
        }
        for (int ic = 0; ic < x.c; ++ic) {
            const T* xc = xb + size_t(ic) * g.in_h * g.in_w;
            T* dxc = dx ? dx->sample(b) + size_t(ic) * g.in_h * g.in_w
                        : nullptr;
            for (int oc = 0; oc < out_ch; ++oc) {
                const T* dyo = dyb + oc * n_pix;
                const size_t wbase = (size_t(oc) * x.c + ic) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    const auto ry =
                        detail::tap_range(g.out_h, g.in_h, sh, g.pad_top, ky);
                    for (int kx = 0; kx < kw; ++kx) {
                        const auto rx = detail::tap_range(g.out_w, g.in_w, sw,
                                                          g.pad_left, kx);
                        const int n = rx.hi - rx.lo;
                        T wgrad = 0;
                        for (int oy = ry.lo; oy < ry.hi; ++oy) {
                            const T* xrow =
                                xc +
                                size_t(oy * sh - g.pad_top + ky) * g.in_w +
                                (rx.lo * sw - g.pad_left + kx);
                            const T* drow = dyo + size_t(oy) * g.out_w + rx.lo;
                            if (sw == 1) {
#pragma omp simd reduction(+ : wgrad)
                                for (int i = 0; i < n; ++i)
                                    wgrad += drow[i] * xrow[i];
                            } else {
#pragma omp simd reduction(+ : wgrad)
                                for (int i = 0; i < n; ++i)
                                    wgrad += drow[i] * xrow[size_t(i) * sw];
                            }
                        }
                        dw[wbase + ky * kw + kx] += wgrad;
                        if (!dxc) continue;
                        const T wv = weights[wbase + ky * kw + kx];
                        for (int oy = ry.lo; oy < ry.hi; ++oy) {
                            const T* drow = dyo + size_t(oy) * g.out_w + rx.lo;
                            T* dxrow =
                                dxc +
                                size_t(oy * sh - g.pad_top + ky) * g.in_w +
                                (rx.lo * sw - g.pad_left + kx);
                            if (sw == 1)
                                for (int i = 0; i < n; ++i)
                                    dxrow[i] += wv * drow[i];
                            else
                                for (int i = 0; i < n; ++i)
                                    dxrow[size_t(i) * sw] += wv * drow[i];
                        }
                    }
                }
            }
        }
    }
}

enum class BnMode { train, infer };

inline constexpr double kBnEps = 1e-3;
inline constexpr double kBnMomentum = 0.99;

/// Per-channel batch statistics saved by the forward pass for backward.
template <typename T>
struct BnCache {
    std::vector<T> mean, inv_std;  // per channel (batch stats, train mode)
};

/// Per-channel normalization over (batch, bands, frames). Train mode uses
/// batch statistics and updates running stats with momentum 0.99; infer
/// mode uses the running stats verbatim.
template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, const std::vector<T>& gamma,
                             const std::vector<T>& beta,
                             std::vector<T>& running_mean,
                             std::vector<T>& running_var, BnMode mode,
                             BnCache<T>* cache = nullptr) {
    const size_t per_ch = size_t(x.n) * x.h * x.w;
    if (mode == BnMode::train && per_ch < 2)
        throw std::runtime_error("batchnorm: degenerate batch in train mode");
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const size_t plane = x.plane();
    std::vector<T> mean(x.c), inv_std(x.c);
    for (int c = 0; c < x.c; ++c) {
        T mu, var;
        if (mode == BnMode::train) {
            T acc = 0;
            for (int b = 0; b < x.n; ++b) {
                const T* p = x.sample(b) + c * plane;
                for (size_t i = 0; i < plane; ++i) acc += p[i];
            }
            mu = acc / T(per_ch);
            T vacc = 0;
            for (int b = 0; b < x.n; ++b) {
                const T* p = x.sample(b) + c * plane;
                for (size_t i = 0; i < plane; ++i) {
                    const T d = p[i] - mu;
                    vacc += d * d;
                }
            }
            var = vacc / T(per_ch);
            running_mean[c] =
                T(kBnMomentum) * running_mean[c] + T(1 - kBnMomentum) * mu;
            running_var[c] =
                T(kBnMomentum) * running_var[c] + T(1 - kBnMomentum) * var;
        } else {
            mu = running_mean[c];
            var = running_var[c];
        }
        mean[c] = mu;
        inv_std[c] = T(1) / std::sqrt(var + T(kBnEps));
        const T scale = gamma[c] * inv_std[c];
        const T shift = beta[c] - scale * mu;
        for (int b = 0; b < x.n; ++b) {
            const T* p = x.sample(b) + c * plane;
            T* q = y.sample(b) + c * plane;
            for (size_t i = 0; i < plane; ++i) q[i] = scale * p[i] + shift;
        }
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

/// Train-mode backward (batch statistics treated as functions of x).
template <typename T>
Tensor4<T> batchnorm_backward(const Tensor4<T>& x, const std::vector<T>& gamma,
                              const BnCache<T>& cache, const Tensor4<T>& dy,
                              std::vector<T>& dgamma, std::vector<T>& dbeta) {
    const size_t per_ch = size_t(x.n) * x.h * x.w;
    const size_t plane = x.plane();
    Tensor4<T> dx(x.n, x.c, x.h, x.w);
    for (int c = 0; c < x.c; ++c) {
        const T mu = cache.mean[c], istd = cache.inv_std[c];
        T sum_dy = 0, sum_dy_xhat = 0;
        for (int b = 0; b < x.n; ++b) {
            const T* xp = x.sample(b) + c * plane;
            const T* dp = dy.sample(b) + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                sum_dy += dp[i];
                sum_dy_xhat += dp[i] * (xp[i] - mu) * istd;
            }
        }
        dbeta[c] += sum_dy;
        dgamma[c] += sum_dy_xhat;
        const T m = T(per_ch);
        const T k = gamma[c] * istd / m;
        for (int b = 0; b < x.n; ++b) {
            const T* xp = x.sample(b) + c * plane;
            const T* dp = dy.sample(b) + c * plane;
            T* op = dx.sample(b) + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                const T xhat = (xp[i] - mu) * istd;
                op[i] = k * (m * dp[i] - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
    return dx;
}

template <typename T>
void relu_inplace(Tensor4<T>& x) {
    for (T& v : x.v) v = std::max(v, T(0));
}

/// dx = dy masked by (activation > 0); `post` is the ReLU output.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& post, const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (size_t i = 0; i < dy.size(); ++i)
        dx.v[i] = post.v[i] > T(0) ? dy.v[i] : T(0);
    return dx;
}

template <typename T>
Tensor4<T> upsample_nearest(const Tensor4<T>& x, int fh, int fw) {
    if (fh < 1 || fw < 1)
        throw std::invalid_argument("upsample: factor must be >= 1");
    Tensor4<T> y(x.n, x.c, x.h * fh, x.w * fw);
    for (int b = 0; b < x.n; ++b)
        for (int c = 0; c < x.c; ++c) {
            const T* xp = x.sample(b) + size_t(c) * x.h * x.w;
            T* yp = y.sample(b) + size_t(c) * y.h * y.w;
            for (int oy = 0; oy < y.h; ++oy) {
                const T* xrow = xp + size_t(oy / fh) * x.w;
                T* yrow = yp + size_t(oy) * y.w;
                for (int ox = 0; ox < y.w; ++ox) yrow[ox] = xrow[ox / fw];
            }
        }
    return y;
}

/// Gradient sums over each repeated block.
template <typename T>
Tensor4<T> upsample_nearest_backward(const Tensor4<T>& dy, int fh, int fw) {
    Tensor4<T> dx(dy.n, dy.c, dy.h / fh, dy.w / fw);
    for (int b = 0; b < dy.n; ++b)
        for (int c = 0; c < dy.c; ++c) {
            const T* dp = dy.sample(b) + size_t(c) * dy.h * dy.w;
            T* op = dx.sample(b) + size_t(c) * dx.h * dx.w;
            for (int oy = 0; oy < dy.h; ++oy) {
                const T* drow = dp + size_t(oy) * dy.w;
                T* orow = op + size_t(oy / fh) * dx.w;
                for (int ox = 0; ox < dy.w; ++ox) orow[ox / fw] += drow[ox];
            }
        }
    return dx;
}

}  // namespace qbv
