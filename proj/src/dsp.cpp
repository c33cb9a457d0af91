#include "qbv/dsp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qbv {

void fft(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang =
            2 * std::numbers::pi / double(len) * (inverse ? 1 : -1);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1);
            for (size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= double(n);
}

namespace {

const std::vector<double>& hann_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kFftSize);
        for (int i = 0; i < kFftSize; ++i)
            v[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / kFftSize);
        return v;
    }();
    return w;
}

Spectrogram stft_impl(const AudioClip& clip, bool power) {
    std::vector<double> x = clip.samples;
    if (x.size() < size_t(kFftSize)) x.resize(kFftSize, 0.0);
    const size_t n_frames = (x.size() - kFftSize) / kHopSize + 1;
    const auto& win = hann_window();

    Spectrogram sg;
    sg.frames.reserve(n_frames);
    std::vector<std::complex<double>> buf(kFftSize);
    for (size_t t = 0; t < n_frames; ++t) {
        const double* src = x.data() + t * kHopSize;
        for (int i = 0; i < kFftSize; ++i) buf[i] = src[i] * win[i];
        fft(buf);
        std::vector<double> frame(kSpectrumBins);
        for (int k = 0; k < kSpectrumBins; ++k) {
            const double m2 = std::norm(buf[k]);
            frame[k] = power ? m2 : std::sqrt(m2);
        }
        sg.frames.push_back(std::move(frame));
    }
    return sg;
}

}  // namespace

Spectrogram stft_magnitude(const AudioClip& clip) {
    return stft_impl(clip, false);
}

Spectrogram stft_power(const AudioClip& clip) { return stft_impl(clip, true); }

}  // namespace qbv
