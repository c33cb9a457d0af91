#pragma once

#include <complex>
#include <vector>

#include "qbv/audio.hpp"

namespace qbv {

// Framing shared by the barkgram and MFCC front ends: 4096-sample Hann
// window (~93 ms at 44.1 kHz) with hop 512 (87.5% overlap).
inline constexpr int kFftSize = 4096;
inline constexpr int kHopSize = 512;
inline constexpr int kSpectrumBins = kFftSize / 2 + 1;

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse = false);

/// Column-major spectrogram frame container: frames[t] is one spectrum.
struct Spectrogram {
    std::vector<std::vector<double>> frames;  // each kSpectrumBins long
    size_t n_frames() const { return frames.size(); }
};

/// Hann-windowed magnitude STFT. Clips shorter than one window are
/// zero-padded to one window; frame count = floor((N-4096)/512)+1.
Spectrogram stft_magnitude(const AudioClip& clip);

/// Same framing, |X|^2 instead of |X|.
Spectrogram stft_power(const AudioClip& clip);

/// Center frequency of one-sided FFT bin k at the canonical rate.
inline double bin_frequency(int k) {
    return double(k) * kSampleRate / kFftSize;
}

}  // namespace qbv
