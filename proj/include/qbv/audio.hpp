#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qbv {

// Canonical rate for everything downstream of ingestion.
inline constexpr int kSampleRate = 44100;

/// Mono PCM clip at the canonical sample rate, amplitudes in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = kSampleRate;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

/// Load a PCM WAV file (8/16/24/32-bit integer or 32-bit float, 1-2
/// channels). Channels are averaged to mono, the result is resampled to
/// 44100 Hz and clamped to [-1, 1]. Throws std::runtime_error with the
/// offending path on unreadable files, unsupported encodings or
/// zero-length audio.
AudioClip load_wav(const std::string& path);

/// Write a mono clip as 16-bit PCM. Used by the corpus tooling and tests.
void save_wav(const std::string& path, const AudioClip& clip);

/// Windowed-sinc resampling of an arbitrary-rate signal to dst_rate.
std::vector<double> resample_sinc(const std::vector<double>& in, int src_rate,
                                  int dst_rate);

}  // namespace qbv
