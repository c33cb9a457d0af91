#pragma once

#include <string>
#include <vector>

#include "qbv/audio.hpp"

namespace qbv {

// Floor-shifted loudness: value = max(0, dB - kBarkFloorDb), so digital
// silence is exactly 0 and the usable dynamic range is 70 dB.
inline constexpr double kBarkFloorDb = -70.0;
inline constexpr double kBarkRangeDb = 70.0;

/// Bands x frames matrix of Terhardt-weighted loudness above the floor.
struct Barkgram {
    int n_bands = 0;
    int n_frames = 0;
    std::vector<double> values;  // row-major, band-major
    double frame_hop_s = 512.0 / kSampleRate;

    double& at(int band, int frame) { return values[size_t(band) * n_frames + frame]; }
    double at(int band, int frame) const {
        return values[size_t(band) * n_frames + frame];
    }
};

/// Terhardt ear-model weight in dB:
/// A(f) = -3.64 (f/kHz)^-0.8 + 6.5 exp(-0.6 (f/kHz - 3.3)^2) - 1e-3 (f/kHz)^4.
double terhardt_weight(double freq_hz);

/// Bark band for a frequency under the Traunmueller Hz->Bark mapping with
/// uniform subdivision of [0, z(22050)] into n_bands bands.
int bark_band_index(double freq_hz, int n_bands);

/// Full barkgram: per frame the FFT-bin powers are Terhardt-weighted,
/// summed per Bark band, converted to dB and floor-shifted.
Barkgram compute_barkgram(const AudioClip& clip, int n_bands);

/// Zero-pad (right) or truncate (keep first frames) to exactly n_frames.
Barkgram fix_frames(const Barkgram& bg, int n_frames = 128);

/// Scale by the 70 dB dynamic range and clamp into [0, 1].
Barkgram normalize_unit(const Barkgram& bg);

// Serialization: CSV (one row per band) and raw binary
// ("BKG1", n_bands u32le, n_frames u32le, row-major f32le payload).
void save_barkgram_csv(const std::string& path, const Barkgram& bg);
Barkgram load_barkgram_csv(const std::string& path);
void save_barkgram_bin(const std::string& path, const Barkgram& bg);
Barkgram load_barkgram_bin(const std::string& path);

}  // namespace qbv
