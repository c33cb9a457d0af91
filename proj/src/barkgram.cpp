#include "qbv/barkgram.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qbv/dsp.hpp"

namespace qbv {

namespace {

double traunmueller_bark(double f) { return 26.81 * f / (1960.0 + f) - 0.53; }

constexpr double kPowerFloor = 1e-10;

}  // namespace

double terhardt_weight(double freq_hz) {
    if (freq_hz <= 0.0)
        throw std::invalid_argument("terhardt_weight: frequency must be > 0");
    const double k = freq_hz / 1000.0;
    return -3.64 * std::pow(k, -0.8) +
           6.5 * std::exp(-0.6 * (k - 3.3) * (k - 3.3)) -
           1e-3 * k * k * k * k;
}

int bark_band_index(double freq_hz, int n_bands) {
    if (freq_hz <= 0.0 || freq_hz > kSampleRate / 2.0)
        throw std::invalid_argument("bark_band_index: frequency out of range");
    if (n_bands < 1)
        throw std::invalid_argument("bark_band_index: n_bands must be >= 1");
    const double z_top = traunmueller_bark(kSampleRate / 2.0);
    const int band = int(std::floor(n_bands * traunmueller_bark(freq_hz) / z_top));
    return std::clamp(band, 0, n_bands - 1);
}

Barkgram compute_barkgram(const AudioClip& clip, int n_bands) {
    const Spectrogram sg = stft_power(clip);

    // Per-bin weight and band assignment (bin 0 is DC; it carries no
    // defined Terhardt weight, route it into band 0 unweighted).
    std::vector<double> gain(kSpectrumBins);
    std::vector<int> band_of(kSpectrumBins);
    gain[0] = 1.0;
    band_of[0] = 0;
    for (int k = 1; k < kSpectrumBins; ++k) {
        gain[k] = std::pow(10.0, terhardt_weight(bin_frequency(k)) / 10.0);
        band_of[k] = bark_band_index(bin_frequency(k), n_bands);
    }

    Barkgram bg;
    bg.n_bands = n_bands;
    bg.n_frames = int(sg.n_frames());
    bg.values.assign(size_t(n_bands) * bg.n_frames, 0.0);
    std::vector<double> band_power(n_bands);
    for (int t = 0; t < bg.n_frames; ++t) {
        std::fill(band_power.begin(), band_power.end(), 0.0);
        const auto& frame = sg.frames[t];
        for (int k = 0; k < kSpectrumBins; ++k)
            band_power[band_of[k]] += frame[k] * gain[k];
        for (int b = 0; b < n_bands; ++b) {
            const double db = 10.0 * std::log10(band_power[b] + kPowerFloor);
            bg.at(b, t) = std::max(0.0, db - kBarkFloorDb);
        }
    }
    return bg;
}

Barkgram fix_frames(const Barkgram& bg, int n_frames) {
    if (n_frames < 1)
        throw std::invalid_argument("fix_frames: n_frames must be >= 1");
    Barkgram out;
    out.n_bands = bg.n_bands;
    out.n_frames = n_frames;
    out.frame_hop_s = bg.frame_hop_s;
    out.values.assign(size_t(bg.n_bands) * n_frames, 0.0);
    const int keep = std::min(n_frames, bg.n_frames);
    for (int b = 0; b < bg.n_bands; ++b)
        for (int t = 0; t < keep; ++t) out.at(b, t) = bg.at(b, t);
    return out;
}

Barkgram normalize_unit(const Barkgram& bg) {
    Barkgram out = bg;
    for (double& v : out.values)
        v = std::clamp(v / kBarkRangeDb, 0.0, 1.0);
    return out;
}

void save_barkgram_csv(const std::string& path, const Barkgram& bg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("barkgram: cannot write " + path);
    f.precision(9);
    for (int b = 0; b < bg.n_bands; ++b) {
        for (int t = 0; t < bg.n_frames; ++t)
            f << (t ? "," : "") << bg.at(b, t);
        f << '\n';
    }
}

Barkgram load_barkgram_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("barkgram: cannot open " + path);
    Barkgram bg;
    std::string line;
    std::vector<double> vals;
    int n_frames = -1;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        int count = 0;
        while (std::getline(ss, field, ',')) {
            vals.push_back(std::stod(field));
            ++count;
        }
        if (n_frames < 0)
            n_frames = count;
        else if (count != n_frames)
            throw std::runtime_error("barkgram: ragged rows in " + path);
        ++bg.n_bands;
    }
    bg.n_frames = std::max(n_frames, 0);
    bg.values = std::move(vals);
    return bg;
}

void save_barkgram_bin(const std::string& path, const Barkgram& bg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("barkgram: cannot write " + path);
    f.write("BKG1", 4);
    const uint32_t dims[2] = {uint32_t(bg.n_bands), uint32_t(bg.n_frames)};
    f.write(reinterpret_cast<const char*>(dims), 8);
    for (double v : bg.values) {
        const float fv = float(v);
        f.write(reinterpret_cast<const char*>(&fv), 4);
    }
}

Barkgram load_barkgram_bin(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("barkgram: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "BKG1", 4) != 0)
        throw std::runtime_error("barkgram: bad magic in " + path);
    uint32_t dims[2];
    f.read(reinterpret_cast<char*>(dims), 8);
    Barkgram bg;
    bg.n_bands = int(dims[0]);
    bg.n_frames = int(dims[1]);
    bg.values.resize(size_t(bg.n_bands) * bg.n_frames);
    for (double& v : bg.values) {
        float fv;
        f.read(reinterpret_cast<char*>(&fv), 4);
        v = fv;
    }
    if (!f) throw std::runtime_error("barkgram: truncated file " + path);
    return bg;
}

}  // namespace qbv
