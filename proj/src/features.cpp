#include "qbv/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "qbv/csv.hpp"
#include "qbv/dsp.hpp"

namespace qbv {

double pk08_distance(const Barkgram& a, const Barkgram& b) {
    if (a.n_bands != b.n_bands)
        throw std::invalid_argument("pk08_distance: band-count mismatch");
    const int frames = std::max(a.n_frames, b.n_frames);
    double acc = 0;
    for (int band = 0; band < a.n_bands; ++band)
        for (int t = 0; t < frames; ++t) {
            const double va = t < a.n_frames ? a.at(band, t) : 0.0;
            const double vb = t < b.n_frames ? b.at(band, t) : 0.0;
            acc += (va - vb) * (va - vb);
        }
    return std::sqrt(acc);
}

namespace {

constexpr int kNumMelFilters = 40;
constexpr int kNumCepstra = 13;  // coefficients 1..13, MFCC 0 excluded

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular mel filterbank as kNumMelFilters x kSpectrumBins weights.
const std::vector<std::vector<double>>& mel_filterbank() {
    static const std::vector<std::vector<double>> fb = [] {
        std::vector<std::vector<double>> filters(
            kNumMelFilters, std::vector<double>(kSpectrumBins, 0.0));
        const double mel_lo = hz_to_mel(0.0);
        const double mel_hi = hz_to_mel(kSampleRate / 2.0);
        std::vector<double> edges(kNumMelFilters + 2);
        for (int i = 0; i < kNumMelFilters + 2; ++i)
            edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i /
                                 (kNumMelFilters + 1));
        for (int m = 0; m < kNumMelFilters; ++m) {
            const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
            for (int k = 0; k < kSpectrumBins; ++k) {
                const double f = bin_frequency(k);
                if (f > lo && f < mid)
                    filters[m][k] = (f - lo) / (mid - lo);
                else if (f >= mid && f < hi)
                    filters[m][k] = (hi - f) / (hi - mid);
            }
        }
        return filters;
    }();
    return fb;
}

// Five-point regression deltas with edge replication.
std::vector<std::vector<double>> delta(
    const std::vector<std::vector<double>>& x) {
    const int n = int(x.size());
    const int dim = int(x[0].size());
    std::vector<std::vector<double>> d(n, std::vector<double>(dim, 0.0));
    auto clamp_row = [&](int t) { return std::clamp(t, 0, n - 1); };
    for (int t = 0; t < n; ++t)
        for (int j = 0; j < dim; ++j) {
            double acc = 0;
            for (int k = 1; k <= 2; ++k)
                acc += k * (x[clamp_row(t + k)][j] - x[clamp_row(t - k)][j]);
            d[t][j] = acc / 10.0;  // 2 * (1^2 + 2^2)
        }
    return d;
}

}  // namespace

std::vector<std::vector<double>> mfcc_frame_matrix(const AudioClip& clip) {
    const Spectrogram sg = stft_power(clip);
    const auto& fb = mel_filterbank();

    const int n = int(sg.n_frames());
    std::vector<std::vector<double>> cep(n,
                                         std::vector<double>(kNumCepstra, 0.0));
    std::vector<double> log_e(kNumMelFilters);
    for (int t = 0; t < n; ++t) {
        for (int m = 0; m < kNumMelFilters; ++m) {
            double e = 0;
            for (int k = 0; k < kSpectrumBins; ++k)
                e += fb[m][k] * sg.frames[t][k];
            log_e[m] = std::log(e + 1e-10);
        }
        // DCT-II, keeping coefficients 1..13
        for (int c = 1; c <= kNumCepstra; ++c) {
            double acc = 0;
            for (int m = 0; m < kNumMelFilters; ++m)
                acc += log_e[m] *
                       std::cos(std::numbers::pi * c * (m + 0.5) /
                                kNumMelFilters);
            cep[t][c - 1] = acc;
        }
    }

    const auto d1 = delta(cep);
    const auto d2 = delta(d1);
    std::vector<std::vector<double>> out(n,
                                         std::vector<double>(3 * kNumCepstra));
    for (int t = 0; t < n; ++t)
        for (int c = 0; c < kNumCepstra; ++c) {
            out[t][c] = cep[t][c];
            out[t][kNumCepstra + c] = d1[t][c];
            out[t][2 * kNumCepstra + c] = d2[t][c];
        }
    return out;
}

FeatureVector mfcc_features(const AudioClip& clip) {
    const auto frames = mfcc_frame_matrix(clip);
    const int n = int(frames.size());
    const int dim = 3 * kNumCepstra;
    FeatureVector fv;
    fv.extractor_id = "mfcc";
    fv.values.resize(2 * dim, 0.0);
    for (int j = 0; j < dim; ++j) {
        double mean = 0;
        for (int t = 0; t < n; ++t) mean += frames[t][j];
        mean /= n;
        double var = 0;
        for (int t = 0; t < n; ++t) {
            const double d = frames[t][j] - mean;
            var += d * d;
        }
        fv.values[j] = mean;
        fv.values[dim + j] = var / n;
    }
    return fv;
}

namespace {

constexpr int kEnvWindow = 882;  // 20 ms at 44.1 kHz
constexpr int kEnvHop = 441;     // 10 ms

struct Envelope {
    std::vector<double> rms;
    std::vector<double> time_s;  // window-center times
};

Envelope rms_envelope(const std::vector<double>& x) {
    Envelope env;
    const int n = int(x.size());
    const int n_frames = n >= kEnvWindow ? (n - kEnvWindow) / kEnvHop + 1 : 1;
    for (int k = 0; k < n_frames; ++k) {
        const int lo = k * kEnvHop;
        const int hi = std::min(lo + kEnvWindow, n);
        double acc = 0;
        for (int i = lo; i < hi; ++i) acc += x[i] * x[i];
        env.rms.push_back(std::sqrt(acc / std::max(hi - lo, 1)));
        env.time_s.push_back((lo + kEnvWindow / 2.0) / kSampleRate);
    }
    return env;
}

}  // namespace

FeatureVector temporal_features(const AudioClip& clip) {
    const auto& x = clip.samples;
    double peak = 0, energy = 0;
    for (double v : x) {
        peak = std::max(peak, std::abs(v));
        energy += v * v;
    }
    if (peak == 0.0)
        throw std::runtime_error("temporal_features: all-zero clip");

    const Envelope env = rms_envelope(x);
    const double env_peak = *std::max_element(env.rms.begin(), env.rms.end());

    auto first_reach = [&](double level) {
        for (size_t k = 0; k < env.rms.size(); ++k)
            if (env.rms[k] >= level) return env.time_s[k];
        return env.time_s.back();
    };
    const double attack =
        std::max(first_reach(0.9 * env_peak) - first_reach(0.1 * env_peak), 0.0);
    const double lat = std::log10(std::max(attack, 1e-3));

    double num = 0, den = 0;
    for (size_t k = 0; k < env.rms.size(); ++k) {
        const double e2 = env.rms[k] * env.rms[k];
        num += env.time_s[k] * e2;
        den += e2;
    }
    const double tc = num / den;
    const double tcf = peak / std::sqrt(energy / double(x.size()));

    // duration of the sound itself: trim below -60 dBFS
    const double gate = 1e-3;
    size_t first = 0, last = x.size() - 1;
    while (first < x.size() && std::abs(x[first]) < gate) ++first;
    while (last > first && std::abs(x[last]) < gate) --last;
    const double duration = double(last - first + 1) / kSampleRate;

    FeatureVector fv;
    fv.extractor_id = "temp";
    fv.values = {lat, tc, lat / tc, tcf, duration};
    return fv;
}

void save_features_csv(const std::string& path,
                       const std::map<std::string, FeatureVector>& by_id) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("features: cannot write " + path);
    if (by_id.empty()) throw std::runtime_error("features: empty set");
    const size_t dim = by_id.begin()->second.dim();
    f << "id,extractor_id,dim";
    for (size_t j = 0; j < dim; ++j) f << ",v" << j;
    f << '\n';
    f.precision(17);
    for (const auto& [id, fv] : by_id) {
        if (fv.dim() != dim)
            throw std::runtime_error("features: mixed dimensions in one file");
        f << id << ',' << fv.extractor_id << ',' << dim;
        for (double v : fv.values) f << ',' << v;
        f << '\n';
    }
}

std::map<std::string, FeatureVector> load_features_csv(
    const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("features: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("id,extractor_id,dim", 0) != 0)
        throw std::runtime_error("features: bad header in " + path);
    std::map<std::string, FeatureVector> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto fields = csv::split(line);
        if (fields.size() < 3)
            throw std::runtime_error("features: short row in " + path);
        FeatureVector fv;
        fv.extractor_id = fields[1];
        const size_t dim = std::stoul(fields[2]);
        if (fields.size() != 3 + dim)
            throw std::runtime_error("features: dim mismatch in " + path);
        fv.values.reserve(dim);
        for (size_t j = 0; j < dim; ++j)
            fv.values.push_back(std::stod(fields[3 + j]));
        out.emplace(fields[0], std::move(fv));
    }
    return out;
}

}  // namespace qbv
