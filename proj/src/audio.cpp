#include "qbv/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace qbv {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("wav: " + what + ": " + path);
}

uint32_t read_u32(const uint8_t* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}
uint16_t read_u16(const uint8_t* p) { return uint16_t(p[0] | (p[1] << 8)); }

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(path, "cannot open");
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        fail(path, "not a RIFF/WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data = nullptr;
    size_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const uint8_t* chunk = buf.data() + pos;
        uint32_t len = read_u32(chunk + 4);
        if (pos + 8 + len > buf.size()) len = uint32_t(buf.size() - pos - 8);
        if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16) {
            format = read_u16(chunk + 8);
            channels = read_u16(chunk + 10);
            rate = read_u32(chunk + 12);
            bits = read_u16(chunk + 22);
            if (format == 0xFFFE && len >= 40)  // WAVE_FORMAT_EXTENSIBLE
                format = read_u16(chunk + 32);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_len = len;
        }
        pos += 8 + len + (len & 1);
    }

    if (!data || format == 0) fail(path, "missing fmt or data chunk");
    if (channels < 1 || channels > 2)
        fail(path, "unsupported channel count " + std::to_string(channels));
    if (rate == 0) fail(path, "zero sample rate");

    const bool is_float = format == 3;
    if (format != 1 && !is_float) fail(path, "unsupported encoding");
    if (is_float && bits != 32) fail(path, "unsupported float bit depth");
    if (!is_float && bits != 8 && bits != 16 && bits != 24 && bits != 32)
        fail(path, "unsupported bit depth " + std::to_string(bits));

    const size_t bytes_per = bits / 8;
    const size_t n_frames = data_len / (bytes_per * channels);
    if (n_frames == 0) fail(path, "zero-length audio");

    std::vector<double> mono(n_frames);
    for (size_t i = 0; i < n_frames; ++i) {
        double acc = 0;
        for (int c = 0; c < channels; ++c) {
            const uint8_t* p = data + (i * channels + c) * bytes_per;
            double v;
            switch (bits) {
                case 8:
                    v = (int(p[0]) - 128) / 128.0;
                    break;
                case 16:
                    v = int16_t(read_u16(p)) / 32768.0;
                    break;
                case 24: {
                    int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                    if (s & 0x800000) s |= ~0xFFFFFF;
                    v = s / 8388608.0;
                    break;
                }
                default:
                    if (is_float) {
                        float fv;
                        std::memcpy(&fv, p, 4);
                        v = fv;
                    } else {
                        v = int32_t(read_u32(p)) / 2147483648.0;
                    }
            }
            acc += v;
        }
        mono[i] = acc / channels;
    }

    AudioClip clip;
    clip.sample_rate = kSampleRate;
    clip.samples = int(rate) == kSampleRate
                       ? std::move(mono)
                       : resample_sinc(mono, int(rate), kSampleRate);
    for (double& v : clip.samples) v = clamp1(v);
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(path, "cannot open for writing");
    const uint32_t n = uint32_t(clip.samples.size());
    const uint32_t data_len = n * 2;
    auto u32 = [&](uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { f.write(reinterpret_cast<char*>(&v), 2); };
    f.write("RIFF", 4);
    u32(36 + data_len);
    f.write("WAVEfmt ", 8);
    u32(16);
    u16(1);  // PCM
    u16(1);  // mono
    u32(uint32_t(clip.sample_rate));
    u32(uint32_t(clip.sample_rate) * 2);
    u16(2);
    u16(16);
    f.write("data", 4);
    u32(data_len);
    for (double v : clip.samples) {
        int s = int(std::lround(clamp1(v) * 32767.0));
        u16(uint16_t(int16_t(s)));
    }
}

std::vector<double> resample_sinc(const std::vector<double>& in, int src_rate,
                                  int dst_rate) {
    if (src_rate == dst_rate || in.empty()) return in;
    const double ratio = double(src_rate) / dst_rate;
    const double cutoff = std::min(1.0, 1.0 / ratio);  // in source Nyquist units
    const int half_taps = 48;
    const size_t n_out =
        size_t(std::llround(double(in.size()) * dst_rate / src_rate));
    std::vector<double> out(n_out);
    const double pi = std::numbers::pi;
    for (size_t i = 0; i < n_out; ++i) {
        const double center = i * ratio;  // position in source samples
        const int first = int(std::floor(center)) - half_taps + 1;
        const int last = int(std::floor(center)) + half_taps;
        double acc = 0;
        for (int m = std::max(first, 0);
             m <= std::min(last, int(in.size()) - 1); ++m) {
            const double t = (m - center) * cutoff;
            double s = t == 0.0 ? 1.0 : std::sin(pi * t) / (pi * t);
            // Hann window over the tap span
            const double w =
                0.5 + 0.5 * std::cos(pi * (m - center) / half_taps);
            acc += in[m] * s * w;
        }
        out[i] = acc * cutoff;
    }
    return out;
}

}  // namespace qbv
