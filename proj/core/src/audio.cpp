#include "iptdet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "iptdet/errors.hpp"

namespace iptdet {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8 & 0xff));
    s.push_back(static_cast<char>(v >> 16 & 0xff));
    s.push_back(static_cast<char>(v >> 24 & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8 & 0xff));
}

} // namespace

Waveform read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (raw.size() < 12 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
        std::memcmp(raw.data() + 8, "WAVE", 4) != 0) {
        throw ParseError(path.string() + ": not a RIFF/WAVE file");
    }

    int channels = 0;
    int sample_rate = 0;
    int bits = 0;
    int format = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= raw.size()) {
        const std::uint32_t chunk_size = read_u32(raw.data() + pos + 4);
        const unsigned char* body = raw.data() + pos + 8;
        if (pos + 8 + chunk_size > raw.size()) {
            throw ParseError(path.string() + ": truncated chunk at byte " + std::to_string(pos));
        }
        if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw ParseError(path.string() + ": short fmt chunk");
            format = read_u16(body);
            channels = read_u16(body + 2);
            sample_rate = static_cast<int>(read_u32(body + 4));
            bits = read_u16(body + 14);
            if (format == 0xfffe && chunk_size >= 40) {
                // WAVE_FORMAT_EXTENSIBLE: first two bytes of the GUID name the
                // real format tag.
                format = read_u16(body + 24);
            }
        } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
            data = body;
            data_size = chunk_size;
        }
        pos += 8 + chunk_size + (chunk_size & 1);
    }

    if (channels <= 0 || sample_rate <= 0 || data == nullptr) {
        throw ParseError(path.string() + ": missing fmt or data chunk");
    }
    const bool pcm_int = format == 1 && (bits == 16 || bits == 24);
    const bool pcm_float = format == 3 && bits == 32;
    if (!pcm_int && !pcm_float) {
        throw ParseError(path.string() + ": unsupported encoding (format tag " +
                         std::to_string(format) + ", " + std::to_string(bits) + "-bit); expected 16/24-bit PCM or 32-bit float");
    }

    const std::size_t bytes_per_sample = static_cast<std::size_t>(bits) / 8;
    const std::size_t stride = bytes_per_sample * static_cast<std::size_t>(channels);
    const std::size_t n_frames = data_size / stride;
    if (n_frames == 0) throw ValidationError(path.string() + ": zero-length audio");

    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (int ch = 0; ch < channels; ++ch) {
            const unsigned char* p = data + i * stride + static_cast<std::size_t>(ch) * bytes_per_sample;
            double v = 0.0;
            if (pcm_float) {
                float f;
                std::memcpy(&f, p, 4);
                v = f;
            } else if (bits == 16) {
                const std::int16_t s = static_cast<std::int16_t>(p[0] | p[1] << 8);
                v = s / 32768.0;
            } else {
                std::int32_t s = p[0] | p[1] << 8 | p[2] << 16;
                if (s & 0x800000) s |= ~0xffffff;
                v = s / 8388608.0;
            }
            acc += v;
        }
        w.samples[i] = acc / channels;
    }
    return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
    if (w.sample_rate <= 0) throw ValidationError("write_wav: sample_rate must be positive");
    std::string out;
    const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
    const std::uint32_t data_bytes = n * 2;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_bytes);
    for (double v : w.samples) {
        const double clamped = std::clamp(v, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path.string());
}

Waveform resample(const Waveform& w, int target_rate) {
    if (target_rate <= 0) throw ValidationError("resample: target rate must be positive");
    if (w.sample_rate == target_rate) return w;
    if (w.samples.empty()) return {{}, target_rate};

    const double ratio = static_cast<double>(target_rate) / w.sample_rate;
    const auto out_len = static_cast<std::size_t>(
        std::llround(static_cast<double>(w.samples.size()) * ratio));

    // Hann-windowed sinc interpolation, 32 zero crossings per side. When
    // downsampling the cutoff shrinks to the target Nyquist to suppress
    // aliases.
    constexpr int kZeroCrossings = 32;
    const double cutoff = 0.97 * std::min(1.0, ratio);
    const double half_width = kZeroCrossings / cutoff;
    const auto n_in = static_cast<std::int64_t>(w.samples.size());

    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);
    for (std::size_t m = 0; m < out_len; ++m) {
        const double center = static_cast<double>(m) / ratio;
        const auto lo = static_cast<std::int64_t>(std::ceil(center - half_width));
        const auto hi = static_cast<std::int64_t>(std::floor(center + half_width));
        double acc = 0.0;
        double norm = 0.0;
        for (std::int64_t nidx = std::max<std::int64_t>(lo, 0);
             nidx <= std::min(hi, n_in - 1); ++nidx) {
            const double u = (static_cast<double>(nidx) - center) * cutoff;
            double tap;
            if (std::abs(u) < 1e-12) {
                tap = 1.0;
            } else {
                tap = std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
            }
            const double win_arg = (static_cast<double>(nidx) - center) / half_width;
            tap *= 0.5 + 0.5 * std::cos(std::numbers::pi * win_arg);
            acc += w.samples[static_cast<std::size_t>(nidx)] * tap;
            norm += tap;
        }
        // Normalizing by the realized tap sum keeps DC gain at 1 even where
        // the window is truncated at the signal edges.
        out.samples[m] = norm > 1e-12 ? acc / norm : 0.0;
    }
    return out;
}

Waveform load_audio(const std::filesystem::path& path) {
    Waveform w = read_wav(path);
    return resample(w, kTargetSampleRate);
}

} // namespace iptdet
