#pragma once

#include <filesystem>
#include <vector>

namespace iptdet {

inline constexpr int kTargetSampleRate = 44100;

// Mono waveform with amplitudes in [-1, 1].
struct Waveform {
    std::vector<double> samples;
    int sample_rate = kTargetSampleRate;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Reads a RIFF/WAVE file at its native rate. Accepts 16/24-bit integer PCM
// and 32-bit float, mono or stereo (channels are averaged).
Waveform read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM. Samples outside [-1, 1] are clamped.
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Windowed-sinc rate conversion. Returning length is round(n * target / src),
// so duration is preserved to within half an output sample.
Waveform resample(const Waveform& w, int target_rate);

// read_wav followed by resample to 44100 Hz. Zero-length audio is an error.
Waveform load_audio(const std::filesystem::path& path);

} // namespace iptdet
