#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "iptdet/audio.hpp"
#include "iptdet/dataset.hpp"

namespace iptdet {

inline constexpr int kCqtBins = 88;
inline constexpr int kHop = 512;
inline constexpr double kFmin = 27.5;
inline constexpr int kBinsPerOctave = 12;
inline constexpr int kClipSamples = 3 * kTargetSampleRate; // 132300

// Audio slice at 44.1 kHz. start_offset locates it inside its source track.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = kTargetSampleRate;
    std::string source_id;
    double start_offset = 0.0;
};

// Log-frequency magnitude spectrogram, 88 bins from A0 upward, 12 per
// octave. Bin-major storage: mag[b * n_frames + t].
struct CqtSpectrogram {
    int n_bins = kCqtBins;
    int n_frames = 0;
    int hop = kHop;
    double fmin = kFmin;
    int bins_per_octave = kBinsPerOctave;
    std::vector<double> mag;

    double at(int b, int t) const { return mag[static_cast<std::size_t>(b) * n_frames + t]; }
    double& at(int b, int t) { return mag[static_cast<std::size_t>(b) * n_frames + t]; }
};

// One training/evaluation unit: 3 s of audio plus the frame labels the clip
// owns. Clips shorter than 3 s are zero-padded; padding columns have
// valid[t] == 0 and all-zero labels.
struct LabeledClip {
    AudioClip audio;
    FrameLabelMatrix labels;
    std::vector<std::uint8_t> valid;
    int n_valid = 0;
};

// Cuts a track into consecutive 3 s windows and hands each window the label
// columns whose frame centers fall inside it. Concatenating the valid
// columns of all clips restores track_labels exactly. The label matrix must
// cover the waveform to within one frame.
std::vector<LabeledClip> clip_3s(const Waveform& w, const FrameLabelMatrix& track_labels,
                                 const std::string& source_id);

// 1 + floor(len / hop) frames under centered framing; matches frame_count()
// used by the rasterizer, so features and labels align column-for-column.
int cqt_frame_count(std::int64_t n_samples);

// Constant-Q analyzer. Kernels are precomputed once per instance; compute()
// is const and safe to call from several threads.
class CqtTransform {
  public:
    CqtTransform();
    ~CqtTransform();
    CqtTransform(const CqtTransform&) = delete;
    CqtTransform& operator=(const CqtTransform&) = delete;

    // Input must be at 44.1 kHz and at least min_length() samples (the
    // longest analysis window); shorter input raises a validation error
    // telling the caller to pad.
    CqtSpectrogram compute(const AudioClip& clip) const;

    int min_length() const;
    // Analysis window length of one bin; exposed for tests.
    int window_length(int bin) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// compute() through a lazily built process-wide transform.
CqtSpectrogram compute_cqt(const AudioClip& clip);

// Center frequency of a bin in Hz.
double cqt_bin_frequency(int bin);

// On-disk feature cache: <dir>/<source_id>_<clip index>.f64 plus a JSON
// manifest recording source_id, start_offset and shape per entry.
class FeatureCache {
  public:
    explicit FeatureCache(std::filesystem::path dir);

    // Returns the cached CQT for the clip, computing and storing it on miss.
    CqtSpectrogram get(const AudioClip& clip, int clip_index);

  private:
    std::filesystem::path dir_;
    std::filesystem::path manifest_path() const;
};

} // namespace iptdet
