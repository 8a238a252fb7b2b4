#include "iptdet/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include <fftw3.h>
#include <json.hpp>

#include "iptdet/errors.hpp"

namespace iptdet {

namespace {

constexpr int kFftSize = 32768; // next power of two above the longest kernel
constexpr double kKernelSparsity = 1e-4;

double bin_frequency(int bin) {
    return kFmin * std::pow(2.0, static_cast<double>(bin) / kBinsPerOctave);
}

// Reflect index without repeating the edge sample: x[-i] -> x[i],
// x[len-1+i] -> x[len-1-i]. Valid while the overhang stays below len.
std::size_t reflect(std::int64_t i, std::int64_t len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * len - 2 - i;
    return static_cast<std::size_t>(i);
}

} // namespace

int cqt_frame_count(std::int64_t n_samples) { return frame_count(n_samples, kHop); }

double cqt_bin_frequency(int bin) { return bin_frequency(bin); }

// Frequency-domain kernel of one bin: the conjugate spectrum of a
// Hann-windowed complex exponential, pruned to its significant range and
// prescaled so a unit-amplitude tone at the bin frequency yields magnitude 1.
struct CqtTransform::Impl {
    struct Kernel {
        int first_bin = 0; // DFT index of coef[0]; may be negative (wraps)
        std::vector<std::complex<double>> coef;
        int window = 0;
    };
    std::vector<Kernel> kernels;
    int min_len = 0;
    fftw_plan plan = nullptr;

    ~Impl() {
        if (plan) fftw_destroy_plan(plan);
    }
};

CqtTransform::CqtTransform() : impl_(std::make_unique<Impl>()) {
    const double q = 1.0 / (std::pow(2.0, 1.0 / kBinsPerOctave) - 1.0);

    auto* time_buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kFftSize));
    auto* freq_buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kFftSize));
    fftw_plan kplan = fftw_plan_dft_1d(kFftSize, time_buf, freq_buf, FFTW_FORWARD, FFTW_ESTIMATE);

    impl_->kernels.resize(kCqtBins);
    for (int b = 0; b < kCqtBins; ++b) {
        const double f = bin_frequency(b);
        const int n_k = static_cast<int>(std::ceil(q * kTargetSampleRate / f));
        impl_->min_len = std::max(impl_->min_len, n_k);

        std::memset(time_buf, 0, sizeof(fftw_complex) * kFftSize);
        const int off = kFftSize / 2 - n_k / 2;
        double win_sum = 0.0;
        for (int n = 0; n < n_k; ++n) {
            const double w =
                0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / (n_k - 1));
            const double theta = -2.0 * std::numbers::pi * f * n / kTargetSampleRate;
            // conj(kernel): the analysis below needs FFT(conj(k)).
            time_buf[off + n][0] = w * std::cos(theta);
            time_buf[off + n][1] = -w * std::sin(theta);
            win_sum += w;
        }
        fftw_execute(kplan);

        // coef[j] = conj(FFT(conj k))[j] / kFftSize, prescaled by 2 / win_sum.
        std::vector<std::complex<double>> full(kFftSize);
        double peak = 0.0;
        const double scale = 2.0 / (win_sum * kFftSize);
        for (int j = 0; j < kFftSize; ++j) {
            full[j] = std::complex<double>(freq_buf[j][0], -freq_buf[j][1]) * scale;
            peak = std::max(peak, std::abs(full[j]));
        }
        // The support is contiguous around the bin frequency; scan outward
        // from there until both ends drop below the pruning threshold.
        // Indices are kept signed so support can wrap through DC.
        const int center = static_cast<int>(std::lround(f * kFftSize / kTargetSampleRate));
        const double cutoff = peak * kKernelSparsity;
        auto mag_at = [&](int j) { return std::abs(full[(j % kFftSize + kFftSize) % kFftSize]); };
        int lo = center, hi = center;
        while (center - lo < kFftSize / 2 && mag_at(lo - 1) >= cutoff) --lo;
        while (hi - center < kFftSize / 2 && mag_at(hi + 1) >= cutoff) ++hi;
        auto& ker = impl_->kernels[static_cast<std::size_t>(b)];
        ker.first_bin = lo;
        ker.window = n_k;
        ker.coef.reserve(static_cast<std::size_t>(hi - lo + 1));
        for (int j = lo; j <= hi; ++j) {
            ker.coef.push_back(full[static_cast<std::size_t>((j % kFftSize + kFftSize) % kFftSize)]);
        }
    }
    fftw_destroy_plan(kplan);
    fftw_free(time_buf);
    fftw_free(freq_buf);

    auto* rin = static_cast<double*>(fftw_malloc(sizeof(double) * kFftSize));
    auto* rout = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (kFftSize / 2 + 1)));
    impl_->plan = fftw_plan_dft_r2c_1d(kFftSize, rin, rout, FFTW_ESTIMATE);
    fftw_free(rin);
    fftw_free(rout);
}

CqtTransform::~CqtTransform() = default;

int CqtTransform::min_length() const { return impl_->min_len; }

int CqtTransform::window_length(int bin) const {
    return impl_->kernels[static_cast<std::size_t>(bin)].window;
}

CqtSpectrogram CqtTransform::compute(const AudioClip& clip) const {
    if (clip.sample_rate != kTargetSampleRate) {
        throw ValidationError("CQT input must be at 44100 Hz, got " +
                              std::to_string(clip.sample_rate));
    }
    const auto len = static_cast<std::int64_t>(clip.samples.size());
    if (len < impl_->min_len) {
        throw ValidationError("CQT input of " + std::to_string(len) +
                              " samples is shorter than the longest analysis window (" +
                              std::to_string(impl_->min_len) + "); pad the signal first");
    }

    const int n_frames = cqt_frame_count(len);
    CqtSpectrogram out;
    out.n_frames = n_frames;
    out.mag.assign(static_cast<std::size_t>(kCqtBins) * n_frames, 0.0);

    auto* rin = static_cast<double*>(fftw_malloc(sizeof(double) * kFftSize));
    auto* rout = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (kFftSize / 2 + 1)));

    // Fetch a DFT value at any signed index of the real frame's spectrum.
    auto spectrum_at = [&](int j) -> std::complex<double> {
        j = (j % kFftSize + kFftSize) % kFftSize;
        if (j <= kFftSize / 2) return {rout[j][0], rout[j][1]};
        const int m = kFftSize - j;
        return {rout[m][0], -rout[m][1]};
    };

    for (int t = 0; t < n_frames; ++t) {
        const std::int64_t start = static_cast<std::int64_t>(t) * kHop - kFftSize / 2;
        for (int m = 0; m < kFftSize; ++m) {
            rin[m] = clip.samples[reflect(start + m, len)];
        }
        fftw_execute_dft_r2c(impl_->plan, rin, rout);
        for (int b = 0; b < kCqtBins; ++b) {
            const auto& ker = impl_->kernels[static_cast<std::size_t>(b)];
            std::complex<double> acc{0.0, 0.0};
            for (std::size_t i = 0; i < ker.coef.size(); ++i) {
                acc += spectrum_at(ker.first_bin + static_cast<int>(i)) * ker.coef[i];
            }
            out.at(b, t) = std::abs(acc);
        }
    }
    fftw_free(rin);
    fftw_free(rout);
    return out;
}

CqtSpectrogram compute_cqt(const AudioClip& clip) {
    static const CqtTransform transform;
    return transform.compute(clip);
}

std::vector<LabeledClip> clip_3s(const Waveform& w, const FrameLabelMatrix& track_labels,
                                 const std::string& source_id) {
    if (w.sample_rate != kTargetSampleRate) {
        throw ValidationError("clip_3s expects 44100 Hz audio");
    }
    const auto len = static_cast<std::int64_t>(w.samples.size());
    if (len == 0) throw ValidationError("clip_3s: empty waveform");

    const int t_track = cqt_frame_count(len);
    const int t_lab = track_labels.n_frames;
    if (std::abs(t_track - t_lab) > 1) {
        throw ValidationError("label matrix has " + std::to_string(t_lab) + " frames but " +
                              source_id + " spans " + std::to_string(t_track) +
                              "; they must agree to within one frame");
    }

    const int t_clip = cqt_frame_count(kClipSamples); // 259
    const auto n_clips = static_cast<int>((len + kClipSamples - 1) / kClipSamples);

    // Clip k owns label columns [b_k, b_{k+1}); the last clip owns the tail.
    auto boundary = [&](int k) {
        if (k >= n_clips) return t_lab;
        const auto b = static_cast<int>(
            (static_cast<std::int64_t>(k) * kClipSamples + kHop - 1) / kHop);
        return std::min(b, t_lab);
    };

    std::vector<LabeledClip> clips;
    clips.reserve(static_cast<std::size_t>(n_clips));
    for (int k = 0; k < n_clips; ++k) {
        LabeledClip lc;
        lc.audio.source_id = source_id;
        lc.audio.start_offset = 3.0 * k;
        lc.audio.samples.assign(kClipSamples, 0.0);
        const std::int64_t s0 = static_cast<std::int64_t>(k) * kClipSamples;
        const std::int64_t s1 = std::min<std::int64_t>(s0 + kClipSamples, len);
        std::copy(w.samples.begin() + s0, w.samples.begin() + s1, lc.audio.samples.begin());

        const int b0 = boundary(k);
        const int owned = std::min(boundary(k + 1) - b0, t_clip);
        lc.labels = FrameLabelMatrix(t_clip, kHop, kTargetSampleRate);
        lc.valid.assign(static_cast<std::size_t>(t_clip), 0);
        for (int j = 0; j < owned; ++j) {
            lc.valid[static_cast<std::size_t>(j)] = 1;
            for (int c = 0; c < kNumIptClasses; ++c) {
                lc.labels.set(c, j, track_labels.at(c, b0 + j));
            }
        }
        lc.n_valid = owned;
        clips.push_back(std::move(lc));
    }
    return clips;
}

// ---------------------------------------------------------------------------
// Feature cache
// ---------------------------------------------------------------------------

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path FeatureCache::manifest_path() const { return dir_ / "manifest.json"; }

CqtSpectrogram FeatureCache::get(const AudioClip& clip, int clip_index) {
    const std::string key = clip.source_id + "_" + std::to_string(clip_index);
    const auto file = dir_ / (key + ".f64");
    const int n_frames = cqt_frame_count(static_cast<std::int64_t>(clip.samples.size()));
    const auto expected_bytes =
        static_cast<std::uintmax_t>(kCqtBins) * static_cast<std::uintmax_t>(n_frames) * sizeof(double);

    if (std::filesystem::exists(file) && std::filesystem::file_size(file) == expected_bytes) {
        CqtSpectrogram spec;
        spec.n_frames = n_frames;
        spec.mag.resize(static_cast<std::size_t>(kCqtBins) * n_frames);
        std::ifstream in(file, std::ios::binary);
        in.read(reinterpret_cast<char*>(spec.mag.data()),
                static_cast<std::streamsize>(expected_bytes));
        if (in) return spec;
    }

    CqtSpectrogram spec = compute_cqt(clip);
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write feature cache file " + file.string());
    out.write(reinterpret_cast<const char*>(spec.mag.data()),
              static_cast<std::streamsize>(expected_bytes));
    if (!out) throw IoError("short write to " + file.string());

    nlohmann::json manifest;
    {
        std::ifstream mf(manifest_path());
        if (mf) {
            try {
                mf >> manifest;
            } catch (const nlohmann::json::exception&) {
                manifest = nlohmann::json::object();
            }
        }
    }
    manifest[key] = {{"source_id", clip.source_id},
                     {"start_offset", clip.start_offset},
                     {"n_bins", kCqtBins},
                     {"n_frames", n_frames}};
    std::ofstream mf(manifest_path());
    mf << manifest.dump(1) << "\n";
    return spec;
}

} // namespace iptdet
