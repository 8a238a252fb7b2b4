#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "iptdet/audio.hpp"
#include "iptdet/dataset.hpp"
#include "iptdet/features.hpp"
#include "iptdet/synth.hpp"
#include "oracles.hpp"

using namespace iptdet;

namespace {

const CqtTransform& transform() {
    static CqtTransform t;
    return t;
}

Waveform sine(double freq, double seconds, int sr, double amp = 1.0) {
    Waveform w;
    w.sample_rate = sr;
    const auto n = static_cast<std::size_t>(seconds * sr);
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / sr);
    }
    return w;
}

AudioClip as_clip(const Waveform& w, const std::string& id = "mem") {
    return AudioClip{w.samples, w.sample_rate, id, 0.0};
}

// Time-domain reference: correlate the reflect-padded signal against the
// Hann-windowed complex exponential of one bin, centered on the frame.
double reference_cqt(const std::vector<double>& x, int bin, int frame) {
    const double q = 1.0 / (std::pow(2.0, 1.0 / 12.0) - 1.0);
    const double f = cqt_bin_frequency(bin);
    const int n_k = static_cast<int>(std::ceil(q * 44100.0 / f));
    const auto len = static_cast<std::int64_t>(x.size());
    auto sample = [&](std::int64_t i) {
        if (i < 0) i = -i;
        if (i >= len) i = 2 * len - 2 - i;
        return x[static_cast<std::size_t>(i)];
    };
    const std::int64_t start = static_cast<std::int64_t>(frame) * 512 - n_k / 2;
    std::complex<double> acc{0.0, 0.0};
    double win_sum = 0.0;
    for (int n = 0; n < n_k; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / (n_k - 1));
        const double theta = -2.0 * std::numbers::pi * f * n / 44100.0;
        acc += sample(start + n) * w * std::complex<double>(std::cos(theta), std::sin(theta));
        win_sum += w;
    }
    return std::abs(acc) * 2.0 / win_sum;
}

} // namespace

TEST_CASE("wav files round-trip through 16-bit PCM") {
    const auto dir = std::filesystem::temp_directory_path() / "iptdet_wav_test";
    std::filesystem::create_directories(dir);
    const auto w = sine(440.0, 0.25, 44100, 0.7);
    write_wav(dir / "t.wav", w);
    const auto back = read_wav(dir / "t.wav");
    REQUIRE(back.sample_rate == 44100);
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); i += 97) {
        CHECK(back.samples[i] == doctest::Approx(w.samples[i]).epsilon(0.001));
    }
}

TEST_CASE("unsupported or broken wav input is rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "iptdet_wav_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "bad.wav", std::ios::binary);
        f << "RIFFxxxxNOPE";
    }
    CHECK_THROWS_AS(read_wav(dir / "bad.wav"), ParseError);
    CHECK_THROWS_AS(read_wav(dir / "missing.wav"), IoError);
}

TEST_CASE("resampling 2 s of stereo 48 kHz yields 88200 mono samples") {
    // Stereo file built by hand: left and right differ so the average is
    // checked too.
    const int sr = 48000;
    const auto n = static_cast<std::size_t>(2 * sr);
    std::string body;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * i / sr);
        const double r = 0.25 * std::sin(2.0 * std::numbers::pi * 440.0 * i / sr);
        for (double v : {l, r}) {
            const auto q = static_cast<std::int16_t>(std::lrint(v * 32767.0));
            body.push_back(static_cast<char>(q & 0xff));
            body.push_back(static_cast<char>(q >> 8 & 0xff));
        }
    }
    std::string file = "RIFF";
    auto put32 = [&](std::uint32_t v) {
        for (int k = 0; k < 4; ++k) file.push_back(static_cast<char>(v >> 8 * k & 0xff));
    };
    auto put16 = [&](std::uint16_t v) {
        file.push_back(static_cast<char>(v & 0xff));
        file.push_back(static_cast<char>(v >> 8 & 0xff));
    };
    put32(36 + static_cast<std::uint32_t>(body.size()));
    file += "WAVEfmt ";
    put32(16);
    put16(1);
    put16(2);
    put32(48000);
    put32(48000 * 4);
    put16(4);
    put16(16);
    file += "data";
    put32(static_cast<std::uint32_t>(body.size()));
    file += body;

    const auto dir = std::filesystem::temp_directory_path() / "iptdet_wav_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "stereo48.wav", std::ios::binary);
        f.write(file.data(), static_cast<std::streamsize>(file.size()));
    }
    const auto loaded = load_audio(dir / "stereo48.wav");
    CHECK(loaded.sample_rate == 44100);
    CHECK(loaded.samples.size() == 88200);

    // Interior must track the analytic mono average at 44.1 kHz.
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 2000; i < 86000; ++i) {
        const double expect = 0.375 * std::sin(2.0 * std::numbers::pi * 440.0 * i / 44100.0);
        err += (loaded.samples[i] - expect) * (loaded.samples[i] - expect);
        ref += expect * expect;
    }
    CHECK(std::sqrt(err / ref) < 0.01);
}

TEST_CASE("44100 Hz input passes through resample unchanged") {
    const auto w = sine(300.0, 0.1, 44100, 0.4);
    const auto same = resample(w, 44100);
    REQUIRE(same.samples.size() == w.samples.size());
    CHECK(same.samples == w.samples);
}

TEST_CASE("cqt frame counts follow centered framing") {
    CHECK(cqt_frame_count(132300) == 259);
    const auto clip = as_clip(sine(440.0, 3.0, 44100));
    const auto spec = transform().compute(clip);
    CHECK(spec.n_frames == 259);
    CHECK(spec.n_bins == 88);
}

TEST_CASE("cqt and rasterize column counts agree for 20 random durations") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> dur(0.7, 4.0);
    for (int i = 0; i < 20; ++i) {
        const double seconds = dur(rng);
        const auto n = static_cast<std::int64_t>(seconds * 44100);
        const auto labels = rasterize_labels({}, frame_count(n, 512), 512, 44100);
        CHECK(cqt_frame_count(n) == labels.labels.n_frames);
    }
}

TEST_CASE("a 440 Hz tone concentrates at bin 48 within 2 percent of unit gain") {
    const auto clip = as_clip(sine(440.0, 1.5, 44100));
    const auto spec = transform().compute(clip);
    // Interior frames only: the longest window is ~0.61 s, so stay at least
    // 0.31 s away from both edges.
    const int lo = static_cast<int>(0.35 * 44100 / 512);
    const int hi = static_cast<int>(1.15 * 44100 / 512);
    for (int t = lo; t <= hi; ++t) {
        int best = 0;
        for (int b = 1; b < 88; ++b) {
            if (spec.at(b, t) > spec.at(best, t)) best = b;
        }
        CHECK(best == 48);
        CHECK(spec.at(48, t) == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("silence maps to all-zero magnitudes") {
    AudioClip clip;
    clip.samples.assign(132300, 0.0);
    const auto spec = transform().compute(clip);
    for (double m : spec.mag) CHECK(std::abs(m) < 1e-6);
}

TEST_CASE("cqt scales linearly with amplitude") {
    auto w = sine(220.0, 1.0, 44100, 0.5);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (auto& s : w.samples) s += noise(rng);
    const auto a = transform().compute(as_clip(w));
    auto w3 = w;
    for (auto& s : w3.samples) s *= 3.0;
    const auto b = transform().compute(as_clip(w3));
    for (std::size_t i = 0; i < a.mag.size(); i += 311) {
        CHECK(b.mag[i] == doctest::Approx(3.0 * a.mag[i]).epsilon(1e-5));
    }
}

TEST_CASE("octave-shifted tones move the argmax up 12 bins") {
    for (double f : {55.0, 110.0, 220.0, 880.0}) {
        const auto lo_spec = transform().compute(as_clip(sine(f, 1.0, 44100)));
        const auto hi_spec = transform().compute(as_clip(sine(2.0 * f, 1.0, 44100)));
        const int t = 43;
        auto argmax = [](const CqtSpectrogram& s, int frame) {
            int best = 0;
            for (int b = 1; b < 88; ++b) {
                if (s.at(b, frame) > s.at(best, frame)) best = b;
            }
            return best;
        };
        CHECK(argmax(hi_spec, t) == argmax(lo_spec, t) + 12);
    }
}

TEST_CASE("cqt matches the time-domain correlation reference") {
    // Mixture of three tones plus noise; probe the tone bins and a quiet bin.
    auto w = sine(220.0, 1.2, 44100, 0.8);
    const auto w2 = sine(1174.66, 1.2, 44100, 0.5); // D6, bin 65
    const auto w3 = sine(55.0, 1.2, 44100, 0.6);    // A1, bin 12
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        w.samples[i] += w2.samples[i] + w3.samples[i] + noise(rng);
    }
    const auto spec = transform().compute(as_clip(w));
    for (int bin : {12, 36, 65}) {
        for (int frame : {40, 55, 62}) {
            const double expect = reference_cqt(w.samples, bin, frame);
            CHECK(spec.at(bin, frame) == doctest::Approx(expect).epsilon(0.005));
        }
    }
    // A bin far from any tone: compare with an absolute floor tied to the
    // overall scale, since pruning error is absolute, not relative.
    const double expect = reference_cqt(w.samples, 80, 50);
    CHECK(spec.at(80, 50) == doctest::Approx(expect).epsilon(0.02).scale(1.0));
}

TEST_CASE("too-short input is rejected with padding advice") {
    AudioClip clip;
    clip.samples.assign(2000, 0.1);
    try {
        (void)transform().compute(clip);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("pad") != std::string::npos);
    }
    AudioClip wrong_rate;
    wrong_rate.samples.assign(132300, 0.0);
    wrong_rate.sample_rate = 22050;
    CHECK_THROWS_AS((void)transform().compute(wrong_rate), ValidationError);
}

TEST_CASE("clip_3s windows a 7.5 s track into three padded clips") {
    Waveform w;
    w.samples.assign(static_cast<std::size_t>(7.5 * 44100), 0.25);
    const auto labels = rasterize_labels({{0.2, 7.2, 60, IptClass::tremolo}},
                                         cqt_frame_count(static_cast<std::int64_t>(w.samples.size())),
                                         512, 44100);
    const auto clips = clip_3s(w, labels.labels, "trk");
    REQUIRE(clips.size() == 3);
    CHECK(clips[0].audio.start_offset == doctest::Approx(0.0));
    CHECK(clips[1].audio.start_offset == doctest::Approx(3.0));
    CHECK(clips[2].audio.start_offset == doctest::Approx(6.0));
    for (const auto& c : clips) CHECK(c.audio.samples.size() == 132300);
    // 7.5 s = 1.5 s of real audio in the last window; the rest is padding.
    const auto& last = clips[2].audio.samples;
    CHECK(last[static_cast<std::size_t>(1.4 * 44100)] == doctest::Approx(0.25));
    CHECK(last[static_cast<std::size_t>(1.6 * 44100)] == doctest::Approx(0.0));
    CHECK(clips[2].n_valid < 259);
}

TEST_CASE("a 3.0 s track is exactly one clip with no padding") {
    Waveform w;
    w.samples.assign(132300, 0.1);
    const FrameLabelMatrix labels(259, 512, 44100);
    const auto clips = clip_3s(w, labels, "trk");
    REQUIRE(clips.size() == 1);
    CHECK(clips[0].n_valid == 259);
    for (auto v : clips[0].valid) CHECK(v == 1);
}

TEST_CASE("concatenated valid label columns reproduce the track matrix") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 8; ++trial) {
        const double seconds = std::uniform_real_distribution<double>(4.0, 14.0)(rng);
        Waveform w;
        w.samples.assign(static_cast<std::size_t>(seconds * 44100), 0.0);
        const int t_track = cqt_frame_count(static_cast<std::int64_t>(w.samples.size()));
        const auto notes = oracles::random_notes(rng, 25, seconds);
        const auto track = rasterize_labels(notes, t_track, 512, 44100).labels;

        const auto clips = clip_3s(w, track, "trk");
        int col = 0;
        for (const auto& clip : clips) {
            for (int j = 0; j < clip.labels.n_frames; ++j) {
                if (!clip.valid[static_cast<std::size_t>(j)]) {
                    for (int c = 0; c < 7; ++c) CHECK(clip.labels.at(c, j) == 0);
                    continue;
                }
                REQUIRE(col < t_track);
                for (int c = 0; c < 7; ++c) {
                    CHECK(clip.labels.at(c, j) == track.at(c, col));
                }
                ++col;
            }
        }
        CHECK(col == t_track);
        // Interior clips lose at most one column to the window boundary; only
        // the final clip carries real padding.
        for (std::size_t k = 0; k + 1 < clips.size(); ++k) {
            CHECK(259 - clips[k].n_valid <= 1);
        }
        CHECK(clips.back().n_valid >= 1);
    }
}

TEST_CASE("clip_3s rejects a label matrix off by more than one frame") {
    Waveform w;
    w.samples.assign(132300, 0.0);
    const FrameLabelMatrix labels(250, 512, 44100);
    CHECK_THROWS_AS(clip_3s(w, labels, "trk"), ValidationError);
}

TEST_CASE("feature cache returns identical spectra on hit") {
    const auto dir = std::filesystem::temp_directory_path() / "iptdet_cache_test";
    std::filesystem::remove_all(dir);
    FeatureCache cache(dir);
    auto clip = as_clip(sine(330.0, 3.0, 44100), "cached");
    const auto first = cache.get(clip, 0);
    const auto second = cache.get(clip, 0);
    CHECK(first.mag == second.mag);
    CHECK(std::filesystem::exists(dir / "cached_0.f64"));
    CHECK(std::filesystem::exists(dir / "manifest.json"));
}

TEST_CASE("synthesized plucks tone has CQT argmax at its own bin") {
    FixtureSpec spec;
    spec.duration = 2.0;
    spec.events.push_back({IptClass::plucks, 0.5, 1.0, 69});
    const auto res = synth_fixture(spec);
    CHECK(res.audio.samples.size() == static_cast<std::size_t>(2.0 * 44100));
    REQUIRE(res.notes.size() == 1);
    CHECK(res.notes[0].onset == doctest::Approx(0.5));
    CHECK(res.notes[0].ipt == IptClass::plucks);

    const auto spec_cqt = compute_cqt(as_clip(res.audio));
    // Probe frames well inside the event.
    for (int t = static_cast<int>(0.7 * 44100 / 512); t <= static_cast<int>(1.2 * 44100 / 512); ++t) {
        int best = 0;
        for (int b = 1; b < 88; ++b) {
            if (spec_cqt.at(b, t) > spec_cqt.at(best, t)) best = b;
        }
        CHECK(best == 48);
    }
}

TEST_CASE("synthesized upward portamento has monotone argmax trace") {
    FixtureSpec spec;
    spec.duration = 2.0;
    spec.events.push_back({IptClass::upward_portamento, 0.4, 1.2, 57});
    const auto res = synth_fixture(spec);
    const auto cqt = compute_cqt(as_clip(res.audio));
    int prev = -1;
    for (int t = static_cast<int>(0.55 * 44100 / 512); t <= static_cast<int>(1.45 * 44100 / 512);
         ++t) {
        int best = 0;
        for (int b = 1; b < 88; ++b) {
            if (cqt.at(b, t) > cqt.at(best, t)) best = b;
        }
        if (prev >= 0) CHECK(best >= prev);
        prev = best;
    }
    CHECK(prev >= 57 - 21 + 3); // reached at least three semitones up
}

TEST_CASE("empty fixture spec synthesizes silence") {
    FixtureSpec spec;
    spec.duration = 1.0;
    const auto res = synth_fixture(spec);
    CHECK(res.notes.empty());
    for (double v : res.audio.samples) CHECK(v == 0.0);
}

TEST_CASE("fixture specs reject bad events and parse back exactly") {
    FixtureSpec spec;
    spec.duration = 5.0;
    spec.events.push_back({IptClass::vibrato, 1.0, -0.5, 60});
    CHECK_THROWS_AS(synth_fixture(spec), ValidationError);
    spec.events[0] = {IptClass::vibrato, 4.5, 1.0, 60};
    CHECK_THROWS_AS(synth_fixture(spec), ValidationError);

    const auto rand_spec = random_fixture_spec(3, 12.0);
    CHECK(rand_spec.events.size() >= 7);
    const auto reparsed = parse_fixture_spec_text(format_fixture_spec(rand_spec), "mem");
    REQUIRE(reparsed.events.size() == rand_spec.events.size());
    CHECK(reparsed.duration == rand_spec.duration);
    for (std::size_t i = 0; i < rand_spec.events.size(); ++i) {
        CHECK(reparsed.events[i].ipt == rand_spec.events[i].ipt);
        CHECK(reparsed.events[i].onset == rand_spec.events[i].onset);
        CHECK(reparsed.events[i].duration == rand_spec.events[i].duration);
        CHECK(reparsed.events[i].midi == rand_spec.events[i].midi);
    }
    CHECK_THROWS_AS(parse_fixture_spec_text("event vibrato 0 1 60\n", "mem"), ParseError);
    CHECK_THROWS_AS(parse_fixture_spec_text("duration_s 3\nevent bend 0 1 60\n", "mem"), ParseError);
}

TEST_CASE("random fixture specs cover all seven classes") {
    const auto spec = random_fixture_spec(11, 24.0);
    std::array<int, 7> seen{};
    for (const auto& ev : spec.events) ++seen[static_cast<std::size_t>(ev.ipt)];
    for (int c = 0; c < 7; ++c) CHECK(seen[static_cast<std::size_t>(c)] >= 1);
}

TEST_CASE("fixture corpora load back through the dataset layer") {
    const auto dir = std::filesystem::temp_directory_path() / "iptdet_fixture_corpus";
    std::filesystem::remove_all(dir);
    const auto ids = write_fixture_corpus(dir, 4, 8.0, 99);
    REQUIRE(ids.size() == 4);
    const auto tracks = load_corpus(dir);
    REQUIRE(tracks.size() == 4);
    for (const auto& t : tracks) {
        CHECK(!t.notes.empty());
        CHECK(std::filesystem::exists(corpus_wav_path(dir, t.meta.audio_id)));
        const auto w = load_audio(corpus_wav_path(dir, t.meta.audio_id));
        CHECK(w.duration() == doctest::Approx(t.meta.audio_length).epsilon(1e-6));
    }
    std::set<std::string> performers;
    for (const auto& t : tracks) performers.insert(t.meta.performer);
    CHECK(performers.size() == 2);
}
