#include "iptdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "iptdet/errors.hpp"

namespace iptdet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double midi_to_freq(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

// Additive tone with a pitch track given in fractional MIDI. Harmonic
// amplitudes fall off quickly so the fundamental stays the CQT argmax.
struct ToneRenderer {
    double sr;
    double phase = 0.0;

    template <typename PitchFn, typename EnvFn>
    void render(std::vector<double>& buf, std::size_t n0, double dur, double amp,
                PitchFn pitch_midi, EnvFn env) {
        static constexpr double kHarmonics[3] = {1.0, 0.42, 0.18};
        const auto n_samples = static_cast<std::size_t>(std::llround(dur * sr));
        phase = 0.0;
        for (std::size_t i = 0; i < n_samples && n0 + i < buf.size(); ++i) {
            const double tau = static_cast<double>(i) / sr;
            const double f = midi_to_freq(pitch_midi(tau));
            phase += kTwoPi * f / sr;
            double v = 0.0;
            for (int h = 0; h < 3; ++h) {
                if ((h + 1) * f * 2.0 >= sr) break;
                v += kHarmonics[h] * std::sin((h + 1) * phase);
            }
            buf[n0 + i] += amp * env(tau) * v;
        }
    }
};

double attack(double tau, double rise) { return std::min(1.0, tau / rise); }

void render_event(std::vector<double>& buf, const FixtureEvent& ev, double sr) {
    const auto n0 = static_cast<std::size_t>(std::llround(ev.onset * sr));
    const double dur = ev.duration;
    const double base = ev.midi;
    const double amp = 0.3;
    ToneRenderer tone{sr};

    switch (ev.ipt) {
        case IptClass::plucks:
            tone.render(buf, n0, dur, amp, [&](double) { return base; },
                        [&](double tau) { return attack(tau, 0.005) * std::exp(-3.0 * tau / dur); });
            break;
        case IptClass::vibrato:
            tone.render(buf, n0, dur, amp,
                        [&](double tau) { return base + 0.6 * std::sin(kTwoPi * 5.5 * tau); },
                        [&](double tau) { return attack(tau, 0.01) * std::exp(-1.2 * tau / dur); });
            break;
        case IptClass::upward_portamento:
            tone.render(buf, n0, dur, amp, [&](double tau) { return base + 4.0 * tau / dur; },
                        [&](double tau) { return attack(tau, 0.01) * std::exp(-1.2 * tau / dur); });
            break;
        case IptClass::downward_portamento:
            tone.render(buf, n0, dur, amp, [&](double tau) { return base - 4.0 * tau / dur; },
                        [&](double tau) { return attack(tau, 0.01) * std::exp(-1.2 * tau / dur); });
            break;
        case IptClass::point_note:
            tone.render(buf, n0, dur, amp,
                        [&](double tau) { return base + 2.0 * std::max(0.0, 1.0 - tau / 0.08); },
                        [&](double tau) { return attack(tau, 0.005) * std::exp(-2.5 * tau / dur); });
            break;
        case IptClass::glissando: {
            // Discrete run over a pentatonic-like step pattern, upward from
            // low bases and downward from high ones.
            static constexpr int kSteps[5] = {2, 3, 2, 2, 3};
            const double step_dur = 0.07;
            const int dir = ev.midi <= 69 ? 1 : -1;
            double pitch = base;
            int k = 0;
            for (double t0 = 0.0; t0 + 0.02 < dur; t0 += step_dur, ++k) {
                const double sd = std::min(step_dur * 1.6, dur - t0);
                const double p = pitch;
                tone.render(buf, n0 + static_cast<std::size_t>(std::llround(t0 * sr)), sd, amp,
                            [p](double) { return p; },
                            [&](double tau) { return attack(tau, 0.003) * std::exp(-5.0 * tau / sd); });
                pitch += dir * kSteps[k % 5];
            }
            break;
        }
        case IptClass::tremolo: {
            const double period = 1.0 / 11.0;
            tone.render(buf, n0, dur, amp, [&](double) { return base; },
                        [&](double tau) {
                            const double local = std::fmod(tau, period);
                            return attack(local, 0.004) * std::exp(-6.0 * local / period);
                        });
            break;
        }
    }
}

} // namespace

FixtureSpec parse_fixture_spec_text(const std::string& text, const std::string& origin) {
    FixtureSpec spec;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool saw_duration = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        if (key == "duration_s") {
            if (!(ls >> spec.duration)) throw ParseError(where + ": duration_s needs a number");
            saw_duration = true;
        } else if (key == "seed") {
            if (!(ls >> spec.seed)) throw ParseError(where + ": seed needs an integer");
        } else if (key == "event") {
            std::string label;
            FixtureEvent ev;
            if (!(ls >> label >> ev.onset >> ev.duration >> ev.midi)) {
                throw ParseError(where + ": event needs <label> <onset_s> <duration_s> <midi>");
            }
            const auto ipt = parse_ipt_label(label);
            if (!ipt) throw ParseError(where + ": unknown class '" + label + "'");
            ev.ipt = *ipt;
            spec.events.push_back(ev);
        } else {
            throw ParseError(where + ": unknown directive '" + key + "'");
        }
    }
    if (!saw_duration && !spec.events.empty()) {
        throw ParseError(origin + ": duration_s required when events are present");
    }
    return spec;
}

FixtureSpec parse_fixture_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_fixture_spec_text(ss.str(), path.filename().string());
}

std::string format_fixture_spec(const FixtureSpec& spec) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "duration_s %.17g\nseed %llu\n", spec.duration,
                  static_cast<unsigned long long>(spec.seed));
    out += buf;
    for (const auto& ev : spec.events) {
        std::snprintf(buf, sizeof(buf), "event %s %.17g %.17g %d\n",
                      std::string(ipt_name(ev.ipt)).c_str(), ev.onset, ev.duration, ev.midi);
        out += buf;
    }
    return out;
}

SynthResult synth_fixture(const FixtureSpec& spec) {
    if (spec.duration < 0) throw ValidationError("fixture duration must be non-negative");
    for (std::size_t i = 0; i < spec.events.size(); ++i) {
        const auto& ev = spec.events[i];
        if (ev.duration <= 0) {
            throw ValidationError("event " + std::to_string(i) + ": non-positive duration");
        }
        if (ev.onset < 0 || ev.onset + ev.duration > spec.duration + 1e-9) {
            throw ValidationError("event " + std::to_string(i) + ": outside [0, duration_s]");
        }
        if (ev.midi < 21 || ev.midi > 108) {
            throw ValidationError("event " + std::to_string(i) + ": midi outside 21..108");
        }
    }

    SynthResult res;
    res.audio.sample_rate = kTargetSampleRate;
    res.audio.samples.assign(
        static_cast<std::size_t>(std::llround(spec.duration * kTargetSampleRate)), 0.0);
    for (const auto& ev : spec.events) {
        render_event(res.audio.samples, ev, kTargetSampleRate);
        res.notes.push_back({ev.onset, ev.onset + ev.duration, ev.midi, ev.ipt});
    }
    double peak = 0.0;
    for (double v : res.audio.samples) peak = std::max(peak, std::abs(v));
    if (peak > 0.99) {
        const double scale = 0.99 / peak;
        for (double& v : res.audio.samples) v *= scale;
    }
    std::stable_sort(res.notes.begin(), res.notes.end(),
                     [](const NoteAnnotation& a, const NoteAnnotation& b) { return a.onset < b.onset; });
    return res;
}

FixtureSpec random_fixture_spec(std::uint64_t seed, double duration) {
    if (duration < 4.0) throw ValidationError("fixture tracks need at least 4 seconds");
    std::mt19937_64 rng(seed);
    FixtureSpec spec;
    spec.duration = duration;
    spec.seed = seed;

    struct ClassProfile {
        int midi_lo, midi_hi;
        double dur_lo, dur_hi;
    };
    // One register per class; with the per-class signal shapes this keeps the
    // seven fixture classes separable by construction.
    static constexpr ClassProfile kProfiles[kNumIptClasses] = {
        {64, 71, 0.8, 1.6},  // vibrato
        {55, 60, 0.6, 1.2},  // upward_portamento
        {60, 65, 0.6, 1.2},  // downward_portamento
        {72, 76, 0.25, 0.4}, // point_note
        {58, 64, 0.8, 1.4},  // glissando
        {45, 52, 1.2, 2.0},  // tremolo
        {36, 43, 0.4, 1.0},  // plucks
    };

    std::vector<int> bag;
    auto refill = [&] {
        bag = {0, 1, 2, 3, 4, 5, 6};
        for (std::size_t i = bag.size(); i > 1; --i) {
            std::swap(bag[i - 1], bag[rng() % i]);
        }
    };
    refill();

    double t = 0.25 + std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    while (true) {
        if (bag.empty()) refill();
        const int cls = bag.back();
        const auto& prof = kProfiles[cls];
        double dur = std::uniform_real_distribution<double>(prof.dur_lo, prof.dur_hi)(rng);
        if (t + dur + 0.3 > duration) break;
        bag.pop_back();
        FixtureEvent ev;
        ev.ipt = static_cast<IptClass>(cls);
        ev.onset = t;
        ev.duration = dur;
        ev.midi = std::uniform_int_distribution<int>(prof.midi_lo, prof.midi_hi)(rng);
        spec.events.push_back(ev);
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.12) {
            t += dur * 0.5; // occasional overlap keeps the task multi-label
        } else {
            t += dur + std::uniform_real_distribution<double>(0.15, 0.45)(rng);
        }
    }
    return spec;
}

std::vector<std::string> write_fixture_corpus(const std::filesystem::path& dir, int n_tracks,
                                              double duration, std::uint64_t seed) {
    if (n_tracks <= 0) throw ValidationError("n_tracks must be positive");
    namespace fs = std::filesystem;
    fs::create_directories(dir / "annotations");
    fs::create_directories(dir / "wav");
    fs::create_directories(dir / "specs");

    std::vector<TrackMetadata> meta;
    std::vector<std::string> ids;
    for (int i = 0; i < n_tracks; ++i) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "fx%03d", i);
        const std::string id = idbuf;
        const auto spec = random_fixture_spec(seed * 1000003ull + static_cast<std::uint64_t>(i),
                                              duration);
        const auto synth = synth_fixture(spec);

        write_wav(corpus_wav_path(dir, id), synth.audio);
        write_annotations(corpus_annotation_path(dir, id), synth.notes);
        std::ofstream sf(dir / "specs" / (id + ".txt"));
        sf << format_fixture_spec(spec);

        TrackMetadata m;
        m.audio_id = id;
        m.audio_name = "fixture " + std::to_string(i);
        m.mode = i % 3 ? "D" : "G";
        m.time_signature = "4/4";
        m.performer = i % 2 ? "li_wei" : "chen_min";
        m.genre = "fixture";
        m.audio_length = synth.audio.duration();
        meta.push_back(m);
        ids.push_back(id);
    }
    write_metadata(dir / "metadata.csv", meta);
    return ids;
}

} // namespace iptdet
