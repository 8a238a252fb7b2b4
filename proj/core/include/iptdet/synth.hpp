#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iptdet/audio.hpp"
#include "iptdet/dataset.hpp"

namespace iptdet {

// One scheduled fixture event. midi picks the base pitch; the rendered
// signal shape depends on the class (see synth_fixture).
struct FixtureEvent {
    IptClass ipt = IptClass::plucks;
    double onset = 0.0;
    double duration = 0.0;
    int midi = 60;
};

// Text format, one directive per line:
//   duration_s <seconds>
//   seed <integer>
//   event <label> <onset_s> <duration_s> <midi>
// '#' starts a comment. Events may overlap.
struct FixtureSpec {
    double duration = 0.0;
    std::uint64_t seed = 0;
    std::vector<FixtureEvent> events;
};

FixtureSpec parse_fixture_spec_text(const std::string& text, const std::string& origin);
FixtureSpec parse_fixture_spec(const std::filesystem::path& path);
std::string format_fixture_spec(const FixtureSpec& spec);

struct SynthResult {
    Waveform audio;
    std::vector<NoteAnnotation> notes;
};

// Renders each event as a class-characteristic signal at 44.1 kHz:
//   plucks    steady tone, plucked decay
//   vibrato   tone with ~5.5 Hz sinusoidal pitch wobble
//   UP / DP   monotone pitch slide over the event
//   PN        brief 2-semitone bump right after onset, then back to base
//   glissando run of short discrete tones stepping away from the base pitch
//   tremolo   steady pitch re-struck at ~11 Hz
// The annotation list restates the schedule exactly. Events must lie inside
// [0, duration]; negative durations are an error.
SynthResult synth_fixture(const FixtureSpec& spec);

// Random but class-covering schedule used to build desk-scale corpora.
// Each class keeps to its own pitch register, which together with the
// signal shapes makes the fixture task separable.
FixtureSpec random_fixture_spec(std::uint64_t seed, double duration);

// Writes a complete fixture corpus (metadata.csv, annotations/*.tsv,
// wav/*.wav, specs/*.txt) of n_tracks tracks, each ~duration seconds,
// alternating between two synthetic performers. Returns the track ids.
std::vector<std::string> write_fixture_corpus(const std::filesystem::path& dir, int n_tracks,
                                              double duration, std::uint64_t seed);

} // namespace iptdet
