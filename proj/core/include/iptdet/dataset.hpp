#pragma once

// Note annotations, frame-level label rasterization, corpus statistics and
// train/valid/test splitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iptdet/errors.hpp"

namespace iptdet {

// ---------------------------------------------------------------------------
// Playing-technique classes
// ---------------------------------------------------------------------------

/// The seven playing-technique classes, in the fixed index order used for
/// label rows, prediction rows, confusion matrices and reports.
enum class IptClass : int {
    vibrato = 0,
    upward_portamento = 1,
    downward_portamento = 2,
    point_note = 3,
    glissando = 4,
    tremolo = 5,
    plucks = 6,
};

inline constexpr int kNumIptClasses = 7;

/// Canonical lower-case snake-case name.
std::string_view ipt_name(IptClass c);

/// Short display name used in tables and figures (UP, DP, PN abbreviations).
std::string_view ipt_short_name(IptClass c);

/// Parses a label string. Accepts canonical names, UP/DP/PN abbreviations,
/// pinyin and Chinese aliases. Case-insensitive for ASCII.
std::optional<IptClass> parse_ipt_label(std::string_view label);

/// All seven classes in index order.
std::array<IptClass, kNumIptClasses> all_ipt_classes();

// ---------------------------------------------------------------------------
// Core domain types
// ---------------------------------------------------------------------------

/// One annotated note: [onset, offset) in seconds, MIDI pitch, technique.
struct NoteAnnotation {
    double onset = 0.0;
    double offset = 0.0;
    int pitch = 0; // MIDI note number, 21..108
    IptClass ipt = IptClass::plucks;

    double duration() const { return offset - onset; }
    friend bool operator==(const NoteAnnotation&, const NoteAnnotation&) = default;
};

/// Track-level metadata row.
struct TrackMetadata {
    std::string audio_id;
    std::string audio_name;
    std::string mode;
    std::string time_signature;
    std::string performer;
    std::string genre;
    double audio_length = 0.0; // seconds

    friend bool operator==(const TrackMetadata&, const TrackMetadata&) = default;
};

/// Multi-hot ground-truth / prediction grid of shape n_classes x n_frames.
/// A column may hold several 1s (overlapping techniques) or none (rests).
struct FrameLabelMatrix {
    int n_classes = kNumIptClasses;
    int n_frames = 0;
    int hop = 512;
    int sample_rate = 44100;
    std::vector<std::uint8_t> values; // row-major, class-major

    FrameLabelMatrix() = default;
    FrameLabelMatrix(int frames, int hop_samples, int sr)
        : n_frames(frames), hop(hop_samples), sample_rate(sr),
          values(static_cast<std::size_t>(kNumIptClasses) * frames, 0) {}

    std::uint8_t at(int c, int t) const {
        return values[static_cast<std::size_t>(c) * n_frames + t];
    }
    void set(int c, int t, std::uint8_t v) {
        values[static_cast<std::size_t>(c) * n_frames + t] = v;
    }
    friend bool operator==(const FrameLabelMatrix&, const FrameLabelMatrix&) = default;
};

/// Disjoint train/valid/test partition of a corpus, by audio_id.
struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> valid;
    std::vector<std::string> test;
};

/// One track: metadata plus its note annotations.
struct TrackInfo {
    TrackMetadata meta;
    std::vector<NoteAnnotation> notes;
};

// ---------------------------------------------------------------------------
// Annotation parsing and serialization
// ---------------------------------------------------------------------------

// Annotation files are UTF-8 tab-separated text, one note per row, columns
// onset_s, offset_s, midi_pitch, ipt_label. A header row is optional and
// detected by a non-numeric first field; lines starting with '#' are skipped.

/// Parses annotation text. `origin` names the source in error messages.
/// Returns notes sorted by onset.
std::vector<NoteAnnotation> parse_annotations_text(std::string_view text,
                                                   const std::string& origin);

/// Parses an annotation file.
std::vector<NoteAnnotation> parse_annotations(const std::filesystem::path& file);

/// Serializes notes as annotation TSV (with header row). Values round-trip
/// exactly through parse_annotations_text.
std::string format_annotations(const std::vector<NoteAnnotation>& notes);

void write_annotations(const std::filesystem::path& file,
                       const std::vector<NoteAnnotation>& notes);

// ---------------------------------------------------------------------------
// Metadata parsing
// ---------------------------------------------------------------------------

// Metadata is one CSV per corpus with header
// audio_id,audio_name,mode,time_signature,performer,genre,audio_length.

std::vector<TrackMetadata> parse_metadata_text(std::string_view text,
                                               const std::string& origin);
std::vector<TrackMetadata> parse_metadata(const std::filesystem::path& file);
std::string format_metadata(const std::vector<TrackMetadata>& rows);
void write_metadata(const std::filesystem::path& file,
                    const std::vector<TrackMetadata>& rows);

// ---------------------------------------------------------------------------
// Corpus directory layout
// ---------------------------------------------------------------------------

// A corpus directory holds:
//   metadata.csv
//   annotations/<audio_id>.tsv
//   wav/<audio_id>.wav          (only needed for feature extraction)

/// Loads metadata.csv plus every track's annotations.
std::vector<TrackInfo> load_corpus(const std::filesystem::path& corpus_dir);

/// Path helpers for the corpus layout.
std::filesystem::path corpus_annotation_path(const std::filesystem::path& corpus_dir,
                                             const std::string& audio_id);
std::filesystem::path corpus_wav_path(const std::filesystem::path& corpus_dir,
                                      const std::string& audio_id);

// ---------------------------------------------------------------------------
// Label rasterization
// ---------------------------------------------------------------------------

struct RasterizeResult {
    FrameLabelMatrix labels;
    int clipped_notes = 0; // notes extending past the last frame, clipped
};

/// Rasterizes notes to an n_classes x n_frames multi-hot grid. Frame t covers
/// [t*hop, (t+1)*hop) samples; a note [onset, offset) marks every frame whose
/// span it overlaps, so the first marked frame is floor(onset*sr/hop) and the
/// last is the largest t with t*hop < offset*sr. Notes reaching past the grid
/// are clipped and counted, not rejected.
RasterizeResult rasterize_labels(const std::vector<NoteAnnotation>& notes,
                                 int n_frames, int hop, int sample_rate);

/// Frame count of a waveform of `n_samples` under centered framing,
/// 1 + floor(n_samples / hop). Shared by features and labels.
int frame_count(std::int64_t n_samples, int hop);

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct ClassStats {
    std::size_t count = 0;
    double sum = 0.0;
    double mean = 0.0; // meaningful only when count > 0
    double max = 0.0;
    double min = 0.0;
};

using CorpusStats = std::array<ClassStats, kNumIptClasses>;

/// Per-class note count and duration sum/mean/max/min, durations in seconds.
CorpusStats corpus_stats(const std::vector<NoteAnnotation>& notes);

/// Renders the statistics table (num, sum, mean, max, min; 2 decimals,
/// absent values shown as '-').
std::string format_stats_table(const CorpusStats& stats);

// ---------------------------------------------------------------------------
// Corpus splitting
// ---------------------------------------------------------------------------

/// Deterministically partitions tracks into train/valid/test of the given
/// sizes. A greedy seeding pass followed by pairwise-swap refinement keeps
/// each set's per-class duration share and per-performer duration share close
/// to the corpus-wide shares (minimizing the maximum relative deviation).
CorpusSplit split_corpus(const std::vector<TrackInfo>& tracks,
                         const std::array<int, 3>& sizes,
                         std::uint64_t seed);

/// The split objective (exposed for tests): maximum relative deviation of any
/// set's class/performer duration share from the corpus share.
double split_objective(const std::vector<TrackInfo>& tracks,
                       const CorpusSplit& split);

} // namespace iptdet
