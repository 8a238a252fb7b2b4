#include "iptdet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace iptdet {

namespace {

constexpr std::array<std::string_view, kNumIptClasses> kIptNames = {
    "vibrato", "upward_portamento", "downward_portamento",
    "point_note", "glissando", "tremolo", "plucks"};

constexpr std::array<std::string_view, kNumIptClasses> kIptShortNames = {
    "vibrato", "UP", "DP", "PN", "glissando", "tremolo", "plucks"};

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& ch : out) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return out;
}

const std::unordered_map<std::string, IptClass>& label_alias_table() {
    static const std::unordered_map<std::string, IptClass> table = {
        {"vibrato", IptClass::vibrato},
        {"chanyin", IptClass::vibrato},
        {"颤音", IptClass::vibrato},
        {"upward_portamento", IptClass::upward_portamento},
        {"up", IptClass::upward_portamento},
        {"shanghuayin", IptClass::upward_portamento},
        {"上滑音", IptClass::upward_portamento},
        {"downward_portamento", IptClass::downward_portamento},
        {"dp", IptClass::downward_portamento},
        {"xiahuayin", IptClass::downward_portamento},
        {"下滑音", IptClass::downward_portamento},
        {"point_note", IptClass::point_note},
        {"pn", IptClass::point_note},
        {"dianyin", IptClass::point_note},
        {"点音", IptClass::point_note},
        {"glissando", IptClass::glissando},
        {"guazou", IptClass::glissando},
        {"刮奏", IptClass::glissando},
        {"huazhi", IptClass::glissando},
        {"花指", IptClass::glissando},
        {"tremolo", IptClass::tremolo},
        {"yaozhi", IptClass::tremolo},
        {"摇指", IptClass::tremolo},
        {"plucks", IptClass::plucks},
        {"pluck", IptClass::plucks},
        {"勾", IptClass::plucks},
        {"打", IptClass::plucks},
        {"抹", IptClass::plucks},
        {"托", IptClass::plucks},
        {"撮", IptClass::plucks},
    };
    return table;
}

std::string legal_labels_list() {
    std::string out;
    for (int c = 0; c < kNumIptClasses; ++c) {
        if (c) out += ", ";
        out += kIptNames[static_cast<std::size_t>(c)];
    }
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            if (pos < text.size()) lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        std::size_t tab = line.find(sep, pos);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view field, double* out) {
    std::string buf(trim(field));
    if (buf.empty()) return false;
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size()) return false;
    *out = v;
    return true;
}

bool parse_int(std::string_view field, int* out) {
    std::string buf(trim(field));
    if (buf.empty()) return false;
    char* end = nullptr;
    const long v = std::strtol(buf.c_str(), &end, 10);
    if (end != buf.c_str() + buf.size()) return false;
    *out = static_cast<int>(v);
    return true;
}

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& file, const std::string& content) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    out << content;
    if (!out) throw IoError("write failed for " + file.string());
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// CSV with minimal quoting: fields containing ',' or '"' are double-quoted,
// embedded quotes doubled.
std::vector<std::string> split_csv_row(std::string_view line, const std::string& origin,
                                       std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (in_quotes) {
        throw ParseError(origin + ":" + std::to_string(line_no) + ": unterminated quote");
    }
    fields.push_back(cur);
    return fields;
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    out += '"';
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// IptClass
// ---------------------------------------------------------------------------

std::string_view ipt_name(IptClass c) { return kIptNames[static_cast<std::size_t>(c)]; }

std::string_view ipt_short_name(IptClass c) { return kIptShortNames[static_cast<std::size_t>(c)]; }

std::optional<IptClass> parse_ipt_label(std::string_view label) {
    const auto& table = label_alias_table();
    auto it = table.find(ascii_lower(trim(label)));
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::array<IptClass, kNumIptClasses> all_ipt_classes() {
    std::array<IptClass, kNumIptClasses> out{};
    for (int c = 0; c < kNumIptClasses; ++c) out[static_cast<std::size_t>(c)] = static_cast<IptClass>(c);
    return out;
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

std::vector<NoteAnnotation> parse_annotations_text(std::string_view text,
                                                   const std::string& origin) {
    std::vector<NoteAnnotation> notes;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        std::string_view line = strip_cr(lines[i]);
        if (trim(line).empty() || trim(line).front() == '#') continue;

        const auto fields = split_fields(line, '\t');
        double onset = 0.0;
        if (!parse_double(fields[0], &onset)) {
            if (line_no == 1) continue; // optional header row
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected numeric onset, got \"" + std::string(trim(fields[0])) + "\"");
        }
        if (fields.size() < 4) {
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected 4 tab-separated columns (onset_s, offset_s, midi_pitch, ipt_label), got " +
                             std::to_string(fields.size()));
        }
        double offset = 0.0;
        int pitch = 0;
        if (!parse_double(fields[1], &offset)) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": malformed offset \"" +
                             std::string(trim(fields[1])) + "\"");
        }
        if (!parse_int(fields[2], &pitch)) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": malformed midi pitch \"" +
                             std::string(trim(fields[2])) + "\"");
        }
        const auto ipt = parse_ipt_label(fields[3]);
        if (!ipt) {
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": unknown playing-technique label \"" + std::string(trim(fields[3])) +
                             "\" (expected one of: " + legal_labels_list() + ")");
        }
        if (onset < 0.0) {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": negative onset " +
                                  fmt_double(onset));
        }
        if (!(offset > onset)) {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": offset " +
                                  fmt_double(offset) + " must be greater than onset " + fmt_double(onset));
        }
        if (pitch < 21 || pitch > 108) {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": midi pitch " +
                                  std::to_string(pitch) + " outside 21..108");
        }
        notes.push_back(NoteAnnotation{onset, offset, pitch, *ipt});
    }
    std::stable_sort(notes.begin(), notes.end(), [](const NoteAnnotation& a, const NoteAnnotation& b) {
        if (a.onset != b.onset) return a.onset < b.onset;
        return a.offset < b.offset;
    });
    return notes;
}

std::vector<NoteAnnotation> parse_annotations(const std::filesystem::path& file) {
    return parse_annotations_text(read_file(file), file.filename().string());
}

std::string format_annotations(const std::vector<NoteAnnotation>& notes) {
    std::string out = "onset_s\toffset_s\tmidi_pitch\tipt_label\n";
    for (const auto& n : notes) {
        out += fmt_double(n.onset);
        out += '\t';
        out += fmt_double(n.offset);
        out += '\t';
        out += std::to_string(n.pitch);
        out += '\t';
        out += ipt_name(n.ipt);
        out += '\n';
    }
    return out;
}

void write_annotations(const std::filesystem::path& file,
                       const std::vector<NoteAnnotation>& notes) {
    write_file(file, format_annotations(notes));
}

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

std::vector<TrackMetadata> parse_metadata_text(std::string_view text, const std::string& origin) {
    std::vector<TrackMetadata> rows;
    std::vector<std::string> seen_ids;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        std::string_view line = strip_cr(lines[i]);
        if (trim(line).empty() || trim(line).front() == '#') continue;
        auto fields = split_csv_row(line, origin, line_no);
        if (line_no == 1 && !fields.empty() && ascii_lower(trim(fields[0])) == "audio_id") continue;
        if (fields.size() != 7) {
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected 7 comma-separated fields, got " + std::to_string(fields.size()));
        }
        TrackMetadata meta;
        meta.audio_id = std::string(trim(fields[0]));
        meta.audio_name = std::string(trim(fields[1]));
        meta.mode = std::string(trim(fields[2]));
        meta.time_signature = std::string(trim(fields[3]));
        meta.performer = std::string(trim(fields[4]));
        meta.genre = std::string(trim(fields[5]));
        if (!parse_double(fields[6], &meta.audio_length)) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": malformed audio_length \"" +
                             fields[6] + "\"");
        }
        if (meta.audio_id.empty()) {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": empty audio_id");
        }
        if (std::find(seen_ids.begin(), seen_ids.end(), meta.audio_id) != seen_ids.end()) {
            throw ValidationError(origin + ":" + std::to_string(line_no) + ": duplicate audio_id \"" +
                                  meta.audio_id + "\"");
        }
        seen_ids.push_back(meta.audio_id);
        rows.push_back(std::move(meta));
    }
    return rows;
}

std::vector<TrackMetadata> parse_metadata(const std::filesystem::path& file) {
    return parse_metadata_text(read_file(file), file.filename().string());
}

std::string format_metadata(const std::vector<TrackMetadata>& rows) {
    std::string out = "audio_id,audio_name,mode,time_signature,performer,genre,audio_length\n";
    for (const auto& m : rows) {
        out += csv_quote(m.audio_id) + "," + csv_quote(m.audio_name) + "," + csv_quote(m.mode) + "," +
               csv_quote(m.time_signature) + "," + csv_quote(m.performer) + "," + csv_quote(m.genre) +
               "," + fmt_double(m.audio_length) + "\n";
    }
    return out;
}

void write_metadata(const std::filesystem::path& file, const std::vector<TrackMetadata>& rows) {
    write_file(file, format_metadata(rows));
}

// ---------------------------------------------------------------------------
// Corpus layout
// ---------------------------------------------------------------------------

std::filesystem::path corpus_annotation_path(const std::filesystem::path& corpus_dir,
                                             const std::string& audio_id) {
    return corpus_dir / "annotations" / (audio_id + ".tsv");
}

std::filesystem::path corpus_wav_path(const std::filesystem::path& corpus_dir,
                                      const std::string& audio_id) {
    return corpus_dir / "wav" / (audio_id + ".wav");
}

std::vector<TrackInfo> load_corpus(const std::filesystem::path& corpus_dir) {
    const auto meta_file = corpus_dir / "metadata.csv";
    if (!std::filesystem::exists(meta_file)) {
        throw IoError("no metadata.csv under " + corpus_dir.string());
    }
    std::vector<TrackInfo> tracks;
    for (auto& meta : parse_metadata(meta_file)) {
        TrackInfo info;
        info.notes = parse_annotations(corpus_annotation_path(corpus_dir, meta.audio_id));
        info.meta = std::move(meta);
        tracks.push_back(std::move(info));
    }
    return tracks;
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

int frame_count(std::int64_t n_samples, int hop) {
    return static_cast<int>(1 + n_samples / hop);
}

RasterizeResult rasterize_labels(const std::vector<NoteAnnotation>& notes, int n_frames,
                                 int hop, int sample_rate) {
    if (n_frames <= 0) throw ValidationError("rasterize_labels: n_frames must be positive");
    if (hop <= 0) throw ValidationError("rasterize_labels: hop must be positive");
    if (sample_rate <= 0) throw ValidationError("rasterize_labels: sample_rate must be positive");

    RasterizeResult out;
    out.labels = FrameLabelMatrix(n_frames, hop, sample_rate);
    for (const auto& n : notes) {
        if (!(n.offset > n.onset)) {
            throw ValidationError("rasterize_labels: offset must be greater than onset");
        }
        // First frame whose span [t*hop, (t+1)*hop) reaches the onset; last
        // frame whose start lies before the offset.
        int first = static_cast<int>(std::floor(n.onset * sample_rate / hop));
        int last = static_cast<int>(std::ceil(n.offset * sample_rate / hop)) - 1;
        if (last >= n_frames) {
            last = n_frames - 1;
            ++out.clipped_notes;
        }
        if (first >= n_frames) continue; // fully past the grid; already counted
        if (first < 0) first = 0;
        const int c = static_cast<int>(n.ipt);
        for (int t = first; t <= last; ++t) out.labels.set(c, t, 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

CorpusStats corpus_stats(const std::vector<NoteAnnotation>& notes) {
    CorpusStats stats{};
    for (const auto& n : notes) {
        auto& s = stats[static_cast<std::size_t>(n.ipt)];
        const double d = n.duration();
        if (s.count == 0) {
            s.max = d;
            s.min = d;
        } else {
            s.max = std::max(s.max, d);
            s.min = std::min(s.min, d);
        }
        ++s.count;
        s.sum += d;
    }
    for (auto& s : stats) {
        if (s.count > 0) s.mean = s.sum / static_cast<double>(s.count);
    }
    return stats;
}

std::string format_stats_table(const CorpusStats& stats) {
    std::ostringstream out;
    char buf[64];
    out << "ipt                  num        sum       mean        max        min\n";
    for (int c = 0; c < kNumIptClasses; ++c) {
        const auto& s = stats[static_cast<std::size_t>(c)];
        std::snprintf(buf, sizeof(buf), "%-20s %5zu", std::string(ipt_name(static_cast<IptClass>(c))).c_str(),
                      s.count);
        out << buf;
        if (s.count == 0) {
            std::snprintf(buf, sizeof(buf), " %10.2f %10s %10s %10s", 0.0, "-", "-", "-");
        } else {
            std::snprintf(buf, sizeof(buf), " %10.2f %10.2f %10.2f %10.2f", s.sum, s.mean, s.max, s.min);
        }
        out << buf << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

namespace {

struct TrackProfile {
    std::array<double, kNumIptClasses> class_dur{};
    double total_dur = 0.0;
    int performer = 0;
};

struct SplitProblem {
    std::vector<TrackProfile> profiles;
    std::array<double, kNumIptClasses> corpus_class_share{};
    std::vector<double> corpus_perf_share;
    int n_performers = 0;
};

SplitProblem build_problem(const std::vector<TrackInfo>& tracks) {
    SplitProblem p;
    std::map<std::string, int> perf_ids;
    for (const auto& t : tracks) {
        TrackProfile prof;
        for (const auto& n : t.notes) {
            prof.class_dur[static_cast<std::size_t>(n.ipt)] += n.duration();
            prof.total_dur += n.duration();
        }
        auto [it, _] = perf_ids.try_emplace(t.meta.performer, static_cast<int>(perf_ids.size()));
        prof.performer = it->second;
        p.profiles.push_back(prof);
    }
    p.n_performers = static_cast<int>(perf_ids.size());
    p.corpus_perf_share.assign(static_cast<std::size_t>(p.n_performers), 0.0);

    double corpus_total = 0.0;
    for (const auto& prof : p.profiles) {
        corpus_total += prof.total_dur;
        for (int c = 0; c < kNumIptClasses; ++c) p.corpus_class_share[static_cast<std::size_t>(c)] += prof.class_dur[static_cast<std::size_t>(c)];
        p.corpus_perf_share[static_cast<std::size_t>(prof.performer)] += prof.total_dur;
    }
    if (corpus_total > 0.0) {
        for (auto& v : p.corpus_class_share) v /= corpus_total;
        for (auto& v : p.corpus_perf_share) v /= corpus_total;
    }
    return p;
}

double objective_of_assignment(const SplitProblem& p, const std::vector<int>& set_of) {
    std::array<std::array<double, kNumIptClasses>, 3> class_dur{};
    std::array<std::vector<double>, 3> perf_dur;
    for (auto& v : perf_dur) v.assign(static_cast<std::size_t>(p.n_performers), 0.0);
    std::array<double, 3> totals{};

    for (std::size_t i = 0; i < p.profiles.size(); ++i) {
        const int s = set_of[i];
        if (s < 0) continue;
        const auto& prof = p.profiles[i];
        totals[static_cast<std::size_t>(s)] += prof.total_dur;
        perf_dur[static_cast<std::size_t>(s)][static_cast<std::size_t>(prof.performer)] += prof.total_dur;
        for (int c = 0; c < kNumIptClasses; ++c) {
            class_dur[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)] += prof.class_dur[static_cast<std::size_t>(c)];
        }
    }

    double worst = 0.0;
    for (int s = 0; s < 3; ++s) {
        const double total = totals[static_cast<std::size_t>(s)];
        for (int c = 0; c < kNumIptClasses; ++c) {
            const double ref = p.corpus_class_share[static_cast<std::size_t>(c)];
            if (ref <= 0.0) continue;
            const double share = total > 0.0 ? class_dur[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)] / total : 0.0;
            worst = std::max(worst, std::abs(share - ref) / ref);
        }
        for (int q = 0; q < p.n_performers; ++q) {
            const double ref = p.corpus_perf_share[static_cast<std::size_t>(q)];
            if (ref <= 0.0) continue;
            const double share = total > 0.0 ? perf_dur[static_cast<std::size_t>(s)][static_cast<std::size_t>(q)] / total : 0.0;
            worst = std::max(worst, std::abs(share - ref) / ref);
        }
    }
    return worst;
}

} // namespace

double split_objective(const std::vector<TrackInfo>& tracks, const CorpusSplit& split) {
    const SplitProblem p = build_problem(tracks);
    std::vector<int> set_of(tracks.size(), -1);
    auto mark = [&](const std::vector<std::string>& ids, int s) {
        for (const auto& id : ids) {
            for (std::size_t i = 0; i < tracks.size(); ++i) {
                if (tracks[i].meta.audio_id == id) set_of[i] = s;
            }
        }
    };
    mark(split.train, 0);
    mark(split.valid, 1);
    mark(split.test, 2);
    return objective_of_assignment(p, set_of);
}

CorpusSplit split_corpus(const std::vector<TrackInfo>& tracks, const std::array<int, 3>& sizes,
                         std::uint64_t seed) {
    const int n = static_cast<int>(tracks.size());
    for (int s : sizes) {
        if (s < 0) throw ValidationError("split_corpus: negative set size");
        if (s > n) throw ValidationError("split_corpus: set size exceeds corpus size");
    }
    if (sizes[0] + sizes[1] + sizes[2] != n) {
        throw ValidationError("split_corpus: sizes sum to " +
                              std::to_string(sizes[0] + sizes[1] + sizes[2]) + " but corpus has " +
                              std::to_string(n) + " tracks");
    }

    const SplitProblem p = build_problem(tracks);

    // Seeded shuffle for tie-breaking, then longest-first greedy seeding.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return p.profiles[static_cast<std::size_t>(a)].total_dur > p.profiles[static_cast<std::size_t>(b)].total_dur;
    });

    std::vector<int> set_of(static_cast<std::size_t>(n), -1);
    std::array<int, 3> remaining = sizes;
    for (int idx : order) {
        int best_set = -1;
        double best_obj = std::numeric_limits<double>::infinity();
        for (int s = 0; s < 3; ++s) {
            if (remaining[static_cast<std::size_t>(s)] == 0) continue;
            set_of[static_cast<std::size_t>(idx)] = s;
            const double obj = objective_of_assignment(p, set_of);
            if (obj < best_obj) {
                best_obj = obj;
                best_set = s;
            }
        }
        set_of[static_cast<std::size_t>(idx)] = best_set;
        --remaining[static_cast<std::size_t>(best_set)];
    }

    // Pairwise swap refinement to a local optimum.
    double cur = objective_of_assignment(p, set_of);
    for (int pass = 0; pass < 50; ++pass) {
        bool improved = false;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (set_of[static_cast<std::size_t>(i)] == set_of[static_cast<std::size_t>(j)]) continue;
                std::swap(set_of[static_cast<std::size_t>(i)], set_of[static_cast<std::size_t>(j)]);
                const double obj = objective_of_assignment(p, set_of);
                if (obj + 1e-12 < cur) {
                    cur = obj;
                    improved = true;
                } else {
                    std::swap(set_of[static_cast<std::size_t>(i)], set_of[static_cast<std::size_t>(j)]);
                }
            }
        }
        if (!improved) break;
    }

    CorpusSplit split;
    for (int i = 0; i < n; ++i) {
        const auto& id = tracks[static_cast<std::size_t>(i)].meta.audio_id;
        switch (set_of[static_cast<std::size_t>(i)]) {
            case 0: split.train.push_back(id); break;
            case 1: split.valid.push_back(id); break;
            default: split.test.push_back(id); break;
        }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.valid.begin(), split.valid.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

} // namespace iptdet
