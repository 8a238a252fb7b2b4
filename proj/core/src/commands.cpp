#include "iptdet/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iptdet/dataset.hpp"
#include "iptdet/errors.hpp"
#include "iptdet/evaluation.hpp"
#include "iptdet/synth.hpp"
#include "iptdet/training.hpp"
#include "iptdet/viz.hpp"

namespace iptdet {

namespace {

std::ostream& out_of(const CommandIo& io) { return io.out != nullptr ? *io.out : std::cout; }
std::ostream& err_of(const CommandIo& io) { return io.err != nullptr ? *io.err : std::cerr; }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

/// The directory must not exist yet or be empty; created if missing.
void claim_fresh_dir(const std::filesystem::path& dir, const std::string& what) {
    if (std::filesystem::exists(dir)) {
        if (!std::filesystem::is_directory(dir))
            throw ConfigError(what + ": " + dir.string() + " exists and is not a directory");
        if (!std::filesystem::is_empty(dir))
            throw ConfigError(what + ": " + dir.string() +
                              " is not empty; clean it or pick a fresh directory");
    } else {
        std::filesystem::create_directories(dir);
    }
}

std::vector<TrackInfo> select_tracks(const std::vector<TrackInfo>& all,
                                     const std::vector<std::string>& ids) {
    std::set<std::string> want(ids.begin(), ids.end());
    std::vector<TrackInfo> out;
    for (const auto& t : all)
        if (want.contains(t.meta.audio_id)) out.push_back(t);
    return out;
}

std::vector<TrainSample> featurize_split(const std::vector<TrackInfo>& tracks,
                                         const std::filesystem::path& corpus_dir,
                                         FeatureCache* cache) {
    std::vector<TrainSample> samples;
    for (const auto& t : tracks) {
        const Waveform w = load_audio(corpus_wav_path(corpus_dir, t.meta.audio_id));
        const int frames = frame_count(static_cast<std::int64_t>(w.samples.size()), kHop);
        RasterizeResult ras = rasterize_labels(t.notes, frames, kHop, kTargetSampleRate);
        auto clips = clip_3s(w, ras.labels, t.meta.audio_id);
        auto feats = featurize_clips(clips, cache);
        std::move(feats.begin(), feats.end(), std::back_inserter(samples));
    }
    return samples;
}

nlohmann::json split_to_json(const CorpusSplit& split) {
    return nlohmann::json{
        {"train", split.train}, {"valid", split.valid}, {"test", split.test}};
}

std::string prf_line(const Prf& p) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "precision %.4f  recall %.4f  f1 %.4f%s", p.precision,
                  p.recall, p.f1, p.degenerate ? "  (degenerate: empty class)" : "");
    return buf;
}

std::string mlcm_label(int i) {
    if (i < kNumIptClasses) return std::string(ipt_short_name(static_cast<IptClass>(i)));
    return "none";
}

} // namespace

std::string format_report(const EvaluationReport& report, const RunConfig& cfg,
                          const std::string& checkpoint_hash, const CorpusSplit& split) {
    std::ostringstream os;
    char buf[160];

    os << "evaluation report\n";
    os << "model config hash: " << checkpoint_hash << "\n";
    os << "corpus: " << cfg.corpus_dir.string() << "\n";
    os << "split sizes: " << cfg.split_sizes[0] << "/" << cfg.split_sizes[1] << "/"
       << cfg.split_sizes[2] << "  seed: " << cfg.split_seed << "\n";
    os << "test tracks:";
    for (const auto& id : split.test) os << " " << id;
    os << "\n\n";

    os << "overall (micro): " << prf_line(report.overall.micro) << "\n";
    os << "macro:           " << prf_line(report.overall.macro) << "\n\n";

    os << "per-class:\n";
    for (int c = 0; c < kNumIptClasses; ++c) {
        const auto& p = report.overall.per_class[static_cast<std::size_t>(c)];
        const auto& n = report.overall.counts.per_class[static_cast<std::size_t>(c)];
        std::snprintf(buf, sizeof buf, "  %-10s %s  (tp %lld fp %lld fn %lld)\n",
                      std::string(ipt_short_name(static_cast<IptClass>(c))).c_str(),
                      prf_line(p).c_str(), static_cast<long long>(n.tp),
                      static_cast<long long>(n.fp), static_cast<long long>(n.fn));
        os << buf;
    }

    os << "\nconfusion counts (rows truth, cols predicted):\n";
    os << "            ";
    for (int j = 0; j < MlcmMatrix::kSize; ++j) {
        std::snprintf(buf, sizeof buf, " %9s", mlcm_label(j).c_str());
        os << buf;
    }
    os << "\n";
    const auto norm = normalize_rows(report.confusion);
    for (int i = 0; i < MlcmMatrix::kSize; ++i) {
        std::snprintf(buf, sizeof buf, "  %-10s", mlcm_label(i).c_str());
        os << buf;
        for (int j = 0; j < MlcmMatrix::kSize; ++j) {
            std::snprintf(buf, sizeof buf, " %9lld",
                          static_cast<long long>(
                              report.confusion.counts[static_cast<std::size_t>(i)]
                                                     [static_cast<std::size_t>(j)]));
            os << buf;
        }
        os << "\n";
    }
    os << "\nconfusion proportions (row-normalized):\n";
    for (int i = 0; i < MlcmMatrix::kSize; ++i) {
        std::snprintf(buf, sizeof buf, "  %-10s", mlcm_label(i).c_str());
        os << buf;
        for (int j = 0; j < MlcmMatrix::kSize; ++j) {
            std::snprintf(buf, sizeof buf, " %9.4f",
                          norm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
            os << buf;
        }
        os << "\n";
    }

    os << "\nper-track:\n";
    for (const auto& t : report.per_track) {
        std::snprintf(buf, sizeof buf, "  %-24s %s\n", t.audio_id.c_str(),
                      prf_line(t.metrics.micro).c_str());
        os << buf;
    }
    if (!report.skipped.empty()) {
        os << "\nskipped (unreadable audio):";
        for (const auto& id : report.skipped) os << " " << id;
        os << "\n";
    }
    return os.str();
}

int cmd_stats(const std::filesystem::path& corpus_dir,
              const std::optional<std::filesystem::path>& out_file, const CommandIo& io) {
    const auto tracks = load_corpus(corpus_dir);
    std::vector<NoteAnnotation> notes;
    for (const auto& t : tracks) notes.insert(notes.end(), t.notes.begin(), t.notes.end());

    const std::string table = format_stats_table(corpus_stats(notes));
    out_of(io) << table;
    if (notes.empty())
        err_of(io) << "warning: corpus " << corpus_dir.string() << " contains no annotations\n";
    if (out_file) write_text_file(*out_file, table);
    return 0;
}

int cmd_split(const std::filesystem::path& corpus_dir, const std::array<int, 3>& sizes,
              std::uint64_t seed, const std::optional<std::filesystem::path>& out_file,
              const CommandIo& io) {
    const auto tracks = load_corpus(corpus_dir);
    const CorpusSplit split = split_corpus(tracks, sizes, seed);
    const std::string text = split_to_json(split).dump(2) + "\n";
    out_of(io) << text;
    char buf[64];
    std::snprintf(buf, sizeof buf, "share deviation: %.4f\n", split_objective(tracks, split));
    err_of(io) << buf;
    if (out_file) write_text_file(*out_file, text);
    return 0;
}

int cmd_train(const RunConfig& cfg, const CommandIo& io) {
    cfg.validate();
    if (cfg.corpus_dir.empty()) throw ConfigError("corpus_dir: required for training");
    if (cfg.output_dir.empty()) throw ConfigError("output_dir: required for training");
    if (cfg.split_sizes[0] <= 0 || cfg.split_sizes[1] <= 0)
        throw ConfigError("split_sizes: training needs non-empty train and valid sets");

    claim_fresh_dir(cfg.output_dir, "cmd_train");
    const auto tracks = load_corpus(cfg.corpus_dir);
    const CorpusSplit split = split_corpus(tracks, cfg.split_sizes, cfg.split_seed);

    save_run_config(cfg.output_dir / "config.json", cfg);
    write_text_file(cfg.output_dir / "split.json", split_to_json(split).dump(2) + "\n");

    std::optional<FeatureCache> cache;
    if (!cfg.cache_dir.empty()) cache.emplace(cfg.cache_dir);
    FeatureCache* cp = cache ? &*cache : nullptr;

    auto& out = out_of(io);
    out << "featurizing " << split.train.size() << " train / " << split.valid.size()
        << " valid tracks\n";
    const auto train = featurize_split(select_tracks(tracks, split.train), cfg.corpus_dir, cp);
    const auto valid = featurize_split(select_tracks(tracks, split.valid), cfg.corpus_dir, cp);

    MultiScaleNet net(cfg.model, cfg.train.seed);
    out << "model " << config_hash(cfg.model) << ", " << net.parameter_count()
        << " parameters, " << train.size() << " train clips\n";

    TrainOptions opts;
    opts.run_dir = cfg.output_dir;
    opts.on_epoch = [&out](const EpochLog& e) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "epoch %3d  lr %.6f  loss %.6f  val f1 %.4f\n", e.epoch,
                      e.lr, e.train_loss, e.val_f1);
        out << buf;
    };
    const TrainResult res = train_model(net, train, valid, cfg.train, opts);

    if (res.diverged) {
        err_of(io) << "training diverged; the best checkpoint before divergence is kept\n";
        return 5;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "done: best epoch %d, val f1 %.4f\n", res.best_epoch,
                  res.best_val_f1);
    out << buf;
    return 0;
}

int cmd_eval(const std::filesystem::path& checkpoint_path, const RunConfig& cfg,
             const std::filesystem::path& out_dir, const CommandIo& io) {
    if (cfg.corpus_dir.empty()) throw ConfigError("corpus_dir: required for evaluation");
    Checkpoint ckpt = load_checkpoint(checkpoint_path);

    // A run config that pins a model must pin the one the checkpoint holds.
    if (!(cfg.model == ModelConfig{}) && !(cfg.model == ckpt.config)) {
        throw ConfigError("cmd_eval: config model " + config_hash(cfg.model) +
                          " does not match checkpoint model " + config_hash(ckpt.config));
    }

    claim_fresh_dir(out_dir, "cmd_eval");
    const auto tracks = load_corpus(cfg.corpus_dir);
    const CorpusSplit split = split_corpus(tracks, cfg.split_sizes, cfg.split_seed);

    std::optional<FeatureCache> cache;
    if (!cfg.cache_dir.empty()) cache.emplace(cfg.cache_dir);

    EvaluationReport report = evaluate_tracks(*ckpt.net, select_tracks(tracks, split.test),
                                              cfg.corpus_dir, cache ? &*cache : nullptr);

    const std::string text = format_report(report, cfg, config_hash(ckpt.config), split);
    write_text_file(out_dir / "report.txt", text);
    write_png(out_dir / "confusion.png", render_confusion(report.confusion));
    std::filesystem::create_directories(out_dir / "figures");
    for (const auto& t : report.per_track)
        write_png(out_dir / "figures" / (t.audio_id + ".png"),
                  render_piano_roll(t.prediction, &t.truth));

    out_of(io) << text;
    if (!report.skipped.empty()) {
        err_of(io) << "error: " << report.skipped.size()
                   << " track(s) skipped for unreadable audio\n";
        return 3;
    }
    return 0;
}

Prediction predict_track(MultiScaleNet& net, const Waveform& w, FeatureCache* cache,
                         const std::string& source_id) {
    const int t_track = frame_count(static_cast<std::int64_t>(w.samples.size()), kHop);
    const FrameLabelMatrix empty(t_track, kHop, kTargetSampleRate);
    const auto clips = clip_3s(w, empty, source_id);

    Prediction full(kNumIptClasses, t_track);
    int col = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const CqtSpectrogram cqt = cache != nullptr
                                       ? cache->get(clips[i].audio, static_cast<int>(i))
                                       : compute_cqt(clips[i].audio);
        const Prediction p = net.predict(cqt);
        for (int t = 0; t < p.n_frames; ++t) {
            if (clips[i].valid[static_cast<std::size_t>(t)] == 0) continue;
            for (int c = 0; c < kNumIptClasses; ++c) full.at(c, col) = p.at(c, t);
            ++col;
        }
    }
    if (col != t_track)
        throw ValidationError("predict_track: clip columns do not cover the track");
    return full;
}

int cmd_predict(const std::filesystem::path& checkpoint_path,
                const std::filesystem::path& audio_path,
                const std::filesystem::path& out_tsv,
                const std::optional<std::filesystem::path>& figure, const CommandIo& io) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const Waveform w = load_audio(audio_path);
    if (static_cast<int>(w.samples.size()) < CqtTransform().min_length())
        throw ValidationError("cmd_predict: audio is shorter than one transform window");

    const Prediction pred = predict_track(*ckpt.net, w, nullptr, audio_path.stem().string());
    const FrameLabelMatrix act = binarize(pred);

    // The whole file is composed first so a failure never leaves a partial file.
    std::ostringstream os;
    os << "frame_time_s";
    for (auto c : all_ipt_classes()) os << "\tp_" << ipt_name(c);
    for (auto c : all_ipt_classes()) os << "\tb_" << ipt_name(c);
    os << "\n";
    char buf[32];
    for (int t = 0; t < pred.n_frames; ++t) {
        std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(t) * kHop / w.sample_rate);
        os << buf;
        for (int c = 0; c < kNumIptClasses; ++c) {
            std::snprintf(buf, sizeof buf, "\t%.6f", pred.at(c, t));
            os << buf;
        }
        for (int c = 0; c < kNumIptClasses; ++c) os << "\t" << static_cast<int>(act.at(c, t));
        os << "\n";
    }
    write_text_file(out_tsv, os.str());
    if (figure) write_png(*figure, render_piano_roll(pred));

    out_of(io) << pred.n_frames << " frames -> " << out_tsv.string() << "\n";
    return 0;
}

int cmd_synth(const std::filesystem::path& out_dir, int n_tracks, double duration,
              std::uint64_t seed, const CommandIo& io) {
    const auto ids = write_fixture_corpus(out_dir, n_tracks, duration, seed);
    out_of(io) << "wrote " << ids.size() << " fixture tracks to " << out_dir.string() << "\n";
    return 0;
}

} // namespace iptdet
