#include "iptdet/evaluation.hpp"

#include <algorithm>

#include "iptdet/audio.hpp"
#include "iptdet/errors.hpp"

namespace iptdet {

Prf prf_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    Prf r;
    if (tp + fp == 0) {
        r.degenerate = true;
    } else {
        r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
        r.degenerate = true;
    } else {
        r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    if (r.precision + r.recall > 0.0) {
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    } else {
        r.degenerate = true;
    }
    return r;
}

namespace {

void check_pair(const FrameLabelMatrix& pred, const FrameLabelMatrix& truth,
                const std::vector<std::uint8_t>* valid) {
    if (pred.n_classes != truth.n_classes || pred.n_frames != truth.n_frames)
        throw ValidationError("metrics: prediction and truth shapes disagree (" +
                              std::to_string(pred.n_classes) + "x" +
                              std::to_string(pred.n_frames) + " vs " +
                              std::to_string(truth.n_classes) + "x" +
                              std::to_string(truth.n_frames) + ")");
    if (valid && static_cast<int>(valid->size()) != pred.n_frames)
        throw ValidationError("metrics: valid mask length " + std::to_string(valid->size()) +
                              " does not match " + std::to_string(pred.n_frames) + " frames");
}

} // namespace

void accumulate_counts(FrameCounts& acc, const FrameLabelMatrix& pred,
                       const FrameLabelMatrix& truth, const std::vector<std::uint8_t>* valid) {
    check_pair(pred, truth, valid);
    for (int c = 0; c < pred.n_classes; ++c) {
        auto& pc = acc.per_class[static_cast<std::size_t>(c)];
        for (int t = 0; t < pred.n_frames; ++t) {
            if (valid && !(*valid)[static_cast<std::size_t>(t)]) continue;
            const bool p = pred.at(c, t) != 0;
            const bool y = truth.at(c, t) != 0;
            if (p && y) {
                ++pc.tp;
            } else if (p) {
                ++pc.fp;
            } else if (y) {
                ++pc.fn;
            }
        }
    }
    acc.tp = acc.fp = acc.fn = 0;
    for (const auto& pc : acc.per_class) {
        acc.tp += pc.tp;
        acc.fp += pc.fp;
        acc.fn += pc.fn;
    }
}

FrameMetrics metrics_from_counts(const FrameCounts& counts) {
    FrameMetrics m;
    m.counts = counts;
    m.micro = prf_from_counts(counts.tp, counts.fp, counts.fn);
    double sp = 0.0, sr = 0.0, sf = 0.0;
    bool any_degenerate = false;
    for (int c = 0; c < kNumIptClasses; ++c) {
        const auto& pc = counts.per_class[static_cast<std::size_t>(c)];
        m.per_class[static_cast<std::size_t>(c)] = prf_from_counts(pc.tp, pc.fp, pc.fn);
        sp += m.per_class[static_cast<std::size_t>(c)].precision;
        sr += m.per_class[static_cast<std::size_t>(c)].recall;
        sf += m.per_class[static_cast<std::size_t>(c)].f1;
        any_degenerate = any_degenerate || m.per_class[static_cast<std::size_t>(c)].degenerate;
    }
    m.macro.precision = sp / kNumIptClasses;
    m.macro.recall = sr / kNumIptClasses;
    m.macro.f1 = sf / kNumIptClasses;
    m.macro.degenerate = any_degenerate;
    return m;
}

FrameMetrics frame_metrics(const FrameLabelMatrix& pred, const FrameLabelMatrix& truth,
                           const std::vector<std::uint8_t>* valid) {
    FrameCounts counts;
    accumulate_counts(counts, pred, truth, valid);
    return metrics_from_counts(counts);
}

void MlcmMatrix::add(const MlcmMatrix& other) {
    for (int r = 0; r < kSize; ++r)
        for (int c = 0; c < kSize; ++c) counts[r][c] += other.counts[r][c];
}

std::int64_t MlcmMatrix::total() const {
    std::int64_t n = 0;
    for (const auto& row : counts)
        for (std::int64_t v : row) n += v;
    return n;
}

MlcmMatrix mlcm(const FrameLabelMatrix& pred, const FrameLabelMatrix& truth,
                const std::vector<std::uint8_t>* valid) {
    check_pair(pred, truth, valid);
    MlcmMatrix m;
    std::vector<int> miss, spur;
    miss.reserve(kNumIptClasses);
    spur.reserve(kNumIptClasses);
    for (int t = 0; t < pred.n_frames; ++t) {
        if (valid && !(*valid)[static_cast<std::size_t>(t)]) continue;
        miss.clear();
        spur.clear();
        bool any_truth = false;
        for (int c = 0; c < pred.n_classes; ++c) {
            const bool p = pred.at(c, t) != 0;
            const bool y = truth.at(c, t) != 0;
            any_truth = any_truth || y;
            if (p && y) {
                ++m.counts[c][c];
            } else if (y) {
                miss.push_back(c);
            } else if (p) {
                spur.push_back(c);
            }
        }
        if (!miss.empty()) {
            if (!spur.empty()) {
                for (int mc : miss)
                    for (int sc : spur) ++m.counts[mc][sc];
            } else {
                for (int mc : miss) ++m.counts[mc][MlcmMatrix::kNpl];
            }
        } else if (!any_truth) {
            if (!spur.empty()) {
                for (int sc : spur) ++m.counts[MlcmMatrix::kNtl][sc];
            } else {
                ++m.counts[MlcmMatrix::kNtl][MlcmMatrix::kNpl];
            }
        }
    }
    return m;
}

std::vector<std::vector<double>> normalize_rows(const MlcmMatrix& m) {
    std::vector<std::vector<double>> out(MlcmMatrix::kSize,
                                         std::vector<double>(MlcmMatrix::kSize, 0.0));
    for (int r = 0; r < MlcmMatrix::kSize; ++r) {
        std::int64_t sum = 0;
        for (std::int64_t v : m.counts[r]) sum += v;
        if (sum == 0) continue;
        for (int c = 0; c < MlcmMatrix::kSize; ++c)
            out[r][c] = static_cast<double>(m.counts[r][c]) / static_cast<double>(sum);
    }
    return out;
}

EvaluationReport evaluate_tracks(MultiScaleNet& net, const std::vector<TrackInfo>& tracks,
                                 const std::filesystem::path& corpus_dir, FeatureCache* cache,
                                 double threshold) {
    std::vector<const TrackInfo*> order;
    order.reserve(tracks.size());
    for (const auto& t : tracks) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](const TrackInfo* a, const TrackInfo* b) {
        return a->meta.audio_id < b->meta.audio_id;
    });

    EvaluationReport rep;
    FrameCounts total;
    for (const TrackInfo* tr : order) {
        const std::string& id = tr->meta.audio_id;
        Waveform w;
        try {
            w = load_audio(corpus_wav_path(corpus_dir, id));
        } catch (const Error&) {
            rep.skipped.push_back(id);
            continue;
        }

        const int t_track = frame_count(static_cast<std::int64_t>(w.samples.size()), kHop);
        RasterizeResult ras = rasterize_labels(tr->notes, t_track, kHop, kTargetSampleRate);
        const std::vector<LabeledClip> clips = clip_3s(w, ras.labels, id);

        TrackEvaluation te;
        te.audio_id = id;
        te.prediction = Prediction(kNumIptClasses, t_track);
        te.truth = FrameLabelMatrix(t_track, kHop, kTargetSampleRate);
        FrameCounts track_counts;

        int col = 0;
        for (std::size_t i = 0; i < clips.size(); ++i) {
            const LabeledClip& clip = clips[i];
            const CqtSpectrogram cqt = cache ? cache->get(clip.audio, static_cast<int>(i))
                                             : compute_cqt(clip.audio);
            const Prediction p = net.predict(cqt);
            const FrameLabelMatrix bin = binarize(p, threshold);
            accumulate_counts(track_counts, bin, clip.labels, &clip.valid);
            rep.confusion.add(mlcm(bin, clip.labels, &clip.valid));
            for (int t = 0; t < clip.labels.n_frames; ++t) {
                if (!clip.valid[static_cast<std::size_t>(t)]) continue;
                for (int c = 0; c < kNumIptClasses; ++c) {
                    te.prediction.at(c, col) = p.at(c, t);
                    te.truth.set(c, col, clip.labels.at(c, t));
                }
                ++col;
            }
        }
        if (col != t_track)
            throw ValidationError(id + ": clip columns do not cover the track (" +
                                  std::to_string(col) + " of " + std::to_string(t_track) + ")");

        te.metrics = metrics_from_counts(track_counts);
        for (int c = 0; c < kNumIptClasses; ++c) {
            total.per_class[static_cast<std::size_t>(c)].tp +=
                track_counts.per_class[static_cast<std::size_t>(c)].tp;
            total.per_class[static_cast<std::size_t>(c)].fp +=
                track_counts.per_class[static_cast<std::size_t>(c)].fp;
            total.per_class[static_cast<std::size_t>(c)].fn +=
                track_counts.per_class[static_cast<std::size_t>(c)].fn;
        }
        rep.per_track.push_back(std::move(te));
    }
    total.tp = total.fp = total.fn = 0;
    for (const auto& pc : total.per_class) {
        total.tp += pc.tp;
        total.fp += pc.fp;
        total.fn += pc.fn;
    }
    rep.overall = metrics_from_counts(total);
    return rep;
}

} // namespace iptdet
