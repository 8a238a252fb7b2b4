#pragma once

// Frame-level scoring: micro/macro/per-class precision, recall and F1 over
// multi-hot frame grids, and a multi-label confusion matrix with "no true
// label" / "no predicted label" overflow categories.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iptdet/dataset.hpp"
#include "iptdet/features.hpp"
#include "iptdet/model.hpp"

namespace iptdet {

struct ClassCounts {
    std::int64_t tp = 0, fp = 0, fn = 0;
};

struct FrameCounts {
    std::int64_t tp = 0, fp = 0, fn = 0; // summed over classes
    std::array<ClassCounts, kNumIptClasses> per_class{};
};

// One precision/recall/F1 triple. `degenerate` marks the 0/0 cases that were
// defined to 0 by convention.
struct Prf {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    bool degenerate = false;
};

Prf prf_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct FrameMetrics {
    Prf micro;                                 // cells pooled across classes
    std::array<Prf, kNumIptClasses> per_class;
    Prf macro;                                 // unweighted mean of per-class
    FrameCounts counts;
};

// Adds the TP/FP/FN cells of one prediction/truth pair; columns with
// valid[t] == 0 are skipped (pass nullptr for no mask).
void accumulate_counts(FrameCounts& acc, const FrameLabelMatrix& pred,
                       const FrameLabelMatrix& truth, const std::vector<std::uint8_t>* valid);

FrameMetrics metrics_from_counts(const FrameCounts& counts);

FrameMetrics frame_metrics(const FrameLabelMatrix& pred, const FrameLabelMatrix& truth,
                           const std::vector<std::uint8_t>* valid = nullptr);

// (N+1) x (N+1) confusion counts. Row = true class, column = predicted
// class; the extra row is "no true label", the extra column "no predicted
// label".
struct MlcmMatrix {
    static constexpr int kSize = kNumIptClasses + 1;
    static constexpr int kNtl = kNumIptClasses; // row index
    static constexpr int kNpl = kNumIptClasses; // column index
    std::array<std::array<std::int64_t, kSize>, kSize> counts{};

    void add(const MlcmMatrix& other);
    std::int64_t total() const;
};

// Per frame with true set S_t and predicted set S_p:
//   1. each label in S_t ∩ S_p counts on the diagonal;
//   2. if both S_t\S_p and S_p\S_t are non-empty, each missed true label
//      counts once against every spurious predicted label;
//   3. if S_t\S_p is non-empty and S_p ⊆ S_t, each missed true label counts
//      in the NPL column;
//   4. if S_t is empty and S_p is not, each predicted label counts in the
//      NTL row;
//   5. frames with both sets empty count once at (NTL, NPL).
MlcmMatrix mlcm(const FrameLabelMatrix& pred, const FrameLabelMatrix& truth,
                const std::vector<std::uint8_t>* valid = nullptr);

// Rows divided by their sums; all-zero rows stay zero.
std::vector<std::vector<double>> normalize_rows(const MlcmMatrix& m);

// ---------------------------------------------------------------------------
// Whole-corpus evaluation
// ---------------------------------------------------------------------------

struct TrackEvaluation {
    std::string audio_id;
    FrameMetrics metrics;
    Prediction prediction;  // valid columns of all clips, in track order
    FrameLabelMatrix truth; // the matching ground-truth columns
};

struct EvaluationReport {
    FrameMetrics overall;
    MlcmMatrix confusion;
    std::vector<TrackEvaluation> per_track; // sorted by audio_id
    std::vector<std::string> skipped;       // annotated tracks with unreadable audio
};

// Runs the model over every track: load audio, rasterize the annotations,
// cut 3 s clips, predict per clip, score the valid columns at threshold 0.5.
// Tracks whose audio cannot be read are listed in `skipped`, not fatal.
EvaluationReport evaluate_tracks(MultiScaleNet& net, const std::vector<TrackInfo>& tracks,
                                 const std::filesystem::path& corpus_dir,
                                 FeatureCache* cache = nullptr, double threshold = 0.5);

} // namespace iptdet
