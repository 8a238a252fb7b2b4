#pragma once

// Momentum-SGD training on 3 s clips: imbalance-weighted binary cross
// entropy, global gradient-norm clipping, cosine learning-rate annealing,
// and per-epoch validation with best-checkpoint retention.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iptdet/features.hpp"
#include "iptdet/model.hpp"

namespace iptdet {

struct TrainConfig {
    double momentum = 0.9;
    double initial_lr = 0.01;
    int batch_size = 10;
    double grad_clip_l2 = 3.0;
    int epochs = 100;
    std::uint64_t seed = 0;
    double weight_max = 20.0; // clamp ceiling for the class weights

    void validate() const; // throws ConfigError naming the field
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ClassWeights {
    std::array<double, kNumIptClasses> w;
    ClassWeights() { w.fill(1.0); }
};

// w_c = clamp(neg_c / pos_c, 1, w_max) counted over the valid cells of the
// training labels. A class with no positive frame anywhere is an error
// naming the class.
ClassWeights class_weights_from_counts(const std::array<std::int64_t, kNumIptClasses>& pos,
                                       const std::array<std::int64_t, kNumIptClasses>& neg,
                                       double w_max = 20.0);

// One training unit: precomputed features plus the labels the clip owns.
struct TrainSample {
    CqtSpectrogram cqt;
    FrameLabelMatrix labels;
    std::vector<std::uint8_t> valid;
    std::string source_id;
};

ClassWeights class_weights(const std::vector<TrainSample>& train, double w_max = 20.0);

// CQT per clip, through the cache when one is given. Clips must arrive in
// track order; the per-track clip index keys the cache.
std::vector<TrainSample> featurize_clips(const std::vector<LabeledClip>& clips,
                                         FeatureCache* cache = nullptr);

// Mean over valid (class, frame) cells of
//   -[w_c * y * log p + (1 - y) * log(1 - p)]
// with p clamped to [1e-7, 1 - 1e-7]. Frames with mask 0 contribute nothing;
// an empty mask means all frames count. NaN predictions raise NumericError.
double weighted_bce(const Prediction& pred, const FrameLabelMatrix& target,
                    const ClassWeights& weights, const std::vector<std::uint8_t>& valid);

// The same loss computed from logits for a whole batch, with the gradient
// w.r.t. the logits written to *grad when non-null. The clamp only affects
// the reported value; the gradient uses the exact sigmoid.
struct LossTargets {
    const FrameLabelMatrix* labels = nullptr;
    const std::vector<std::uint8_t>* valid = nullptr;
};
double bce_with_logits(const nn::Tensor& logits, const std::vector<LossTargets>& targets,
                       const ClassWeights& weights, nn::Tensor* grad);

// Anneals from lr0 at step 0 to exactly 0 at step total_steps - 1.
double cosine_lr(double lr0, std::int64_t step, std::int64_t total_steps);

// Scales every gradient so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_gradients(const std::vector<nn::Param*>& params, double max_norm);

class SgdMomentum {
  public:
    SgdMomentum(std::vector<nn::Param*> params, double momentum);
    // v <- momentum * v + grad; theta <- theta - lr * v
    void step(double lr);

  private:
    std::vector<nn::Param*> params_;
    double momentum_;
    std::vector<std::vector<double>> velocity_;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0; // learning rate of the epoch's last step
    double train_loss = 0.0;
    double val_precision = 0.0, val_recall = 0.0, val_f1 = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_f1 = 0.0;
    bool diverged = false;
    std::filesystem::path best_checkpoint; // set when run_dir was given
};

struct TrainOptions {
    // When set, receives log.csv plus best.ckpt / last.ckpt.
    std::filesystem::path run_dir;
    std::function<void(const EpochLog&)> on_epoch;
    // Overrides the weights computed from the training split.
    std::optional<ClassWeights> weights;
};

// Runs the full loop. Batches are drawn without replacement in an order
// shuffled per epoch from cfg.seed; the learning rate follows one cosine arc
// over epochs * steps_per_epoch steps. After each epoch the validation split
// is scored at threshold 0.5 and the parameters with the best micro F1 are
// kept; the net holds them when the function returns. A non-finite loss
// aborts training and restores the best parameters seen.
TrainResult train_model(MultiScaleNet& net, const std::vector<TrainSample>& train,
                        const std::vector<TrainSample>& val, const TrainConfig& cfg,
                        const TrainOptions& opts = {});

} // namespace iptdet
