#include "iptdet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "iptdet/errors.hpp"
#include "iptdet/evaluation.hpp"

namespace iptdet {

namespace {

constexpr double kEps = 1e-7;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double clamp_p(double p) { return std::min(1.0 - kEps, std::max(kEps, p)); }

} // namespace

void TrainConfig::validate() const {
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("momentum: must lie in [0, 1), got " + std::to_string(momentum));
    if (!(initial_lr > 0.0))
        throw ConfigError("initial_lr: must be positive, got " + std::to_string(initial_lr));
    if (batch_size < 1)
        throw ConfigError("batch_size: must be at least 1, got " + std::to_string(batch_size));
    if (!(grad_clip_l2 > 0.0))
        throw ConfigError("grad_clip_l2: must be positive, got " + std::to_string(grad_clip_l2));
    if (epochs < 1) throw ConfigError("epochs: must be at least 1, got " + std::to_string(epochs));
    if (!(weight_max >= 1.0))
        throw ConfigError("weight_max: must be at least 1, got " + std::to_string(weight_max));
}

ClassWeights class_weights_from_counts(const std::array<std::int64_t, kNumIptClasses>& pos,
                                       const std::array<std::int64_t, kNumIptClasses>& neg,
                                       double w_max) {
    std::string missing;
    for (int c = 0; c < kNumIptClasses; ++c) {
        if (pos[static_cast<std::size_t>(c)] <= 0) {
            if (!missing.empty()) missing += ", ";
            missing += ipt_name(static_cast<IptClass>(c));
        }
    }
    if (!missing.empty())
        throw ValidationError("class_weights: no positive frames for " + missing +
                              " in the training labels");
    ClassWeights cw;
    for (int c = 0; c < kNumIptClasses; ++c) {
        const double ratio = static_cast<double>(neg[static_cast<std::size_t>(c)]) /
                             static_cast<double>(pos[static_cast<std::size_t>(c)]);
        cw.w[static_cast<std::size_t>(c)] = std::min(w_max, std::max(1.0, ratio));
    }
    return cw;
}

ClassWeights class_weights(const std::vector<TrainSample>& train, double w_max) {
    std::array<std::int64_t, kNumIptClasses> pos{}, neg{};
    for (const auto& s : train) {
        for (int t = 0; t < s.labels.n_frames; ++t) {
            if (!s.valid.empty() && !s.valid[static_cast<std::size_t>(t)]) continue;
            for (int c = 0; c < kNumIptClasses; ++c) {
                if (s.labels.at(c, t))
                    ++pos[static_cast<std::size_t>(c)];
                else
                    ++neg[static_cast<std::size_t>(c)];
            }
        }
    }
    return class_weights_from_counts(pos, neg, w_max);
}

std::vector<TrainSample> featurize_clips(const std::vector<LabeledClip>& clips,
                                         FeatureCache* cache) {
    std::vector<TrainSample> out;
    out.reserve(clips.size());
    std::map<std::string, int> next_index;
    for (const auto& clip : clips) {
        const int idx = next_index[clip.audio.source_id]++;
        TrainSample s;
        s.cqt = cache ? cache->get(clip.audio, idx) : compute_cqt(clip.audio);
        s.labels = clip.labels;
        s.valid = clip.valid;
        s.source_id = clip.audio.source_id;
        out.push_back(std::move(s));
    }
    return out;
}

double weighted_bce(const Prediction& pred, const FrameLabelMatrix& target,
                    const ClassWeights& weights, const std::vector<std::uint8_t>& valid) {
    if (pred.n_classes != target.n_classes || pred.n_frames != target.n_frames)
        throw ValidationError("weighted-bce: prediction and target shapes disagree");
    if (!valid.empty() && static_cast<int>(valid.size()) != pred.n_frames)
        throw ValidationError("weighted-bce: valid mask length does not match the frames");
    double total = 0.0;
    std::int64_t cells = 0;
    for (int c = 0; c < pred.n_classes; ++c) {
        const double w = weights.w[static_cast<std::size_t>(c)];
        for (int t = 0; t < pred.n_frames; ++t) {
            if (!valid.empty() && !valid[static_cast<std::size_t>(t)]) continue;
            const double p = pred.at(c, t);
            if (std::isnan(p))
                throw NumericError("weighted-bce: NaN likelihood for " +
                                   std::string(ipt_name(static_cast<IptClass>(c))) + " at frame " +
                                   std::to_string(t));
            const double pc = clamp_p(p);
            const double y = target.at(c, t) ? 1.0 : 0.0;
            total += -(w * y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
            ++cells;
        }
    }
    return cells > 0 ? total / static_cast<double>(cells) : 0.0;
}

double bce_with_logits(const nn::Tensor& logits, const std::vector<LossTargets>& targets,
                       const ClassWeights& weights, nn::Tensor* grad) {
    if (static_cast<int>(targets.size()) != logits.b)
        throw ValidationError("weighted-bce: batch size mismatch");
    if (logits.c != kNumIptClasses || logits.w != 1)
        throw ValidationError("weighted-bce: logits must have shape (B, " +
                              std::to_string(kNumIptClasses) + ", T, 1)");
    std::int64_t cells = 0;
    for (const auto& tg : targets) {
        if (!tg.labels || tg.labels->n_classes != logits.c || tg.labels->n_frames != logits.t)
            throw ValidationError("weighted-bce: target shape mismatch");
        if (tg.valid && !tg.valid->empty()) {
            if (static_cast<int>(tg.valid->size()) != logits.t)
                throw ValidationError("weighted-bce: valid mask length mismatch");
            for (std::uint8_t v : *tg.valid) cells += v ? logits.c : 0;
        } else {
            cells += static_cast<std::int64_t>(logits.t) * logits.c;
        }
    }

    if (grad) *grad = nn::Tensor(logits.b, logits.c, logits.t, 1);
    if (cells == 0) return 0.0;
    const double inv_m = 1.0 / static_cast<double>(cells);

    double total = 0.0;
    for (int b = 0; b < logits.b; ++b) {
        const auto& tg = targets[static_cast<std::size_t>(b)];
        const bool masked = tg.valid && !tg.valid->empty();
        for (int t = 0; t < logits.t; ++t) {
            if (masked && !(*tg.valid)[static_cast<std::size_t>(t)]) continue;
            for (int c = 0; c < logits.c; ++c) {
                const double z = logits.at(b, c, t, 0);
                if (!std::isfinite(z))
                    throw NumericError("weighted-bce: non-finite logit for " +
                                       std::string(ipt_name(static_cast<IptClass>(c))) +
                                       " at frame " + std::to_string(t));
                const double w = weights.w[static_cast<std::size_t>(c)];
                const double p = sigmoid(z);
                const double pc = clamp_p(p);
                const double y = tg.labels->at(c, t) ? 1.0 : 0.0;
                total += -(w * y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
                if (grad)
                    grad->at(b, c, t, 0) = inv_m * ((1.0 - y) * p - w * y * (1.0 - p));
            }
        }
    }
    return total * inv_m;
}

double cosine_lr(double lr0, std::int64_t step, std::int64_t total_steps) {
    if (total_steps < 1)
        throw ValidationError("cosine_lr: total_steps must be positive, got " +
                              std::to_string(total_steps));
    if (total_steps == 1) return lr0;
    const double s = static_cast<double>(std::clamp<std::int64_t>(step, 0, total_steps - 1));
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * s / static_cast<double>(total_steps - 1)));
}

double clip_gradients(const std::vector<nn::Param*>& params, double max_norm) {
    const double norm = nn::global_grad_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto* p : params)
            for (double& g : p->grad) g *= scale;
    }
    return norm;
}

SgdMomentum::SgdMomentum(std::vector<nn::Param*> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
    velocity_.reserve(params_.size());
    for (const auto* p : params_) velocity_.emplace_back(p->size(), 0.0);
}

void SgdMomentum::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& v = velocity_[i];
        auto& p = *params_[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = momentum_ * v[j] + p.grad[j];
            p.value[j] -= lr * v[j];
        }
    }
}

TrainResult train_model(MultiScaleNet& net, const std::vector<TrainSample>& train,
                        const std::vector<TrainSample>& val, const TrainConfig& cfg,
                        const TrainOptions& opts) {
    cfg.validate();
    if (train.empty()) throw ValidationError("train: the training split is empty");
    if (val.empty()) throw ValidationError("train: the validation split is empty");

    const ClassWeights weights =
        opts.weights ? *opts.weights : class_weights(train, cfg.weight_max);

    const auto& params = net.parameters();
    SgdMomentum sgd(params, cfg.momentum);

    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

    auto snapshot = [&net]() {
        std::vector<std::vector<double>> s;
        for (const auto* p : net.parameters()) s.push_back(p->value);
        for (const auto* p : net.state()) s.push_back(p->value);
        return s;
    };
    auto restore = [&net](const std::vector<std::vector<double>>& s) {
        std::size_t i = 0;
        for (auto* p : net.parameters()) p->value = s[i++];
        for (auto* p : net.state()) p->value = s[i++];
    };

    std::vector<std::vector<double>> best = snapshot();
    TrainResult res;

    std::ofstream log_os;
    if (!opts.run_dir.empty()) {
        std::filesystem::create_directories(opts.run_dir);
        log_os.open(opts.run_dir / "log.csv");
        if (!log_os) throw IoError("cannot write " + (opts.run_dir / "log.csv").string());
        log_os << "epoch,lr,train_loss,val_precision,val_recall,val_f1\n";
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::int64_t step = 0;
    bool aborted = false;
    for (int epoch = 0; epoch < cfg.epochs && !aborted; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        int epoch_steps = 0;
        double last_lr = 0.0;
        for (std::size_t i0 = 0; i0 < order.size(); i0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t n =
                std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - i0);
            std::vector<const CqtSpectrogram*> cqts;
            std::vector<LossTargets> targets;
            cqts.reserve(n);
            targets.reserve(n);
            for (std::size_t j = 0; j < n; ++j) {
                const TrainSample& s = train[order[i0 + j]];
                cqts.push_back(&s.cqt);
                targets.push_back({&s.labels, &s.valid});
            }

            nn::Tensor logits = net.forward(MultiScaleNet::pack(cqts), true);
            nn::Tensor grad;
            double loss;
            try {
                loss = bce_with_logits(logits, targets, weights, &grad);
            } catch (const NumericError&) {
                loss = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(loss)) {
                res.diverged = true;
                aborted = true;
                break;
            }

            nn::zero_grads(params);
            net.backward(grad);
            clip_gradients(params, cfg.grad_clip_l2);
            last_lr = cosine_lr(cfg.initial_lr, step, total_steps);
            sgd.step(last_lr);
            ++step;
            loss_sum += loss;
            ++epoch_steps;
        }
        if (aborted) break;

        FrameCounts vc;
        for (const auto& s : val) {
            const Prediction p = net.predict(s.cqt);
            accumulate_counts(vc, binarize(p, 0.5), s.labels,
                              s.valid.empty() ? nullptr : &s.valid);
        }
        const FrameMetrics fm = metrics_from_counts(vc);

        EpochLog el;
        el.epoch = epoch;
        el.lr = last_lr;
        el.train_loss = epoch_steps > 0 ? loss_sum / epoch_steps : 0.0;
        el.val_precision = fm.micro.precision;
        el.val_recall = fm.micro.recall;
        el.val_f1 = fm.micro.f1;
        res.log.push_back(el);

        if (log_os) {
            char line[192];
            std::snprintf(line, sizeof line, "%d,%.8f,%.8f,%.6f,%.6f,%.6f\n", el.epoch, el.lr,
                          el.train_loss, el.val_precision, el.val_recall, el.val_f1);
            log_os << line;
            log_os.flush();
        }

        const std::map<std::string, double> metrics{{"epoch", static_cast<double>(epoch)},
                                                    {"train_loss", el.train_loss},
                                                    {"val_precision", el.val_precision},
                                                    {"val_recall", el.val_recall},
                                                    {"val_f1", el.val_f1}};
        if (!opts.run_dir.empty()) save_checkpoint(opts.run_dir / "last.ckpt", net, metrics);

        if (res.best_epoch < 0 || fm.micro.f1 > res.best_val_f1) {
            res.best_val_f1 = fm.micro.f1;
            res.best_epoch = epoch;
            best = snapshot();
            if (!opts.run_dir.empty()) save_checkpoint(opts.run_dir / "best.ckpt", net, metrics);
        }
        if (opts.on_epoch) opts.on_epoch(el);
    }

    restore(best);
    if (!opts.run_dir.empty()) {
        res.best_checkpoint = opts.run_dir / "best.ckpt";
        // A run that diverged before its first validation still leaves a
        // loadable (initialization) checkpoint behind.
        if (!std::filesystem::exists(res.best_checkpoint))
            save_checkpoint(res.best_checkpoint, net, {});
    }
    return res;
}

} // namespace iptdet
