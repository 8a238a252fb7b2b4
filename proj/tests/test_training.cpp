// Loss, schedule, clipping and optimizer checks against closed forms and the
// scalar oracle, plus small end-to-end runs of the training loop.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "iptdet/audio.hpp"
#include "iptdet/dataset.hpp"
#include "iptdet/errors.hpp"
#include "iptdet/evaluation.hpp"
#include "iptdet/synth.hpp"
#include "iptdet/training.hpp"
#include "oracles.hpp"

using namespace iptdet;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.channels_per_branch = {2, 3, 4};
    cfg.head_channels = 8;
    return cfg;
}

TrainSample make_sample(int frames, double density, std::mt19937_64& rng) {
    TrainSample s;
    s.cqt.n_frames = frames;
    s.cqt.mag.resize(static_cast<std::size_t>(s.cqt.n_bins) * frames);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (auto& v : s.cqt.mag) v = ud(rng);
    s.labels = FrameLabelMatrix(frames, kHop, kTargetSampleRate);
    std::bernoulli_distribution bit(density);
    for (int c = 0; c < kNumIptClasses; ++c)
        for (int t = 0; t < frames; ++t)
            if (bit(rng)) s.labels.set(c, t, 1);
    s.valid.assign(static_cast<std::size_t>(frames), 1);
    s.source_id = "synthetic";
    return s;
}

} // namespace

TEST_CASE("class weights follow the negative-to-positive ratio with clamping") {
    std::array<std::int64_t, kNumIptClasses> pos{}, neg{};
    pos.fill(500);
    neg.fill(500);
    pos[0] = 100;
    neg[0] = 900; // ratio 9
    pos[1] = 10;
    neg[1] = 10000; // clamped to 20
    pos[2] = 800;
    neg[2] = 200; // ratio < 1, floored to 1
    ClassWeights w = class_weights_from_counts(pos, neg);
    CHECK(w.w[0] == doctest::Approx(9.0));
    CHECK(w.w[1] == doctest::Approx(20.0));
    CHECK(w.w[2] == doctest::Approx(1.0));
    CHECK(w.w[3] == doctest::Approx(1.0)); // balanced

    SUBCASE("zero positives is an error naming the class") {
        pos[5] = 0; // tremolo
        try {
            (void)class_weights_from_counts(pos, neg);
            FAIL("expected an error");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("tremolo") != std::string::npos);
        }
    }
    SUBCASE("weight ceiling is configurable") {
        ClassWeights cw = class_weights_from_counts(pos, neg, 5.0);
        CHECK(cw.w[0] == doctest::Approx(5.0));
    }
}

TEST_CASE("class weights count only valid cells") {
    std::mt19937_64 rng(1);
    TrainSample s = make_sample(20, 0.0, rng);
    // 10 valid frames: class 0 positive in 5 of them -> ratio 1; the masked
    // tail is all-positive junk that must not count.
    for (int t = 0; t < 20; ++t) {
        s.valid[static_cast<std::size_t>(t)] = t < 10;
        for (int c = 0; c < kNumIptClasses; ++c) s.labels.set(c, t, t >= 10 || (c == 0 && t < 5));
    }
    // classes 1..6 have positives only in masked frames: error
    CHECK_THROWS_AS((void)class_weights({s}, 20.0), ValidationError);

    for (int c = 1; c < kNumIptClasses; ++c) s.labels.set(c, 0, 1);
    ClassWeights w = class_weights({s}, 20.0);
    CHECK(w.w[0] == doctest::Approx(1.0));      // 5 pos, 5 neg
    CHECK(w.w[1] == doctest::Approx(9.0));      // 1 pos, 9 neg
}

TEST_CASE("single-cell loss closed form: ln 2") {
    Prediction p(kNumIptClasses, 1);
    for (auto& v : p.likelihoods) v = 0.5;
    FrameLabelMatrix y(1, kHop, kTargetSampleRate);
    y.set(3, 0, 1);
    ClassWeights w; // all ones
    // every one of the 7 cells contributes ln 2 at p = 0.5
    CHECK(weighted_bce(p, y, w, {}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("perfect prediction loss is tiny") {
    std::mt19937_64 rng(2);
    TrainSample s = make_sample(40, 0.3, rng);
    Prediction p(kNumIptClasses, 40);
    for (int c = 0; c < kNumIptClasses; ++c)
        for (int t = 0; t < 40; ++t) p.at(c, t) = s.labels.at(c, t) ? 1.0 : 0.0;
    ClassWeights w;
    w.w.fill(20.0);
    CHECK(weighted_bce(p, s.labels, w, s.valid) <= 1e-6 * 20.0);
}

TEST_CASE("loss equals the double-loop oracle within 1e-9") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(0.0, 1.0), wd(1.0, 20.0);
    std::bernoulli_distribution bit(0.4), mask_bit(0.8);
    for (int trial = 0; trial < 200; ++trial) {
        const int frames = 1 + static_cast<int>(ud(rng) * 30);
        Prediction p(kNumIptClasses, frames);
        for (auto& v : p.likelihoods) v = ud(rng);
        FrameLabelMatrix y(frames, kHop, kTargetSampleRate);
        for (int c = 0; c < kNumIptClasses; ++c)
            for (int t = 0; t < frames; ++t)
                if (bit(rng)) y.set(c, t, 1);
        ClassWeights w;
        std::vector<double> wvec(kNumIptClasses);
        for (int c = 0; c < kNumIptClasses; ++c) {
            w.w[static_cast<std::size_t>(c)] = wd(rng);
            wvec[static_cast<std::size_t>(c)] = w.w[static_cast<std::size_t>(c)];
        }
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(frames));
        for (auto& v : mask) v = mask_bit(rng) ? 1 : 0;

        std::vector<std::vector<double>> pm(kNumIptClasses, std::vector<double>(frames));
        for (int c = 0; c < kNumIptClasses; ++c)
            for (int t = 0; t < frames; ++t) pm[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] = p.at(c, t);

        const double want = oracles::brute_weighted_bce(pm, y, wvec, mask);
        const double got = weighted_bce(p, y, w, mask);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("NaN likelihood raises a numeric error") {
    Prediction p(kNumIptClasses, 2);
    p.at(4, 1) = std::numeric_limits<double>::quiet_NaN();
    FrameLabelMatrix y(2, kHop, kTargetSampleRate);
    ClassWeights w;
    CHECK_THROWS_AS((void)weighted_bce(p, y, w, {}), NumericError);
}

TEST_CASE("logit-space loss matches the probability-space loss and its gradient") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0.0, 1.5);
    const int frames = 12;
    nn::Tensor logits(2, kNumIptClasses, frames, 1);
    for (auto& v : logits.v) v = nd(rng);

    std::vector<FrameLabelMatrix> labels(2, FrameLabelMatrix(frames, kHop, kTargetSampleRate));
    std::vector<std::vector<std::uint8_t>> masks(2);
    std::bernoulli_distribution bit(0.4);
    for (int b = 0; b < 2; ++b) {
        masks[static_cast<std::size_t>(b)].assign(frames, 1);
        for (int t = 8; t < frames; ++t) masks[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)] = 0;
        for (int c = 0; c < kNumIptClasses; ++c)
            for (int t = 0; t < frames; ++t)
                if (bit(rng)) labels[static_cast<std::size_t>(b)].set(c, t, 1);
    }
    ClassWeights w;
    w.w = {1.0, 2.0, 3.5, 1.0, 20.0, 7.0, 1.5};
    std::vector<LossTargets> targets{{&labels[0], &masks[0]}, {&labels[1], &masks[1]}};

    nn::Tensor grad;
    const double loss = bce_with_logits(logits, targets, w, &grad);

    // Same value through per-item probability-space losses, cell-weighted.
    double total = 0.0;
    std::int64_t cells = 0;
    for (int b = 0; b < 2; ++b) {
        Prediction p(kNumIptClasses, frames);
        for (int c = 0; c < kNumIptClasses; ++c)
            for (int t = 0; t < frames; ++t)
                p.at(c, t) = 1.0 / (1.0 + std::exp(-logits.at(b, c, t, 0)));
        std::int64_t n = 0;
        for (auto v : masks[static_cast<std::size_t>(b)]) n += v ? kNumIptClasses : 0;
        total += weighted_bce(p, labels[static_cast<std::size_t>(b)], w,
                              masks[static_cast<std::size_t>(b)]) * static_cast<double>(n);
        cells += n;
    }
    CHECK(loss == doctest::Approx(total / static_cast<double>(cells)).epsilon(1e-12));

    SUBCASE("gradient matches finite differences") {
        const double h = 1e-6;
        for (int probe = 0; probe < 60; ++probe) {
            std::uniform_int_distribution<std::size_t> pick(0, logits.v.size() - 1);
            const std::size_t i = pick(rng);
            const double keep = logits.v[i];
            logits.v[i] = keep + h;
            const double lp = bce_with_logits(logits, targets, w, nullptr);
            logits.v[i] = keep - h;
            const double lm = bce_with_logits(logits, targets, w, nullptr);
            logits.v[i] = keep;
            const double fd = (lp - lm) / (2 * h);
            CHECK(grad.v[i] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
    SUBCASE("masked cells carry zero gradient and do not affect the loss") {
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < kNumIptClasses; ++c)
                for (int t = 8; t < frames; ++t) CHECK(grad.at(b, c, t, 0) == 0.0);

        nn::Tensor junk = logits;
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < kNumIptClasses; ++c)
                for (int t = 8; t < frames; ++t) junk.at(b, c, t, 0) = 1e6 * (b + c + t);
        nn::Tensor junk_grad;
        CHECK(bce_with_logits(junk, targets, w, &junk_grad) == loss);
        CHECK(junk_grad.v.size() == grad.v.size());
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < kNumIptClasses; ++c)
                for (int t = 0; t < 8; ++t)
                    CHECK(junk_grad.at(b, c, t, 0) == grad.at(b, c, t, 0));
    }
}

TEST_CASE("cosine schedule hits lr0, lr0/2 and exactly 0") {
    CHECK(cosine_lr(0.01, 0, 1000) == doctest::Approx(0.01));
    CHECK(cosine_lr(0.01, 999, 1000) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(cosine_lr(0.01, 999, 1000)) < 1e-9);
    // midpoint of an odd-length run
    CHECK(cosine_lr(0.01, 500, 1001) == doctest::Approx(0.005));
    double prev = cosine_lr(0.01, 0, 100);
    for (int s = 1; s < 100; ++s) {
        const double cur = cosine_lr(0.01, s, 100);
        CHECK(cur <= prev);
        prev = cur;
    }
    CHECK(cosine_lr(0.5, 0, 1) == 0.5);
    CHECK_THROWS_AS((void)cosine_lr(0.01, 0, 0), ValidationError);
}

TEST_CASE("gradient clipping scales to the ceiling") {
    nn::Param a, b;
    a.init_const("a", {2}, 0.0);
    b.init_const("b", {1}, 0.0);
    // norm: sqrt(18^2 + 24^2 + 0^2) = 30
    a.grad = {18.0, 24.0};
    b.grad = {0.0};
    std::vector<nn::Param*> ps{&a, &b};
    const double pre = clip_gradients(ps, 3.0);
    CHECK(pre == doctest::Approx(30.0));
    CHECK(nn::global_grad_norm(ps) == doctest::Approx(3.0));
    CHECK(a.grad[0] == doctest::Approx(1.8));
    CHECK(a.grad[1] == doctest::Approx(2.4));

    // below the ceiling: untouched
    a.grad = {0.3, 0.4};
    b.grad = {0.0};
    const double pre2 = clip_gradients(ps, 3.0);
    CHECK(pre2 == doctest::Approx(0.5));
    CHECK(a.grad[0] == 0.3);
}

TEST_CASE("momentum update follows v = mu v + g") {
    nn::Param p;
    p.init_const("p", {1}, 1.0);
    std::vector<nn::Param*> ps{&p};
    SgdMomentum sgd(ps, 0.9);
    p.grad = {1.0};
    sgd.step(0.1); // v=1, theta = 1 - 0.1
    CHECK(p.value[0] == doctest::Approx(0.9));
    p.grad = {1.0};
    sgd.step(0.1); // v=1.9, theta = 0.9 - 0.19
    CHECK(p.value[0] == doctest::Approx(0.71));
}

TEST_CASE("training is deterministic in the seed") {
    std::mt19937_64 rng(5);
    std::vector<TrainSample> train;
    for (int i = 0; i < 4; ++i) train.push_back(make_sample(16, 0.3, rng));

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 7;
    TrainOptions opts;
    opts.weights = ClassWeights{};

    MultiScaleNet n1(tiny_config(), 3);
    TrainResult r1 = train_model(n1, train, train, cfg, opts);
    MultiScaleNet n2(tiny_config(), 3);
    TrainResult r2 = train_model(n2, train, train, cfg, opts);
    REQUIRE(r1.log.size() == 2);
    REQUIRE(r2.log.size() == 2);
    CHECK(r1.log[0].train_loss == doctest::Approx(r2.log[0].train_loss).epsilon(1e-9));
    CHECK(r1.log[1].val_f1 == doctest::Approx(r2.log[1].val_f1).epsilon(1e-9));

    cfg.seed = 8;
    MultiScaleNet n3(tiny_config(), 3);
    TrainResult r3 = train_model(n3, train, train, cfg, opts);
    CHECK(r3.log[1].train_loss != r1.log[1].train_loss); // different batch order
}

TEST_CASE("repeated steps on one sample drive the loss down") {
    std::mt19937_64 rng(6);
    std::vector<TrainSample> train{make_sample(16, 0.3, rng)};

    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 1;
    cfg.seed = 1;
    TrainOptions opts;
    opts.weights = ClassWeights{};

    const auto dir = std::filesystem::temp_directory_path() / "iptdet_train_run";
    std::filesystem::remove_all(dir);
    opts.run_dir = dir;

    MultiScaleNet net(tiny_config(), 4);
    TrainResult res = train_model(net, train, train, cfg, opts);
    REQUIRE(res.log.size() == 30);
    CHECK(!res.diverged);
    CHECK(res.log.back().train_loss < res.log.front().train_loss);
    CHECK(res.best_epoch >= 0);

    // Run-directory artifacts: header + one line per epoch, loadable checkpoints.
    std::ifstream is(dir / "log.csv");
    REQUIRE(is.good());
    std::string line;
    int lines = 0;
    std::getline(is, line);
    CHECK(line == "epoch,lr,train_loss,val_precision,val_recall,val_f1");
    while (std::getline(is, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 30);

    Checkpoint best = load_checkpoint(dir / "best.ckpt");
    CHECK(best.metrics.at("epoch") == doctest::Approx(static_cast<double>(res.best_epoch)));
    CHECK(best.metrics.at("val_f1") == doctest::Approx(res.best_val_f1));
    // The net keeps the best parameters.
    auto live = net.parameters();
    auto saved = best.net->parameters();
    REQUIRE(live.size() == saved.size());
    for (std::size_t i = 0; i < live.size(); ++i) CHECK(live[i]->value == saved[i]->value);
    CHECK(std::filesystem::exists(dir / "last.ckpt"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("exploding learning rate aborts with finite parameters") {
    std::mt19937_64 rng(7);
    std::vector<TrainSample> train{make_sample(16, 0.3, rng)};
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 1;
    cfg.initial_lr = 1e12;
    TrainOptions opts;
    opts.weights = ClassWeights{};

    MultiScaleNet net(tiny_config(), 5);
    TrainResult res = train_model(net, train, train, cfg, opts);
    CHECK(res.diverged);
    CHECK(res.log.size() < 20);
    for (const auto* p : net.parameters())
        for (double v : p->value) CHECK(std::isfinite(v));
}

TEST_CASE("training rejects empty splits and bad config") {
    std::mt19937_64 rng(8);
    std::vector<TrainSample> one{make_sample(8, 0.3, rng)};
    MultiScaleNet net(tiny_config(), 6);
    TrainConfig cfg;
    CHECK_THROWS_AS((void)train_model(net, {}, one, cfg), ValidationError);
    CHECK_THROWS_AS((void)train_model(net, one, {}, cfg), ValidationError);
    cfg.momentum = 1.0;
    CHECK_THROWS_AS((void)train_model(net, one, one, cfg), ConfigError);
}

TEST_CASE("featurize carries labels and mask through the feature step") {
    const auto dir = std::filesystem::temp_directory_path() / "iptdet_featurize";
    std::filesystem::remove_all(dir);
    const auto ids = write_fixture_corpus(dir, 1, 4.0, 17);
    auto tracks = load_corpus(dir);
    REQUIRE(tracks.size() == 1);

    Waveform w = load_audio(corpus_wav_path(dir, ids[0]));
    const int frames = frame_count(static_cast<std::int64_t>(w.samples.size()), kHop);
    RasterizeResult ras = rasterize_labels(tracks[0].notes, frames, kHop, kTargetSampleRate);
    auto clips = clip_3s(w, ras.labels, ids[0]);
    REQUIRE(clips.size() == 2);

    auto samples = featurize_clips(clips);
    REQUIRE(samples.size() == clips.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].source_id == ids[0]);
        CHECK(samples[i].cqt.n_frames == 259);
        CHECK(samples[i].labels.n_frames == clips[i].labels.n_frames);
        CHECK(samples[i].valid == clips[i].valid);
    }
    std::filesystem::remove_all(dir);
}
