// Network-level checks: configuration validation, shape propagation through
// the multi-scale topology, residual and rescale behavior, sampled gradient
// verification of the assembled net, and checkpoint round-trips.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "iptdet/errors.hpp"
#include "iptdet/model.hpp"

using namespace iptdet;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.channels_per_branch = {2, 3, 4};
    cfg.head_channels = 8;
    return cfg;
}

nn::Tensor random_input(int b, int t, std::mt19937_64& rng) {
    nn::Tensor x(b, kCqtBins, t, 1);
    std::normal_distribution<double> nd;
    for (auto& v : x.v) v = nd(rng);
    return x;
}

CqtSpectrogram random_clip(int t, std::mt19937_64& rng) {
    CqtSpectrogram s;
    s.n_frames = t;
    s.mag.resize(static_cast<std::size_t>(s.n_bins) * t);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (auto& v : s.mag) v = ud(rng);
    return s;
}

} // namespace

TEST_CASE("model config validation names the offending field") {
    ModelConfig ok;
    CHECK_NOTHROW(ok.validate());

    auto message_of = [](ModelConfig c) {
        try {
            c.validate();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };

    ModelConfig c = ok;
    c.n_classes = 5;
    CHECK(message_of(c).find("n_classes") != std::string::npos);

    c = ok;
    c.channels_per_branch = {16, 16, 64};
    CHECK(message_of(c).find("channels_per_branch") != std::string::npos);

    c = ok;
    c.channels_per_branch = {16, 32};
    CHECK(message_of(c).find("channels_per_branch") != std::string::npos);

    c = ok;
    c.attention_blocks = 4;
    CHECK(message_of(c).find("attention_blocks") != std::string::npos);

    c = ok;
    c.blocks_per_stage = 0;
    CHECK(message_of(c).find("blocks_per_stage") != std::string::npos);

    SUBCASE("attention width must match the coarsest branch") {
        ModelConfig bad = ok;
        bad.attention_dim = 32;
        const std::string msg = message_of(bad);
        CHECK(msg.find("attention_dim") != std::string::npos);
        ModelConfig good = ok;
        good.attention_dim = good.channels_per_branch.back();
        CHECK_NOTHROW(good.validate());
    }
}

TEST_CASE("forward produces (B, 7, T, 1) for all suite lengths") {
    MultiScaleNet net(tiny_config(), 7);
    std::mt19937_64 rng(100);
    for (int t : {32, 100, 259, 300}) {
        nn::Tensor x = random_input(2, t, rng);
        nn::Tensor y = net.forward(x, false);
        CHECK(y.b == 2);
        CHECK(y.c == kNumIptClasses);
        CHECK(y.t == t);
        CHECK(y.w == 1);
    }
}

TEST_CASE("pack maps bins to channels without changing values") {
    std::mt19937_64 rng(101);
    CqtSpectrogram clip = random_clip(12, rng);
    nn::Tensor x = MultiScaleNet::pack({&clip});
    CHECK(x.b == 1);
    CHECK(x.c == 88);
    CHECK(x.t == 12);
    CHECK(x.w == 1);
    for (int b = 0; b < 88; ++b)
        for (int t = 0; t < 12; ++t) CHECK(x.at(0, b, t, 0) == clip.at(b, t));

    CqtSpectrogram other = random_clip(13, rng);
    CHECK_THROWS_AS((void)MultiScaleNet::pack({&clip, &other}), ValidationError);
    CqtSpectrogram narrow = random_clip(12, rng);
    narrow.n_bins = 40;
    narrow.mag.resize(40 * 12);
    CHECK_THROWS_AS((void)MultiScaleNet::pack({&narrow}), ValidationError);
    CHECK_THROWS_AS((void)MultiScaleNet::pack({}), ValidationError);
}

TEST_CASE("stem normalizes per channel and validates shape") {
    MultiScaleNet net(tiny_config(), 8);
    std::mt19937_64 rng(102);

    // All-zero input stays all-zero (zero shift at initialization).
    nn::Tensor zeros(1, kCqtBins, 10, 1);
    nn::Tensor y = net.stem(zeros, false);
    for (double v : y.v) CHECK(v == 0.0);

    // At initialization the normalization is the identity up to epsilon.
    nn::Tensor x = random_input(1, 10, rng);
    nn::Tensor id = net.stem(x, false);
    CHECK(id.same_shape(x));
    for (std::size_t i = 0; i < x.v.size(); ++i)
        CHECK(id.v[i] == doctest::Approx(x.v[i]).epsilon(1e-5));

    nn::Tensor bad(1, 40, 10, 1);
    CHECK_THROWS_AS((void)net.stem(bad, false), ValidationError);
}

TEST_CASE("residual block with zeroed main path is the identity on the collapsed input") {
    std::mt19937_64 rng(103);
    ResidualBlock blk("blk", 5, 5, 1, rng);
    std::fill(blk.conv1.weight.value.begin(), blk.conv1.weight.value.end(), 0.0);
    std::fill(blk.conv1.bias.value.begin(), blk.conv1.bias.value.end(), 0.0);
    std::fill(blk.conv2.weight.value.begin(), blk.conv2.weight.value.end(), 0.0);
    std::fill(blk.conv2.bias.value.begin(), blk.conv2.bias.value.end(), 0.0);
    REQUIRE(!blk.skip.has_value());

    nn::Tensor x(2, 5, 6, 1);
    std::normal_distribution<double> nd;
    for (auto& v : x.v) v = nd(rng);

    nn::Tensor out = blk.forward(x, false);
    nn::Tensor collapsed = blk.collapse_only(x);
    REQUIRE(out.same_shape(collapsed));
    for (std::size_t i = 0; i < out.v.size(); ++i) CHECK(out.v[i] == collapsed.v[i]);
}

TEST_CASE("residual block output shape and nonlinearity") {
    std::mt19937_64 rng(104);
    ResidualBlock blk("blk", 88, 16, 1, rng);
    nn::Tensor x(1, 88, 20, 1);
    std::normal_distribution<double> nd;
    for (auto& v : x.v) v = nd(rng);

    nn::Tensor y = blk.forward(x, false);
    CHECK(y.c == 16);
    CHECK(y.t == 20);
    CHECK(y.w == 1);

    // Negative control: the block is not additive (the rectifier bends it),
    // so no linearity may be assumed downstream.
    nn::Tensor x2(1, 88, 20, 1);
    for (auto& v : x2.v) v = nd(rng);
    nn::Tensor y2 = blk.forward(x2, false);
    nn::Tensor xs = x;
    for (std::size_t i = 0; i < xs.v.size(); ++i) xs.v[i] += x2.v[i];
    nn::Tensor ys = blk.forward(xs, false);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i)
        max_dev = std::max(max_dev, std::abs(ys.v[i] - y.v[i] - y2.v[i]));
    CHECK(max_dev > 1e-6);
}

TEST_CASE("rescale moves between branch resolutions") {
    std::mt19937_64 rng(105);
    std::normal_distribution<double> nd;

    SUBCASE("downsample one step keeps channels") {
        Rescale down("d", 16, 16, 0, 1, rng);
        nn::Tensor x(1, 16, 256, 1);
        for (auto& v : x.v) v = nd(rng);
        nn::Tensor y = down.forward(x, false);
        CHECK(y.c == 16);
        CHECK(y.t == 128);
        CHECK(y.w == 1);
    }
    SUBCASE("upsample two steps") {
        Rescale up("u", 64, 64, 2, 0, rng);
        nn::Tensor x(1, 64, 64, 1);
        for (auto& v : x.v) v = nd(rng);
        nn::Tensor y = up.forward(x, false);
        CHECK(y.c == 64);
        CHECK(y.t == 256);
        CHECK(y.w == 1);
    }
    SUBCASE("channel projection across scales") {
        Rescale down("d", 16, 64, 0, 2, rng);
        nn::Tensor x(1, 16, 64, 1);
        for (auto& v : x.v) v = nd(rng);
        nn::Tensor y = down.forward(x, false);
        CHECK(y.c == 64);
        CHECK(y.t == 16);
    }
}

TEST_CASE("inference is deterministic and batch-consistent") {
    MultiScaleNet net(tiny_config(), 9);
    std::mt19937_64 rng(106);
    CqtSpectrogram clip = random_clip(40, rng);

    nn::Tensor both = MultiScaleNet::pack({&clip, &clip});
    nn::Tensor y = net.forward(both, false);
    for (int c = 0; c < y.c; ++c)
        for (int t = 0; t < y.t; ++t) CHECK(y.at(0, c, t, 0) == y.at(1, c, t, 0));

    Prediction p1 = net.predict(clip);
    Prediction p2 = net.predict(clip);
    CHECK(p1.likelihoods == p2.likelihoods);
    for (double v : p1.likelihoods) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0); // sigmoid saturates in floating point at init
    }
    // predict agrees with sigmoid of the eval-mode logits
    nn::Tensor logits = net.forward(MultiScaleNet::pack({&clip}), false);
    Prediction direct = logits_to_prediction(logits);
    for (std::size_t i = 0; i < p1.likelihoods.size(); ++i)
        CHECK(p1.likelihoods[i] == doctest::Approx(direct.likelihoods[i]).epsilon(1e-12));
}

TEST_CASE("zero logits give 0.5 everywhere") {
    nn::Tensor logits(1, kNumIptClasses, 5, 1);
    Prediction p = logits_to_prediction(logits);
    for (double v : p.likelihoods) CHECK(v == 0.5);
}

TEST_CASE("binarize thresholding") {
    Prediction p(kNumIptClasses, 3);
    p.at(0, 0) = 0.5;  // tie
    p.at(1, 1) = 0.49;
    p.at(2, 2) = 0.51;
    FrameLabelMatrix m = binarize(p);
    CHECK(m.at(0, 0) == 1);
    CHECK(m.at(1, 1) == 0);
    CHECK(m.at(2, 2) == 1);

    SUBCASE("all-0.4 prediction is all zero") {
        Prediction q(kNumIptClasses, 4);
        for (auto& v : q.likelihoods) v = 0.4;
        FrameLabelMatrix z = binarize(q);
        for (int c = 0; c < z.n_classes; ++c)
            for (int t = 0; t < z.n_frames; ++t) CHECK(z.at(c, t) == 0);
    }
    SUBCASE("higher threshold never adds positives") {
        std::mt19937_64 rng(107);
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        Prediction q(kNumIptClasses, 50);
        for (auto& v : q.likelihoods) v = ud(rng);
        FrameLabelMatrix lo = binarize(q, 0.1);
        FrameLabelMatrix hi = binarize(q, 0.9);
        int n_lo = 0, n_hi = 0;
        for (int c = 0; c < kNumIptClasses; ++c)
            for (int t = 0; t < 50; ++t) {
                n_lo += lo.at(c, t);
                n_hi += hi.at(c, t);
                if (hi.at(c, t)) CHECK(lo.at(c, t) == 1);
            }
        CHECK(n_hi <= n_lo);
        CHECK(n_lo > 0);
    }
    SUBCASE("threshold must lie in (0,1)") {
        CHECK_THROWS_AS((void)binarize(p, 0.0), ValidationError);
        CHECK_THROWS_AS((void)binarize(p, 1.0), ValidationError);
    }
}

TEST_CASE("sampled end-to-end gradients match finite differences") {
    ModelConfig cfg = tiny_config();
    cfg.stage_count = 2;
    cfg.blocks_per_stage = 1;
    cfg.attention_blocks = 1;
    cfg.head_channels = 4;
    MultiScaleNet net(cfg, 11);

    std::mt19937_64 rng(108);
    const int t_in = 6; // not divisible by 4: exercises pad + truncate
    nn::Tensor x = random_input(1, t_in, rng);

    nn::Tensor probe(1, kNumIptClasses, t_in, 1);
    std::normal_distribution<double> nd;
    for (auto& v : probe.v) v = nd(rng);

    auto loss = [&]() {
        nn::Tensor y = net.forward(x, true);
        double l = 0.0;
        for (std::size_t i = 0; i < y.v.size(); ++i) l += y.v[i] * probe.v[i];
        return l;
    };

    nn::zero_grads(net.parameters());
    net.forward(x, true);
    net.backward(probe);

    const double h = 1e-5;
    auto fd_check = [&](double& slot, double analytic) {
        const double keep = slot;
        slot = keep + h;
        const double lp = loss();
        slot = keep - h;
        const double lm = loss();
        slot = keep;
        const double fd = (lp - lm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
        CHECK(std::abs(fd - analytic) / denom < 1e-4);
    };

    // ~4 random coordinates from every parameter tensor
    std::uniform_int_distribution<std::size_t> pick;
    for (auto* p : net.parameters()) {
        for (int k = 0; k < 4; ++k) {
            const std::size_t j =
                pick(rng, std::uniform_int_distribution<std::size_t>::param_type(0, p->size() - 1));
            fd_check(p->value[j], p->grad[j]);
        }
    }
}

TEST_CASE("checkpoint round-trip preserves every tensor") {
    const auto dir = std::filesystem::temp_directory_path() / "iptdet_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.ckpt";

    ModelConfig cfg = tiny_config();
    MultiScaleNet net(cfg, 21);
    // Touch the running statistics so state differs from initialization.
    std::mt19937_64 rng(109);
    net.forward(random_input(2, 8, rng), true);

    save_checkpoint(path, net, {{"epoch", 3.0}, {"val_f1", 0.5}});
    Checkpoint ck = load_checkpoint(path);

    CHECK(ck.config == cfg);
    CHECK(ck.metrics.at("epoch") == 3.0);
    CHECK(ck.metrics.at("val_f1") == 0.5);

    auto a = net.parameters();
    auto b = ck.net->parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i]->name == b[i]->name);
        CHECK(a[i]->value == b[i]->value); // bit-exact
    }
    auto sa = net.state();
    auto sb = ck.net->state();
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i]->value == sb[i]->value);

    // Loaded net reproduces the saved net's inference exactly.
    CqtSpectrogram clip = random_clip(20, rng);
    CHECK(net.predict(clip).likelihoods == ck.net->predict(clip).likelihoods);

    SUBCASE("bad magic is rejected") {
        const auto bad = dir / "bad.ckpt";
        std::ofstream os(bad, std::ios::binary);
        os << "not a checkpoint";
        os.close();
        CHECK_THROWS_AS((void)load_checkpoint(bad), ParseError);
    }
    SUBCASE("truncated payload is rejected") {
        const auto cut = dir / "cut.ckpt";
        std::ifstream is(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        std::ofstream os(cut, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        os.close();
        CHECK_THROWS_AS((void)load_checkpoint(cut), ParseError);
    }
}

TEST_CASE("config hash separates configs") {
    ModelConfig a, b;
    b.channels_per_branch = {8, 16, 32};
    CHECK(config_hash(a) == config_hash(ModelConfig{}));
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("seeds change initialization, same seed reproduces it") {
    ModelConfig cfg = tiny_config();
    MultiScaleNet n1(cfg, 5), n2(cfg, 5), n3(cfg, 6);
    auto p1 = n1.parameters();
    auto p2 = n2.parameters();
    auto p3 = n3.parameters();
    REQUIRE(p1.size() == p2.size());
    bool all_eq = true, any_diff = false;
    for (std::size_t i = 0; i < p1.size(); ++i) {
        all_eq = all_eq && p1[i]->value == p2[i]->value;
        any_diff = any_diff || p1[i]->value != p3[i]->value;
    }
    CHECK(all_eq);
    CHECK(any_diff);
    CHECK(n1.parameter_count() > 0);
}
