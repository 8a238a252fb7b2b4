#include "iptdet/model.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "iptdet/errors.hpp"
#include "serialize.hpp"

namespace iptdet {

namespace {

void add_into(nn::Tensor& a, const nn::Tensor& b) {
    if (!a.same_shape(b)) throw ValidationError("tensor add: shape mismatch");
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

// Width slice [w0, w1) as its own tensor.
nn::Tensor slice_width(const nn::Tensor& x, int w0, int w1) {
    nn::Tensor out(x.b, x.c, x.t, w1 - w0);
    for (int bi = 0; bi < x.b; ++bi)
        for (int ci = 0; ci < x.c; ++ci)
            for (int ti = 0; ti < x.t; ++ti)
                for (int wi = w0; wi < w1; ++wi)
                    out.at(bi, ci, ti, wi - w0) = x.at(bi, ci, ti, wi);
    return out;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

void ModelConfig::validate() const {
    if (n_classes != kNumIptClasses)
        throw ConfigError("n_classes: must be " + std::to_string(kNumIptClasses) +
                          " (one per playing technique), got " + std::to_string(n_classes));
    if (branch_count != 3)
        throw ConfigError("branch_count: only 3 resolution branches are supported, got " +
                          std::to_string(branch_count));
    if (downsample_factor != 2)
        throw ConfigError("downsample_factor: only factor-2 rescaling is implemented, got " +
                          std::to_string(downsample_factor));
    if (stage_count < 1)
        throw ConfigError("stage_count: must be at least 1, got " + std::to_string(stage_count));
    if (static_cast<int>(channels_per_branch.size()) != branch_count)
        throw ConfigError("channels_per_branch: need one width per branch (" +
                          std::to_string(branch_count) + "), got " +
                          std::to_string(channels_per_branch.size()));
    for (std::size_t i = 0; i < channels_per_branch.size(); ++i) {
        if (channels_per_branch[i] < 1)
            throw ConfigError("channels_per_branch: widths must be positive");
        if (i > 0 && channels_per_branch[i] <= channels_per_branch[i - 1])
            throw ConfigError(
                "channels_per_branch: widths must increase strictly from finest to coarsest");
    }
    if (blocks_per_stage < 1)
        throw ConfigError("blocks_per_stage: must be at least 1, got " +
                          std::to_string(blocks_per_stage));
    if (attention_blocks < 0 || attention_blocks > stage_count)
        throw ConfigError("attention_blocks: must lie in [0, stage_count], got " +
                          std::to_string(attention_blocks));
    if (attention_dim != 0 && attention_dim != channels_per_branch.back())
        throw ConfigError("attention_dim: the projection width d_k must equal the coarsest "
                          "branch width " +
                          std::to_string(channels_per_branch.back()) +
                          " for the residual add, got " + std::to_string(attention_dim));
    if (head_channels < 1)
        throw ConfigError("head_channels: must be at least 1, got " +
                          std::to_string(head_channels));
}

FrameLabelMatrix binarize(const Prediction& pred, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("binarize: threshold must lie in (0, 1), got " +
                              std::to_string(threshold));
    if (pred.n_classes != kNumIptClasses)
        throw ValidationError("binarize: prediction has " + std::to_string(pred.n_classes) +
                              " classes, expected " + std::to_string(kNumIptClasses));
    FrameLabelMatrix out(pred.n_frames, kHop, kTargetSampleRate);
    for (int c = 0; c < pred.n_classes; ++c)
        for (int t = 0; t < pred.n_frames; ++t)
            if (pred.at(c, t) >= threshold) out.set(c, t, 1);
    return out;
}

// ---------------------------------------------------------------------------
// ResidualBlock
// ---------------------------------------------------------------------------

ResidualBlock::ResidualBlock(const std::string& name, int c_in, int c_out, int in_width,
                             std::mt19937_64& rng)
    : collapse(name + ".collapse", c_in, c_in, 1, in_width, 0, 0, rng),
      conv1(name + ".conv1", c_in, c_out, 3, 1, 1, 0, rng),
      bn1(name + ".bn1", c_out),
      conv2(name + ".conv2", c_out, c_out, 3, 1, 1, 0, rng),
      bn2(name + ".bn2", c_out) {
    if (c_in != c_out) skip.emplace(name + ".skip", c_in, c_out, 1, 1, 0, 0, rng);
}

nn::Tensor ResidualBlock::forward(const nn::Tensor& x, bool train) {
    nn::Tensor z = collapse.forward(x, train);
    nn::Tensor h = conv1.forward(z, train);
    h = bn1.forward(h, train);
    h = relu1.forward(h, train);
    h = conv2.forward(h, train);
    h = bn2.forward(h, train);
    if (skip) {
        add_into(h, skip->forward(z, train));
    } else {
        add_into(h, z);
    }
    return h;
}

nn::Tensor ResidualBlock::backward(const nn::Tensor& g) {
    nn::Tensor gm = bn2.backward(g);
    gm = conv2.backward(gm);
    gm = relu1.backward(gm);
    gm = bn1.backward(gm);
    gm = conv1.backward(gm);
    if (skip) {
        add_into(gm, skip->backward(g));
    } else {
        add_into(gm, g);
    }
    return collapse.backward(gm);
}

void ResidualBlock::params(std::vector<nn::Param*>& out) {
    collapse.params(out);
    conv1.params(out);
    bn1.params(out);
    conv2.params(out);
    bn2.params(out);
    if (skip) skip->params(out);
}

void ResidualBlock::state(std::vector<nn::Param*>& out) {
    bn1.state(out);
    bn2.state(out);
}

nn::Tensor ResidualBlock::collapse_only(const nn::Tensor& x) {
    return collapse.forward(x, false);
}

// ---------------------------------------------------------------------------
// Rescale
// ---------------------------------------------------------------------------

Rescale::Rescale(const std::string& name, int c_from, int c_to, int from_scale, int to_scale,
                 std::mt19937_64& rng) {
    if (to_scale > from_scale) {
        pools_.resize(static_cast<std::size_t>(to_scale - from_scale));
        if (c_from != c_to) proj_.emplace(name + ".proj", c_from, c_to, 1, 1, 0, 0, rng);
    } else if (to_scale < from_scale) {
        const int steps = from_scale - to_scale;
        ups_.reserve(static_cast<std::size_t>(steps));
        ups_.emplace_back(name + ".up0", c_from, c_to, rng);
        for (int i = 1; i < steps; ++i)
            ups_.emplace_back(name + ".up" + std::to_string(i), c_to, c_to, rng);
    } else if (c_from != c_to) {
        proj_.emplace(name + ".proj", c_from, c_to, 1, 1, 0, 0, rng);
    }
}

nn::Tensor Rescale::forward(const nn::Tensor& x, bool train) {
    nn::Tensor y = x;
    for (auto& p : pools_) y = p.forward(y, train);
    if (proj_) y = proj_->forward(y, train);
    for (auto& u : ups_) y = u.forward(y, train);
    return y;
}

nn::Tensor Rescale::backward(const nn::Tensor& g) {
    nn::Tensor gy = g;
    for (auto it = ups_.rbegin(); it != ups_.rend(); ++it) gy = it->backward(gy);
    if (proj_) gy = proj_->backward(gy);
    for (auto it = pools_.rbegin(); it != pools_.rend(); ++it) gy = it->backward(gy);
    return gy;
}

void Rescale::params(std::vector<nn::Param*>& out) {
    if (proj_) proj_->params(out);
    for (auto& u : ups_) u.params(out);
}

// ---------------------------------------------------------------------------
// MultiScaleNet
// ---------------------------------------------------------------------------

MultiScaleNet::MultiScaleNet(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), stem_bn_("stem_bn", kCqtBins) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const int nb = cfg_.branch_count;
    const int ns = cfg_.stage_count;
    const auto& ch = cfg_.channels_per_branch;

    init_pools_.resize(static_cast<std::size_t>(nb - 1));

    blocks_.resize(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) {
        blocks_[s].resize(static_cast<std::size_t>(nb));
        for (int b = 0; b < nb; ++b) {
            for (int i = 0; i < cfg_.blocks_per_stage; ++i) {
                const int c_out = ch[b];
                const int c_in = (s == 0 && i == 0) ? kCqtBins : c_out;
                const int width = (s > 0 && i == 0) ? nb : 1;
                std::string name = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".r" +
                                   std::to_string(i);
                blocks_[s][b].push_back(
                    std::make_unique<ResidualBlock>(name, c_in, c_out, width, rng));
            }
        }
        if (s >= ns - cfg_.attention_blocks) {
            attn_[s] = std::make_unique<nn::AttentionBlock>("s" + std::to_string(s) + ".attn",
                                                            cfg_.resolved_attention_dim(), rng);
        }
    }

    if (ns > 1) {
        rescale_.resize(static_cast<std::size_t>(ns - 1));
        for (int s = 0; s + 1 < ns; ++s) {
            rescale_[s].resize(static_cast<std::size_t>(nb));
            for (int a = 0; a < nb; ++a) {
                rescale_[s][a].resize(static_cast<std::size_t>(nb));
                for (int tb = 0; tb < nb; ++tb) {
                    if (a == tb) continue;
                    std::string name = "s" + std::to_string(s) + ".f" + std::to_string(a) + "t" +
                                       std::to_string(tb);
                    rescale_[s][a][tb] = std::make_unique<Rescale>(name, ch[a], ch[tb], a, tb, rng);
                }
            }
        }
    }

    for (int a = 1; a < nb; ++a) {
        final_rescale_.push_back(std::make_unique<Rescale>("final.f" + std::to_string(a), ch[a],
                                                           ch[0], a, 0, rng));
    }
    final_block_ =
        std::make_unique<ResidualBlock>("final.block", ch[0], cfg_.head_channels, nb, rng);
    head_ = std::make_unique<nn::Conv>("head", cfg_.head_channels, cfg_.n_classes, 3, 1, 1, 0, rng);

    stem_bn_.params(params_);
    stem_bn_.state(state_);
    for (auto& stage : blocks_)
        for (auto& branch : stage)
            for (auto& blk : branch) {
                blk->params(params_);
                blk->state(state_);
            }
    for (auto& [s, a] : attn_) {
        a->params(params_);
        a->state(state_);
    }
    for (auto& stage : rescale_)
        for (auto& row : stage)
            for (auto& r : row)
                if (r) r->params(params_);
    for (auto& r : final_rescale_) r->params(params_);
    final_block_->params(params_);
    final_block_->state(state_);
    head_->params(params_);
}

int MultiScaleNet::branch_time(int padded_t, int branch) const {
    int t = padded_t;
    for (int i = 0; i < branch; ++i) t /= cfg_.downsample_factor;
    return t;
}

nn::Tensor MultiScaleNet::pack(const std::vector<const CqtSpectrogram*>& clips) {
    if (clips.empty()) throw ValidationError("pack: empty batch");
    const int f = clips[0]->n_bins;
    const int t = clips[0]->n_frames;
    if (f != kCqtBins)
        throw ValidationError("pack: expected " + std::to_string(kCqtBins) +
                              " frequency bins, got " + std::to_string(f));
    nn::Tensor x(static_cast<int>(clips.size()), f, t, 1);
    for (std::size_t i = 0; i < clips.size(); ++i) {
        if (clips[i]->n_bins != f || clips[i]->n_frames != t)
            throw ValidationError("pack: clips in one batch must share their shape");
        for (int b = 0; b < f; ++b)
            for (int ti = 0; ti < t; ++ti)
                x.at(static_cast<int>(i), b, ti, 0) = clips[i]->at(b, ti);
    }
    return x;
}

nn::Tensor MultiScaleNet::stem(const nn::Tensor& x, bool train) {
    if (x.c != kCqtBins)
        throw ValidationError("stem: expected " + std::to_string(kCqtBins) +
                              " frequency channels, got " + std::to_string(x.c));
    if (x.w != 1) throw ValidationError("stem: expected width 1 input");
    return stem_bn_.forward(x, train);
}

nn::Tensor MultiScaleNet::forward(const nn::Tensor& x, bool train) {
    if (x.c != kCqtBins || x.w != 1)
        throw ValidationError("forward: expected input of shape (B, " +
                              std::to_string(kCqtBins) + ", T, 1)");
    const int nb = cfg_.branch_count;
    const int ns = cfg_.stage_count;
    int div = 1;
    for (int i = 1; i < nb; ++i) div *= cfg_.downsample_factor;
    last_t_in_ = x.t;
    last_padded_t_ = (x.t + div - 1) / div * div;

    nn::Tensor x0 =
        stem_bn_.forward(x.t == last_padded_t_ ? x : nn::resize_time(x, last_padded_t_), train);

    std::vector<nn::Tensor> cur(static_cast<std::size_t>(nb));
    cur[0] = std::move(x0);
    for (int b = 1; b < nb; ++b) cur[b] = init_pools_[b - 1].forward(cur[b - 1], train);

    for (int s = 0; s < ns; ++s) {
        std::vector<nn::Tensor> y(static_cast<std::size_t>(nb));
        for (int b = 0; b < nb; ++b) {
            nn::Tensor h = std::move(cur[b]);
            for (auto& blk : blocks_[s][b]) h = blk->forward(h, train);
            y[b] = std::move(h);
        }
        if (auto it = attn_.find(s); it != attn_.end())
            y[nb - 1] = it->second->forward(y[nb - 1], train);

        if (s + 1 < ns) {
            std::vector<nn::Tensor> nxt(static_cast<std::size_t>(nb));
            for (int tb = 0; tb < nb; ++tb) {
                std::vector<nn::Tensor> owned(static_cast<std::size_t>(nb));
                std::vector<const nn::Tensor*> parts;
                parts.reserve(static_cast<std::size_t>(nb));
                for (int a = 0; a < nb; ++a) {
                    if (a == tb) {
                        parts.push_back(&y[a]);
                    } else {
                        owned[a] = rescale_[s][a][tb]->forward(y[a], train);
                        parts.push_back(&owned[a]);
                    }
                }
                nxt[tb] = nn::concat_width(parts);
            }
            cur = std::move(nxt);
        } else {
            cur = std::move(y);
        }
    }

    std::vector<nn::Tensor> owned(static_cast<std::size_t>(nb));
    std::vector<const nn::Tensor*> parts;
    parts.push_back(&cur[0]);
    for (int a = 1; a < nb; ++a) {
        owned[a] = final_rescale_[a - 1]->forward(cur[a], train);
        parts.push_back(&owned[a]);
    }
    nn::Tensor fused = nn::concat_width(parts);
    nn::Tensor logits = head_->forward(final_block_->forward(fused, train), train);
    return logits.t == last_t_in_ ? logits : nn::resize_time(logits, last_t_in_);
}

void MultiScaleNet::backward(const nn::Tensor& grad_logits) {
    if (grad_logits.t != last_t_in_)
        throw ValidationError("backward: gradient does not match the last forward");
    const int nb = cfg_.branch_count;
    const int ns = cfg_.stage_count;

    nn::Tensor g = grad_logits.t == last_padded_t_ ? grad_logits
                                                   : nn::resize_time(grad_logits, last_padded_t_);
    g = head_->backward(g);
    g = final_block_->backward(g); // (B, c0, T, branch_count)

    std::vector<nn::Tensor> gy(static_cast<std::size_t>(nb));
    gy[0] = slice_width(g, 0, 1);
    for (int a = 1; a < nb; ++a)
        gy[a] = final_rescale_[a - 1]->backward(slice_width(g, a, a + 1));

    for (int s = ns - 1;; --s) {
        if (auto it = attn_.find(s); it != attn_.end()) gy[nb - 1] = it->second->backward(gy[nb - 1]);

        std::vector<nn::Tensor> gin(static_cast<std::size_t>(nb));
        for (int b = 0; b < nb; ++b) {
            nn::Tensor h = std::move(gy[b]);
            for (auto it = blocks_[s][b].rbegin(); it != blocks_[s][b].rend(); ++it)
                h = (*it)->backward(h);
            gin[b] = std::move(h);
        }

        if (s == 0) {
            // gin[b] is the gradient w.r.t. the b-fold pooled stem output.
            nn::Tensor acc = std::move(gin[nb - 1]);
            for (int b = nb - 1; b >= 1; --b) {
                acc = init_pools_[b - 1].backward(acc);
                add_into(acc, gin[b - 1]);
            }
            stem_bn_.backward(acc);
            return;
        }

        // Undo the fusion built by rescale_[s-1]: each gin[tb] splits into
        // per-source width slices.
        const int batch = gin[0].b;
        std::vector<nn::Tensor> gprev(static_cast<std::size_t>(nb));
        for (int a = 0; a < nb; ++a)
            gprev[a] = nn::Tensor(batch, cfg_.channels_per_branch[a],
                                  branch_time(last_padded_t_, a), 1);
        for (int tb = 0; tb < nb; ++tb) {
            for (int a = 0; a < nb; ++a) {
                nn::Tensor part = slice_width(gin[tb], a, a + 1);
                if (a == tb) {
                    add_into(gprev[a], part);
                } else {
                    add_into(gprev[a], rescale_[s - 1][a][tb]->backward(part));
                }
            }
        }
        gy = std::move(gprev);
    }
}

Prediction MultiScaleNet::predict(const CqtSpectrogram& clip) {
    std::vector<const CqtSpectrogram*> one{&clip};
    nn::Tensor logits = forward(pack(one), false);
    return logits_to_prediction(logits, 0);
}

std::size_t MultiScaleNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params_) n += p->size();
    return n;
}

Prediction logits_to_prediction(const nn::Tensor& logits, int batch_index) {
    if (batch_index < 0 || batch_index >= logits.b)
        throw ValidationError("logits_to_prediction: batch index out of range");
    Prediction p(logits.c, logits.t);
    for (int c = 0; c < logits.c; ++c)
        for (int t = 0; t < logits.t; ++t)
            p.at(c, t) = sigmoid(logits.at(batch_index, c, t, 0));
    return p;
}

// ---------------------------------------------------------------------------
// Config serialization and checkpoints
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_classes", c.n_classes},
                       {"branch_count", c.branch_count},
                       {"downsample_factor", c.downsample_factor},
                       {"stage_count", c.stage_count},
                       {"channels_per_branch", c.channels_per_branch},
                       {"blocks_per_stage", c.blocks_per_stage},
                       {"attention_blocks", c.attention_blocks},
                       {"attention_dim", c.attention_dim},
                       {"head_channels", c.head_channels}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.n_classes = j.value("n_classes", d.n_classes);
    c.branch_count = j.value("branch_count", d.branch_count);
    c.downsample_factor = j.value("downsample_factor", d.downsample_factor);
    c.stage_count = j.value("stage_count", d.stage_count);
    c.channels_per_branch = j.value("channels_per_branch", d.channels_per_branch);
    c.blocks_per_stage = j.value("blocks_per_stage", d.blocks_per_stage);
    c.attention_blocks = j.value("attention_blocks", d.attention_blocks);
    c.attention_dim = j.value("attention_dim", d.attention_dim);
    c.head_channels = j.value("head_channels", d.head_channels);
}

std::string config_hash(const ModelConfig& cfg) {
    nlohmann::json j;
    to_json(j, cfg);
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

constexpr char kCheckpointMagic[6] = {'I', 'P', 'T', 'D', '1', '\n'};

void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
    for (double d : v) write_u64(os, std::bit_cast<std::uint64_t>(d));
}

void read_doubles(std::istream& is, std::vector<double>& v) {
    for (double& d : v) d = std::bit_cast<double>(read_u64(is));
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, MultiScaleNet& net,
                     const std::map<std::string, double>& metrics) {
    nlohmann::json header;
    header["format"] = 1;
    to_json(header["config"], net.config());
    nlohmann::json classes = nlohmann::json::array();
    for (IptClass c : all_ipt_classes()) classes.push_back(std::string(ipt_name(c)));
    header["classes"] = classes;
    header["metrics"] = metrics;

    nlohmann::json tensors = nlohmann::json::array();
    auto describe = [&](const nn::Param* p, const char* kind) {
        tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"kind", kind}});
    };
    for (const auto* p : net.parameters()) describe(p, "param");
    for (const auto* p : net.state()) describe(p, "state");
    header["tensors"] = std::move(tensors);

    const std::string htext = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    write_u64(os, htext.size());
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto* p : net.parameters()) write_doubles(os, p->value);
    for (const auto* p : net.state()) write_doubles(os, p->value);
    if (!os) throw IoError("short write while saving checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[sizeof kCheckpointMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw ParseError(path.string() + ": not a model checkpoint (bad magic)");
    const std::uint64_t hlen = read_u64(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw ParseError(path.string() + ": truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": invalid checkpoint header: " + e.what());
    }

    Checkpoint ck;
    try {
        from_json(header.at("config"), ck.config);
        const auto& classes = header.at("classes");
        const auto order = all_ipt_classes();
        if (classes.size() != order.size())
            throw ConfigError(path.string() + ": checkpoint class list has " +
                              std::to_string(classes.size()) + " entries, expected " +
                              std::to_string(order.size()));
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (classes[i].get<std::string>() != ipt_name(order[i]))
                throw ConfigError(path.string() + ": checkpoint class order differs at index " +
                                  std::to_string(i) + " (" + classes[i].get<std::string>() +
                                  " vs " + std::string(ipt_name(order[i])) + ")");
        }
        if (header.contains("metrics"))
            for (const auto& [k, v] : header.at("metrics").items())
                ck.metrics[k] = v.get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": invalid checkpoint header: " + e.what());
    }

    ck.net = std::make_unique<MultiScaleNet>(ck.config, 0);
    std::map<std::string, nn::Param*> by_name;
    for (auto* p : ck.net->parameters()) by_name[p->name] = p;
    for (auto* p : ck.net->state()) by_name[p->name] = p;

    const auto& tensors = header.at("tensors");
    if (tensors.size() != by_name.size())
        throw ConfigError(path.string() + ": checkpoint stores " + std::to_string(tensors.size()) +
                          " tensors but the configured model has " +
                          std::to_string(by_name.size()));
    for (const auto& entry : tensors) {
        const std::string name = entry.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw ConfigError(path.string() + ": checkpoint tensor " + name +
                              " does not exist in the configured model");
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != it->second->shape)
            throw ConfigError(path.string() + ": shape mismatch for tensor " + name);
        read_doubles(is, it->second->value);
    }
    if (!is) throw ParseError(path.string() + ": truncated checkpoint payload");
    return ck;
}

} // namespace iptdet
