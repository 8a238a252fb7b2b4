#pragma once

// The multi-scale detection network: three time-resolution branches with
// repeated cross-resolution fusion, residual blocks everywhere, self-attention
// on the coarsest branch, and a sigmoid head over 7 classes per frame.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iptdet/dataset.hpp"
#include "iptdet/features.hpp"
#include "iptdet/nn.hpp"

namespace iptdet {

struct ModelConfig {
    int n_classes = kNumIptClasses;
    int branch_count = 3;
    int downsample_factor = 2;
    int stage_count = 3;
    std::vector<int> channels_per_branch = {16, 32, 64};
    int blocks_per_stage = 2;
    int attention_blocks = 2;
    // Attention projection width d_k. 0 means "coarsest branch width", the
    // only value compatible with the residual add; anything else is a
    // configuration error.
    int attention_dim = 0;
    // Channel width of the fused feature handed to the output convolution.
    int head_channels = 88;

    int resolved_attention_dim() const {
        return attention_dim == 0 ? channels_per_branch.back() : attention_dim;
    }

    // Throws ConfigError naming the offending field.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Frame-level class likelihoods in [0, 1], rows in IptClass order.
struct Prediction {
    int n_classes = kNumIptClasses;
    int n_frames = 0;
    std::vector<double> likelihoods; // class-major

    Prediction() = default;
    Prediction(int classes, int frames)
        : n_classes(classes), n_frames(frames),
          likelihoods(static_cast<std::size_t>(classes) * frames, 0.0) {}

    double at(int c, int t) const {
        return likelihoods[static_cast<std::size_t>(c) * n_frames + t];
    }
    double& at(int c, int t) {
        return likelihoods[static_cast<std::size_t>(c) * n_frames + t];
    }
};

// 1 at likelihood >= threshold (ties count as positive).
FrameLabelMatrix binarize(const Prediction& pred, double threshold = 0.5);

// Collapse convolution (1 x input-width) followed by two 3x1 convolutions
// with normalization, plus a skip path from the collapsed input (1x1
// projection when the channel counts differ). No activation after the add,
// so a zeroed main path with matching channels is the identity on the
// collapsed input.
class ResidualBlock : public nn::Module {
  public:
    ResidualBlock(const std::string& name, int c_in, int c_out, int in_width,
                  std::mt19937_64& rng);
    nn::Tensor forward(const nn::Tensor& x, bool train) override;
    nn::Tensor backward(const nn::Tensor& g) override;
    void params(std::vector<nn::Param*>& out) override;
    void state(std::vector<nn::Param*>& out) override;

    nn::Tensor collapse_only(const nn::Tensor& x); // exposed for tests

    nn::Conv collapse;
    nn::Conv conv1;
    nn::BatchNorm bn1;
    nn::ReLU relu1;
    nn::Conv conv2;
    nn::BatchNorm bn2;
    std::optional<nn::Conv> skip;
};

// Moves a feature map between branch scales: max-pooling plus a 1x1 channel
// projection downward, transposed convolutions upward (the first one changes
// the channel count). Identity when from == to.
class Rescale : public nn::Module {
  public:
    Rescale(const std::string& name, int c_from, int c_to, int from_scale, int to_scale,
            std::mt19937_64& rng);
    nn::Tensor forward(const nn::Tensor& x, bool train) override;
    nn::Tensor backward(const nn::Tensor& g) override;
    void params(std::vector<nn::Param*>& out) override;

  private:
    std::vector<nn::MaxPool2> pools_;
    std::optional<nn::Conv> proj_;
    std::vector<nn::ConvTranspose2x> ups_;
};

class MultiScaleNet {
  public:
    MultiScaleNet(ModelConfig cfg, std::uint64_t seed);

    // Stacks CQT clips of equal length into a (B, 88, T, 1) input tensor.
    static nn::Tensor pack(const std::vector<const CqtSpectrogram*>& clips);

    // Input normalization on the packed tensor; the axis permutation from
    // (1, F, T) to (F, T, 1) is realized by pack().
    nn::Tensor stem(const nn::Tensor& x, bool train);

    // Logits of shape (B, n_classes, T, 1) for input (B, 88, T, 1). T is
    // padded internally to a multiple of 4 and restored on output.
    nn::Tensor forward(const nn::Tensor& x, bool train);

    // Backpropagates grad_logits (same shape forward returned) into the
    // parameter gradients. Must follow a training-mode forward.
    void backward(const nn::Tensor& grad_logits);

    // Inference: sigmoid likelihoods for one clip.
    Prediction predict(const CqtSpectrogram& clip);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<nn::Param*>& parameters() { return params_; }
    const std::vector<nn::Param*>& state() { return state_; }
    std::size_t parameter_count() const;

  private:
    ModelConfig cfg_;
    nn::BatchNorm stem_bn_;
    std::vector<nn::MaxPool2> init_pools_;
    // blocks_[stage][branch][i]
    std::vector<std::vector<std::vector<std::unique_ptr<ResidualBlock>>>> blocks_;
    std::map<int, std::unique_ptr<nn::AttentionBlock>> attn_;
    // rescale_[stage][from][to], nullptr when from == to
    std::vector<std::vector<std::vector<std::unique_ptr<Rescale>>>> rescale_;
    std::vector<std::unique_ptr<Rescale>> final_rescale_; // branch 1.. to scale 0
    std::unique_ptr<ResidualBlock> final_block_;
    std::unique_ptr<nn::Conv> head_;

    std::vector<nn::Param*> params_;
    std::vector<nn::Param*> state_;
    int last_t_in_ = 0;
    int last_padded_t_ = 0;

    int branch_time(int padded_t, int branch) const;
};

// Sigmoid over logits.
Prediction logits_to_prediction(const nn::Tensor& logits, int batch_index = 0);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    ModelConfig config;
    std::unique_ptr<MultiScaleNet> net;
    std::map<std::string, double> metrics; // e.g. epoch, best validation F1
};

// Binary container: magic, JSON header (config, class order, tensor table,
// metrics), then little-endian doubles for parameters and normalization
// state.
void save_checkpoint(const std::filesystem::path& path, MultiScaleNet& net,
                     const std::map<std::string, double>& metrics = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Stable hash of a model configuration, for checkpoint/config mismatch
// reporting.
std::string config_hash(const ModelConfig& cfg);

} // namespace iptdet
