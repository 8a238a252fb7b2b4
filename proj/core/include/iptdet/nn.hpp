#pragma once

// Dense rank-4 tensors and the reverse-mode layers the detection network is
// assembled from. Everything is double precision and single-threaded so runs
// are reproducible; each module caches what its backward pass needs, and
// backward must be called at most once per forward.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace iptdet::nn {

// Shape (batch, channels, time, width), width innermost.
struct Tensor {
    int b = 0, c = 0, t = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int b_, int c_, int t_, int w_)
        : b(b_), c(c_), t(t_), w(w_),
          v(static_cast<std::size_t>(b_) * c_ * t_ * w_, 0.0) {}

    double& at(int bi, int ci, int ti, int wi) {
        return v[((static_cast<std::size_t>(bi) * c + ci) * t + ti) * w + wi];
    }
    double at(int bi, int ci, int ti, int wi) const {
        return v[((static_cast<std::size_t>(bi) * c + ci) * t + ti) * w + wi];
    }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return b == o.b && c == o.c && t == o.t && w == o.w;
    }
};

// Zero-pads or truncates the time axis to length new_t.
Tensor resize_time(const Tensor& x, int new_t);

// Concatenates along the width axis; inputs must agree on (b, c, t).
Tensor concat_width(const std::vector<const Tensor*>& xs);

// Named parameter with its gradient accumulator.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;

    std::size_t size() const { return value.size(); }
    void init(std::string n, std::vector<int> s, double stddev, std::mt19937_64& rng);
    void init_const(std::string n, std::vector<int> s, double fill);
};

class Module {
  public:
    virtual ~Module() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    // Gradient w.r.t. the last forward input; accumulates into param grads.
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void params(std::vector<Param*>& out) {}
    // Persistent non-trainable state (normalization running statistics).
    virtual void state(std::vector<Param*>& out) {}
};

// 2D convolution over (time, width), stride 1, zero padding.
class Conv : public Module {
  public:
    Conv(std::string name, int c_in, int c_out, int kt, int kw, int pad_t, int pad_w,
         std::mt19937_64& rng);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& g) override;
    void params(std::vector<Param*>& out) override;

    Param weight; // (c_out, c_in, kt, kw)
    Param bias;   // (c_out)

  private:
    int c_in_, c_out_, kt_, kw_, pt_, pw_;
    Tensor x_;
};

// Transposed convolution over time: kernel 3, stride 2, output length
// exactly twice the input length. Width passes through.
class ConvTranspose2x : public Module {
  public:
    ConvTranspose2x(std::string name, int c_in, int c_out, std::mt19937_64& rng);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& g) override;
    void params(std::vector<Param*>& out) override;

    Param weight; // (c_in, c_out, 3)
    Param bias;   // (c_out)

  private:
    int c_in_, c_out_;
    Tensor x_;
};

// Max pooling over time, kernel 2 stride 2. Input time length must be even.
class MaxPool2 : public Module {
  public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& g) override;

  private:
    std::vector<std::uint8_t> argmax_; // offset of the winner within each pair
    int b_ = 0, c_ = 0, t_ = 0, w_ = 0;
};

// Per-channel batch normalization over (batch, time, width). Training mode
// normalizes with batch statistics and updates running statistics; inference
// uses the running values.
class BatchNorm : public Module {
  public:
    BatchNorm(std::string name, int channels);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& g) override;
    void params(std::vector<Param*>& out) override;
    void state(std::vector<Param*>& out) override;

    Param gamma, beta;
    Param running_mean, running_var;

  private:
    int c_;
    bool trained_forward_ = false;
    int b_ = 0, t_ = 0, w_ = 0;
    double inv_m_ = 0.0;
    std::vector<double> inv_std_, xhat_;
};

class ReLU : public Module {
  public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& g) override;

  private:
    std::vector<std::uint8_t> mask_;
    int b_ = 0, c_ = 0, t_ = 0, w_ = 0;
};

// Scaled dot-product self-attention over the time axis. x is row-major
// (t, d_m); the projections are (d_m, d_k). Returns (t, d_k).
std::vector<double> self_attention(const std::vector<double>& x, int t, int d_m,
                                   const std::vector<double>& wq, const std::vector<double>& wk,
                                   const std::vector<double>& wv, int d_k);

// Attention with the residual add and batch normalization:
// y = BN(x + attention(x)). Requires the projection width to equal the
// channel count, so the add is well-typed. Input width must be 1.
class AttentionBlock : public Module {
  public:
    AttentionBlock(std::string name, int dim, std::mt19937_64& rng);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& g) override;
    void params(std::vector<Param*>& out) override;
    void state(std::vector<Param*>& out) override;

    Param wq, wk, wv; // (d, d)
    BatchNorm bn;

  private:
    int d_;
    Tensor x_;
    // Per batch item: Q, K, V (t x d) and attention weights (t x t).
    std::vector<std::vector<double>> q_, k_, v_, a_;
};

// Sum of squared parameter gradients -> global L2 norm helpers.
double global_grad_norm(const std::vector<Param*>& params);
void zero_grads(const std::vector<Param*>& params);

} // namespace iptdet::nn
