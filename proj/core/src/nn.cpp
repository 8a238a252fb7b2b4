#include "iptdet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "iptdet/errors.hpp"

namespace iptdet::nn {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// Row-major matmul helpers for the small attention matrices.
// C[m x n] (+)= A[m x k] * B[k x n]
void mm(std::vector<double>& cm, const std::vector<double>& a, const std::vector<double>& bm,
        int m, int k, int n, bool accumulate = false) {
    if (!accumulate) cm.assign(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<std::size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = &bm[static_cast<std::size_t>(p) * n];
            double* crow = &cm[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] = A[m x k] * B^T where B is [n x k]
void mm_nt(std::vector<double>& cm, const std::vector<double>& a, const std::vector<double>& bm,
           int m, int k, int n) {
    cm.assign(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            const double* arow = &a[static_cast<std::size_t>(i) * k];
            const double* brow = &bm[static_cast<std::size_t>(j) * k];
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            cm[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
}

// C[m x n] (+)= A^T * B where A is [k x m], B is [k x n]
void mm_tn(std::vector<double>& cm, const std::vector<double>& a, const std::vector<double>& bm,
           int m, int k, int n, bool accumulate = false) {
    if (!accumulate) cm.assign(static_cast<std::size_t>(m) * n, 0.0);
    for (int p = 0; p < k; ++p) {
        const double* arow = &a[static_cast<std::size_t>(p) * m];
        const double* brow = &bm[static_cast<std::size_t>(p) * n];
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = &cm[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_rows(std::vector<double>& s, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        double* row = &s[static_cast<std::size_t>(i) * cols];
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < cols; ++j) row[j] /= sum;
    }
}

} // namespace

Tensor resize_time(const Tensor& x, int new_t) {
    if (new_t == x.t) return x;
    Tensor out(x.b, x.c, new_t, x.w);
    const int keep = std::min(new_t, x.t);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int ti = 0; ti < keep; ++ti) {
                for (int wi = 0; wi < x.w; ++wi) {
                    out.at(bi, ci, ti, wi) = x.at(bi, ci, ti, wi);
                }
            }
        }
    }
    return out;
}

Tensor concat_width(const std::vector<const Tensor*>& xs) {
    if (xs.empty()) throw ValidationError("concat_width: no inputs");
    int total_w = 0;
    for (const Tensor* x : xs) {
        if (x->b != xs[0]->b || x->c != xs[0]->c || x->t != xs[0]->t) {
            throw ValidationError("concat_width: inputs disagree on (batch, channels, time)");
        }
        total_w += x->w;
    }
    Tensor out(xs[0]->b, xs[0]->c, xs[0]->t, total_w);
    for (int bi = 0; bi < out.b; ++bi) {
        for (int ci = 0; ci < out.c; ++ci) {
            for (int ti = 0; ti < out.t; ++ti) {
                int wo = 0;
                for (const Tensor* x : xs) {
                    for (int wi = 0; wi < x->w; ++wi) {
                        out.at(bi, ci, ti, wo++) = x->at(bi, ci, ti, wi);
                    }
                }
            }
        }
    }
    return out;
}

void Param::init(std::string n, std::vector<int> s, double stddev, std::mt19937_64& rng) {
    name = std::move(n);
    shape = std::move(s);
    std::size_t total = 1;
    for (int d : shape) total *= static_cast<std::size_t>(d);
    value.resize(total);
    grad.assign(total, 0.0);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : value) v = dist(rng);
}

void Param::init_const(std::string n, std::vector<int> s, double fill) {
    name = std::move(n);
    shape = std::move(s);
    std::size_t total = 1;
    for (int d : shape) total *= static_cast<std::size_t>(d);
    value.assign(total, fill);
    grad.assign(total, 0.0);
}

// ---------------------------------------------------------------------------
// Conv
// ---------------------------------------------------------------------------

Conv::Conv(std::string name, int c_in, int c_out, int kt, int kw, int pad_t, int pad_w,
           std::mt19937_64& rng)
    : c_in_(c_in), c_out_(c_out), kt_(kt), kw_(kw), pt_(pad_t), pw_(pad_w) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * kt * kw));
    weight.init(name + ".weight", {c_out, c_in, kt, kw}, stddev, rng);
    bias.init_const(name + ".bias", {c_out}, 0.0);
}

void Conv::params(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

Tensor Conv::forward(const Tensor& x, bool) {
    if (x.c != c_in_) {
        throw ValidationError(weight.name + ": expected " + std::to_string(c_in_) +
                              " input channels, got " + std::to_string(x.c));
    }
    const int out_t = x.t + 2 * pt_ - kt_ + 1;
    const int out_w = x.w + 2 * pw_ - kw_ + 1;
    if (out_t <= 0 || out_w <= 0) {
        throw ValidationError(weight.name + ": input too small for kernel");
    }
    x_ = x;
    Tensor out(x.b, c_out_, out_t, out_w);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int co = 0; co < c_out_; ++co) {
            const double bv = bias.value[static_cast<std::size_t>(co)];
            for (int to = 0; to < out_t; ++to) {
                for (int wo = 0; wo < out_w; ++wo) out.at(bi, co, to, wo) = bv;
            }
            for (int ci = 0; ci < c_in_; ++ci) {
                for (int dt = 0; dt < kt_; ++dt) {
                    const int to_lo = std::max(0, pt_ - dt);
                    const int to_hi = std::min(out_t, x.t + pt_ - dt);
                    for (int dw = 0; dw < kw_; ++dw) {
                        const double wv =
                            weight.value[((static_cast<std::size_t>(co) * c_in_ + ci) * kt_ + dt) *
                                             kw_ +
                                         dw];
                        const int wo_lo = std::max(0, pw_ - dw);
                        const int wo_hi = std::min(out_w, x.w + pw_ - dw);
                        for (int to = to_lo; to < to_hi; ++to) {
                            const int ti = to + dt - pt_;
                            for (int wo = wo_lo; wo < wo_hi; ++wo) {
                                out.at(bi, co, to, wo) += wv * x.at(bi, ci, ti, wo + dw - pw_);
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor Conv::backward(const Tensor& g) {
    const int out_t = g.t;
    const int out_w = g.w;
    Tensor gx(x_.b, c_in_, x_.t, x_.w);
    for (int bi = 0; bi < x_.b; ++bi) {
        for (int co = 0; co < c_out_; ++co) {
            double gb = 0.0;
            for (int to = 0; to < out_t; ++to) {
                for (int wo = 0; wo < out_w; ++wo) gb += g.at(bi, co, to, wo);
            }
            bias.grad[static_cast<std::size_t>(co)] += gb;
            for (int ci = 0; ci < c_in_; ++ci) {
                for (int dt = 0; dt < kt_; ++dt) {
                    const int to_lo = std::max(0, pt_ - dt);
                    const int to_hi = std::min(out_t, x_.t + pt_ - dt);
                    for (int dw = 0; dw < kw_; ++dw) {
                        const std::size_t widx =
                            ((static_cast<std::size_t>(co) * c_in_ + ci) * kt_ + dt) * kw_ + dw;
                        const double wv = weight.value[widx];
                        double gw = 0.0;
                        const int wo_lo = std::max(0, pw_ - dw);
                        const int wo_hi = std::min(out_w, x_.w + pw_ - dw);
                        for (int to = to_lo; to < to_hi; ++to) {
                            const int ti = to + dt - pt_;
                            for (int wo = wo_lo; wo < wo_hi; ++wo) {
                                const double gv = g.at(bi, co, to, wo);
                                const int wi = wo + dw - pw_;
                                gw += gv * x_.at(bi, ci, ti, wi);
                                gx.at(bi, ci, ti, wi) += gv * wv;
                            }
                        }
                        weight.grad[widx] += gw;
                    }
                }
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// ConvTranspose2x
// ---------------------------------------------------------------------------

ConvTranspose2x::ConvTranspose2x(std::string name, int c_in, int c_out, std::mt19937_64& rng)
    : c_in_(c_in), c_out_(c_out) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * 3));
    weight.init(name + ".weight", {c_in, c_out, 3}, stddev, rng);
    bias.init_const(name + ".bias", {c_out}, 0.0);
}

void ConvTranspose2x::params(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

Tensor ConvTranspose2x::forward(const Tensor& x, bool) {
    if (x.c != c_in_) {
        throw ValidationError(weight.name + ": expected " + std::to_string(c_in_) +
                              " input channels, got " + std::to_string(x.c));
    }
    x_ = x;
    const int out_t = 2 * x.t;
    Tensor out(x.b, c_out_, out_t, x.w);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int co = 0; co < c_out_; ++co) {
            const double bv = bias.value[static_cast<std::size_t>(co)];
            for (int to = 0; to < out_t; ++to) {
                for (int wi = 0; wi < x.w; ++wi) out.at(bi, co, to, wi) = bv;
            }
            for (int ci = 0; ci < c_in_; ++ci) {
                for (int k = 0; k < 3; ++k) {
                    const double wv =
                        weight.value[(static_cast<std::size_t>(ci) * c_out_ + co) * 3 + k];
                    for (int ti = 0; ti < x.t; ++ti) {
                        const int to = 2 * ti + k - 1;
                        if (to < 0 || to >= out_t) continue;
                        for (int wi = 0; wi < x.w; ++wi) {
                            out.at(bi, co, to, wi) += wv * x.at(bi, ci, ti, wi);
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor ConvTranspose2x::backward(const Tensor& g) {
    Tensor gx(x_.b, c_in_, x_.t, x_.w);
    const int out_t = g.t;
    for (int bi = 0; bi < x_.b; ++bi) {
        for (int co = 0; co < c_out_; ++co) {
            double gb = 0.0;
            for (int to = 0; to < out_t; ++to) {
                for (int wi = 0; wi < g.w; ++wi) gb += g.at(bi, co, to, wi);
            }
            bias.grad[static_cast<std::size_t>(co)] += gb;
            for (int ci = 0; ci < c_in_; ++ci) {
                for (int k = 0; k < 3; ++k) {
                    const std::size_t widx = (static_cast<std::size_t>(ci) * c_out_ + co) * 3 + k;
                    const double wv = weight.value[widx];
                    double gw = 0.0;
                    for (int ti = 0; ti < x_.t; ++ti) {
                        const int to = 2 * ti + k - 1;
                        if (to < 0 || to >= out_t) continue;
                        for (int wi = 0; wi < x_.w; ++wi) {
                            const double gv = g.at(bi, co, to, wi);
                            gw += gv * x_.at(bi, ci, ti, wi);
                            gx.at(bi, ci, ti, wi) += gv * wv;
                        }
                    }
                    weight.grad[widx] += gw;
                }
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// MaxPool2
// ---------------------------------------------------------------------------

Tensor MaxPool2::forward(const Tensor& x, bool) {
    if (x.t % 2 != 0) {
        throw ValidationError("MaxPool2: time length " + std::to_string(x.t) + " is odd");
    }
    b_ = x.b;
    c_ = x.c;
    t_ = x.t;
    w_ = x.w;
    const int out_t = x.t / 2;
    Tensor out(x.b, x.c, out_t, x.w);
    argmax_.assign(out.size(), 0);
    std::size_t idx = 0;
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int to = 0; to < out_t; ++to) {
                for (int wi = 0; wi < x.w; ++wi) {
                    const double a = x.at(bi, ci, 2 * to, wi);
                    const double b = x.at(bi, ci, 2 * to + 1, wi);
                    // Ties go to the earlier frame, deterministically.
                    const bool second = b > a;
                    out.at(bi, ci, to, wi) = second ? b : a;
                    argmax_[idx++] = second ? 1 : 0;
                }
            }
        }
    }
    return out;
}

Tensor MaxPool2::backward(const Tensor& g) {
    Tensor gx(b_, c_, t_, w_);
    std::size_t idx = 0;
    for (int bi = 0; bi < b_; ++bi) {
        for (int ci = 0; ci < c_; ++ci) {
            for (int to = 0; to < t_ / 2; ++to) {
                for (int wi = 0; wi < w_; ++wi) {
                    gx.at(bi, ci, 2 * to + argmax_[idx], wi) = g.at(bi, ci, to, wi);
                    ++idx;
                }
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, int channels) : c_(channels) {
    gamma.init_const(name + ".gamma", {channels}, 1.0);
    beta.init_const(name + ".beta", {channels}, 0.0);
    running_mean.init_const(name + ".running_mean", {channels}, 0.0);
    running_var.init_const(name + ".running_var", {channels}, 1.0);
}

void BatchNorm::params(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm::state(std::vector<Param*>& out) {
    out.push_back(&running_mean);
    out.push_back(&running_var);
}

Tensor BatchNorm::forward(const Tensor& x, bool train) {
    if (x.c != c_) {
        throw ValidationError(gamma.name + ": expected " + std::to_string(c_) +
                              " channels, got " + std::to_string(x.c));
    }
    b_ = x.b;
    t_ = x.t;
    w_ = x.w;
    trained_forward_ = train;
    const double m = static_cast<double>(x.b) * x.t * x.w;
    inv_m_ = 1.0 / m;
    inv_std_.assign(static_cast<std::size_t>(c_), 0.0);
    xhat_.assign(x.size(), 0.0);
    Tensor out(x.b, x.c, x.t, x.w);

    for (int ci = 0; ci < c_; ++ci) {
        double mean, var;
        if (train) {
            double sum = 0.0, sq = 0.0;
            for (int bi = 0; bi < x.b; ++bi) {
                for (int ti = 0; ti < x.t; ++ti) {
                    for (int wi = 0; wi < x.w; ++wi) {
                        const double v = x.at(bi, ci, ti, wi);
                        sum += v;
                        sq += v * v;
                    }
                }
            }
            mean = sum * inv_m_;
            var = std::max(0.0, sq * inv_m_ - mean * mean);
            const double unbiased = m > 1.5 ? var * m / (m - 1.0) : var;
            running_mean.value[static_cast<std::size_t>(ci)] =
                (1.0 - kBnMomentum) * running_mean.value[static_cast<std::size_t>(ci)] +
                kBnMomentum * mean;
            running_var.value[static_cast<std::size_t>(ci)] =
                (1.0 - kBnMomentum) * running_var.value[static_cast<std::size_t>(ci)] +
                kBnMomentum * unbiased;
        } else {
            mean = running_mean.value[static_cast<std::size_t>(ci)];
            var = running_var.value[static_cast<std::size_t>(ci)];
        }
        const double inv_std = 1.0 / std::sqrt(var + kBnEps);
        inv_std_[static_cast<std::size_t>(ci)] = inv_std;
        const double gv = gamma.value[static_cast<std::size_t>(ci)];
        const double bv = beta.value[static_cast<std::size_t>(ci)];
        for (int bi = 0; bi < x.b; ++bi) {
            for (int ti = 0; ti < x.t; ++ti) {
                for (int wi = 0; wi < x.w; ++wi) {
                    const double xh = (x.at(bi, ci, ti, wi) - mean) * inv_std;
                    xhat_[((static_cast<std::size_t>(bi) * c_ + ci) * x.t + ti) * x.w + wi] = xh;
                    out.at(bi, ci, ti, wi) = gv * xh + bv;
                }
            }
        }
    }
    return out;
}

Tensor BatchNorm::backward(const Tensor& g) {
    Tensor gx(b_, c_, t_, w_);
    for (int ci = 0; ci < c_; ++ci) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int bi = 0; bi < b_; ++bi) {
            for (int ti = 0; ti < t_; ++ti) {
                for (int wi = 0; wi < w_; ++wi) {
                    const double gv = g.at(bi, ci, ti, wi);
                    const double xh =
                        xhat_[((static_cast<std::size_t>(bi) * c_ + ci) * t_ + ti) * w_ + wi];
                    sum_g += gv;
                    sum_gx += gv * xh;
                }
            }
        }
        gamma.grad[static_cast<std::size_t>(ci)] += sum_gx;
        beta.grad[static_cast<std::size_t>(ci)] += sum_g;

        const double gv_scale = gamma.value[static_cast<std::size_t>(ci)] *
                                inv_std_[static_cast<std::size_t>(ci)];
        for (int bi = 0; bi < b_; ++bi) {
            for (int ti = 0; ti < t_; ++ti) {
                for (int wi = 0; wi < w_; ++wi) {
                    const std::size_t idx =
                        ((static_cast<std::size_t>(bi) * c_ + ci) * t_ + ti) * w_ + wi;
                    const double gv = g.at(bi, ci, ti, wi);
                    if (trained_forward_) {
                        // Batch statistics depend on x: subtract the mean
                        // gradient and the projection onto x-hat.
                        gx.at(bi, ci, ti, wi) =
                            gv_scale * (gv - inv_m_ * sum_g - inv_m_ * xhat_[idx] * sum_gx);
                    } else {
                        gx.at(bi, ci, ti, wi) = gv_scale * gv;
                    }
                }
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool) {
    b_ = x.b;
    c_ = x.c;
    t_ = x.t;
    w_ = x.w;
    mask_.assign(x.size(), 0);
    Tensor out(x.b, x.c, x.t, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x.v[i] > 0.0) {
            out.v[i] = x.v[i];
            mask_[i] = 1;
        }
    }
    return out;
}

Tensor ReLU::backward(const Tensor& g) {
    Tensor gx(b_, c_, t_, w_);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (mask_[i]) gx.v[i] = g.v[i];
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Self-attention
// ---------------------------------------------------------------------------

std::vector<double> self_attention(const std::vector<double>& x, int t, int d_m,
                                   const std::vector<double>& wq, const std::vector<double>& wk,
                                   const std::vector<double>& wv, int d_k) {
    std::vector<double> q, k, v, s, o;
    mm(q, x, wq, t, d_m, d_k);
    mm(k, x, wk, t, d_m, d_k);
    mm(v, x, wv, t, d_m, d_k);
    mm_nt(s, q, k, t, d_k, t);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    for (double& sv : s) sv *= scale;
    softmax_rows(s, t, t);
    mm(o, s, v, t, t, d_k);
    return o;
}

AttentionBlock::AttentionBlock(std::string name, int dim, std::mt19937_64& rng)
    : bn(name + ".bn", dim), d_(dim) {
    const double stddev = std::sqrt(1.0 / dim);
    wq.init(name + ".wq", {dim, dim}, stddev, rng);
    wk.init(name + ".wk", {dim, dim}, stddev, rng);
    wv.init(name + ".wv", {dim, dim}, stddev, rng);
}

void AttentionBlock::params(std::vector<Param*>& out) {
    out.push_back(&wq);
    out.push_back(&wk);
    out.push_back(&wv);
    bn.params(out);
}

void AttentionBlock::state(std::vector<Param*>& out) { bn.state(out); }

Tensor AttentionBlock::forward(const Tensor& x, bool train) {
    if (x.c != d_) {
        throw ValidationError(wq.name + ": expected " + std::to_string(d_) + " channels, got " +
                              std::to_string(x.c));
    }
    if (x.w != 1) throw ValidationError(wq.name + ": attention input width must be 1");
    x_ = x;
    q_.assign(static_cast<std::size_t>(x.b), {});
    k_.assign(static_cast<std::size_t>(x.b), {});
    v_.assign(static_cast<std::size_t>(x.b), {});
    a_.assign(static_cast<std::size_t>(x.b), {});

    Tensor sum(x.b, d_, x.t, 1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
    std::vector<double> xm(static_cast<std::size_t>(x.t) * d_);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ti = 0; ti < x.t; ++ti) {
            for (int i = 0; i < d_; ++i) {
                xm[static_cast<std::size_t>(ti) * d_ + i] = x.at(bi, i, ti, 0);
            }
        }
        auto& q = q_[static_cast<std::size_t>(bi)];
        auto& k = k_[static_cast<std::size_t>(bi)];
        auto& v = v_[static_cast<std::size_t>(bi)];
        auto& a = a_[static_cast<std::size_t>(bi)];
        mm(q, xm, wq.value, x.t, d_, d_);
        mm(k, xm, wk.value, x.t, d_, d_);
        mm(v, xm, wv.value, x.t, d_, d_);
        mm_nt(a, q, k, x.t, d_, x.t);
        for (double& sv : a) sv *= scale;
        softmax_rows(a, x.t, x.t);
        std::vector<double> o;
        mm(o, a, v, x.t, x.t, d_);
        for (int ti = 0; ti < x.t; ++ti) {
            for (int i = 0; i < d_; ++i) {
                sum.at(bi, i, ti, 0) =
                    x.at(bi, i, ti, 0) + o[static_cast<std::size_t>(ti) * d_ + i];
            }
        }
    }
    return bn.forward(sum, train);
}

Tensor AttentionBlock::backward(const Tensor& g) {
    const Tensor gsum = bn.backward(g);
    Tensor gx(x_.b, d_, x_.t, 1);
    const int t = x_.t;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_));

    std::vector<double> xm(static_cast<std::size_t>(t) * d_);
    std::vector<double> go(static_cast<std::size_t>(t) * d_);
    std::vector<double> ga, gvm, gs, gq, gk, gxm, tmp;
    for (int bi = 0; bi < x_.b; ++bi) {
        for (int ti = 0; ti < t; ++ti) {
            for (int i = 0; i < d_; ++i) {
                xm[static_cast<std::size_t>(ti) * d_ + i] = x_.at(bi, i, ti, 0);
                go[static_cast<std::size_t>(ti) * d_ + i] = gsum.at(bi, i, ti, 0);
            }
        }
        const auto& q = q_[static_cast<std::size_t>(bi)];
        const auto& k = k_[static_cast<std::size_t>(bi)];
        const auto& v = v_[static_cast<std::size_t>(bi)];
        const auto& a = a_[static_cast<std::size_t>(bi)];

        mm_nt(ga, go, v, t, d_, t);       // dL/dA = gO V^T
        mm_tn(gvm, a, go, t, t, d_);      // dL/dV = A^T gO

        // Softmax rows: gS = A .* (gA - rowsum(gA .* A))
        gs.assign(static_cast<std::size_t>(t) * t, 0.0);
        for (int i = 0; i < t; ++i) {
            double dot = 0.0;
            for (int j = 0; j < t; ++j) {
                const std::size_t ij = static_cast<std::size_t>(i) * t + j;
                dot += ga[ij] * a[ij];
            }
            for (int j = 0; j < t; ++j) {
                const std::size_t ij = static_cast<std::size_t>(i) * t + j;
                gs[ij] = a[ij] * (ga[ij] - dot) * scale;
            }
        }
        mm(gq, gs, k, t, t, d_);      // dL/dQ
        mm_tn(gk, gs, q, t, t, d_);   // dL/dK = gS^T Q

        // dL/dX accumulates through the three projections.
        mm_nt(gxm, gq, wq.value, t, d_, d_);
        mm_nt(tmp, gk, wk.value, t, d_, d_);
        for (std::size_t i = 0; i < gxm.size(); ++i) gxm[i] += tmp[i];
        mm_nt(tmp, gvm, wv.value, t, d_, d_);
        for (std::size_t i = 0; i < gxm.size(); ++i) gxm[i] += tmp[i];

        mm_tn(wq.grad, xm, gq, d_, t, d_, true);
        mm_tn(wk.grad, xm, gk, d_, t, d_, true);
        mm_tn(wv.grad, xm, gvm, d_, t, d_, true);

        for (int ti = 0; ti < t; ++ti) {
            for (int i = 0; i < d_; ++i) {
                gx.at(bi, i, ti, 0) = gsum.at(bi, i, ti, 0) +
                                      gxm[static_cast<std::size_t>(ti) * d_ + i];
            }
        }
    }
    return gx;
}

double global_grad_norm(const std::vector<Param*>& params) {
    double sq = 0.0;
    for (const Param* p : params) {
        for (double g : p->grad) sq += g * g;
    }
    return std::sqrt(sq);
}

void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

} // namespace iptdet::nn
