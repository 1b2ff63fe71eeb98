#pragma once

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "tribyol/blas.hpp"
#include "tribyol/rng.hpp"
#include "tribyol/tensor.hpp"

namespace tribyol::nn {

enum class Role { Encoder, Projector, Predictor };
enum class Kind { Learnable, RunningStat };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::Encoder: return "encoder";
        case Role::Projector: return "projector";
        default: return "predictor";
    }
}

inline Role role_from_name(const std::string& s) {
    if (s == "encoder") return Role::Encoder;
    if (s == "projector") return Role::Projector;
    if (s == "predictor") return Role::Predictor;
    throw Error("unknown role: " + s);
}

// A named view into one parameter tensor of a live network.
struct ParamRef {
    std::string name;
    Role role;
    Kind kind;
    Tensor* value = nullptr;
    Tensor* grad = nullptr; // alive for learnables; stays zero on target branches
};

// Which statistics normalization layers use for the current pass.
//  Batch   - statistics of the current minibatch (training behaviour)
//  Running - the stored running statistics (inference behaviour)
enum class StatsMode { Batch, Running };

// ---------------------------------------------------------------------------
// Conv2d, NHWC, no bias (always followed by a norm layer here).
// Weight layout: [kh*kw*cin, cout] matching im2col columns.
// ---------------------------------------------------------------------------
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int cin_, int cout_, int ksize_, int stride_, int pad_)
        : cin(cin_), cout(cout_), ksize(ksize_), stride(stride_), pad(pad_),
          w(Tensor({(int64_t)ksize_ * ksize_ * cin_, cout_})),
          gw(Tensor({(int64_t)ksize_ * ksize_ * cin_, cout_})) {}

    void init(Rng& rng) {
        const double fan_in = (double)ksize * ksize * cin;
        const double stddev = std::sqrt(2.0 / fan_in);
        for (auto& v : w.values()) v = (float)rng.normal(0.0, stddev);
    }

    struct Cache {
        Tensor col;             // [B*oh*ow, kh*kw*cin]
        int b = 0, h = 0, w = 0;
    };

    int out_extent(int in) const { return (in + 2 * pad - ksize) / stride + 1; }

    void forward(const Tensor& x, Cache& c, Tensor& y) const {
        if (x.rank() != 4 || x.dim(3) != cin)
            throw DimensionError("Conv2d: want [B,H,W," + std::to_string(cin) +
                                 "], got " + x.shape_str());
        c.b = (int)x.dim(0);
        c.h = (int)x.dim(1);
        c.w = (int)x.dim(2);
        const int oh = out_extent(c.h), ow = out_extent(c.w);
        const int64_t m = (int64_t)c.b * oh * ow;
        const int64_t k = (int64_t)ksize * ksize * cin;
        if (c.col.numel() != m * k) c.col = Tensor({m, k});
        im2col(x, c.col);
        if (y.shape() != std::vector<int64_t>{c.b, oh, ow, cout})
            y = Tensor({c.b, oh, ow, cout});
        gemm(false, false, (int)m, cout, (int)k, 1.0f, c.col.data(), (int)k, w.data(),
             cout, 0.0f, y.data(), cout);
    }

    void backward(const Cache& c, const Tensor& gy, Tensor* gx) {
        const int oh = out_extent(c.h), ow = out_extent(c.w);
        const int64_t m = (int64_t)c.b * oh * ow;
        const int64_t k = (int64_t)ksize * ksize * cin;
        // dW += col^T * gy
        gemm(true, false, (int)k, cout, (int)m, 1.0f, c.col.data(), (int)k, gy.data(),
             cout, 1.0f, gw.data(), cout);
        if (!gx) return;
        Tensor gcol({m, k});
        gemm(false, true, (int)m, (int)k, cout, 1.0f, gy.data(), cout, w.data(), cout,
             0.0f, gcol.data(), (int)k);
        if (gx->shape() != std::vector<int64_t>{c.b, c.h, c.w, cin})
            *gx = Tensor({c.b, c.h, c.w, cin});
        gx->zero();
        col2im_add(gcol, *gx);
    }

    int cin = 0, cout = 0, ksize = 0, stride = 0, pad = 0;
    Tensor w, gw;

private:
    void im2col(const Tensor& x, Tensor& col) const {
        const int b = (int)x.dim(0), h = (int)x.dim(1), iw = (int)x.dim(2);
        const int oh = out_extent(h), ow = out_extent(iw);
        const size_t row_len = (size_t)ksize * ksize * cin;
        for (int bi = 0; bi < b; ++bi) {
            const float* xb = x.data() + (size_t)bi * h * iw * cin;
            float* colb = col.data() + (size_t)bi * oh * ow * row_len;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float* row = colb + ((size_t)oy * ow + ox) * row_len;
                    const int y0 = oy * stride - pad, x0 = ox * stride - pad;
                    for (int ky = 0; ky < ksize; ++ky) {
                        const int yy = y0 + ky;
                        float* dst = row + (size_t)ky * ksize * cin;
                        if (yy < 0 || yy >= h) {
                            std::memset(dst, 0, sizeof(float) * ksize * cin);
                            continue;
                        }
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int xx = x0 + kx;
                            if (xx < 0 || xx >= iw)
                                std::memset(dst + (size_t)kx * cin, 0, sizeof(float) * cin);
                            else
                                std::memcpy(dst + (size_t)kx * cin,
                                            xb + ((size_t)yy * iw + xx) * cin,
                                            sizeof(float) * cin);
                        }
                    }
                }
            }
        }
    }

    void col2im_add(const Tensor& gcol, Tensor& gx) const {
        const int b = (int)gx.dim(0), h = (int)gx.dim(1), iw = (int)gx.dim(2);
        const int oh = out_extent(h), ow = out_extent(iw);
        const size_t row_len = (size_t)ksize * ksize * cin;
        for (int bi = 0; bi < b; ++bi) {
            float* xb = gx.data() + (size_t)bi * h * iw * cin;
            const float* colb = gcol.data() + (size_t)bi * oh * ow * row_len;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const float* row = colb + ((size_t)oy * ow + ox) * row_len;
                    const int y0 = oy * stride - pad, x0 = ox * stride - pad;
                    for (int ky = 0; ky < ksize; ++ky) {
                        const int yy = y0 + ky;
                        if (yy < 0 || yy >= h) continue;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int xx = x0 + kx;
                            if (xx < 0 || xx >= iw) continue;
                            float* dst = xb + ((size_t)yy * iw + xx) * cin;
                            const float* src = row + ((size_t)ky * ksize + kx) * cin;
                            for (int ci = 0; ci < cin; ++ci) dst[ci] += src[ci];
                        }
                    }
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// BatchNorm over the last dimension: handles NHWC activations (per-channel)
// and [B, F] matrices (per-feature) with one implementation.
// Running statistics are only touched when update_running is set; targets get
// theirs through the EMA update instead.
// ---------------------------------------------------------------------------
class BatchNorm {
public:
    BatchNorm() = default;
    explicit BatchNorm(int channels_)
        : channels(channels_), gamma(Tensor({channels_})), beta(Tensor({channels_})),
          ggamma(Tensor({channels_})), gbeta(Tensor({channels_})),
          running_mean(Tensor({channels_})), running_var(Tensor({channels_})) {
        gamma.fill(1.0f);
        running_var.fill(1.0f);
    }

    struct Cache {
        Tensor xhat;
        std::vector<double> inv_std;
        StatsMode mode = StatsMode::Batch;
    };

    void forward(const Tensor& x, Cache& c, Tensor& y, StatsMode mode,
                 bool update_running, double stat_momentum) {
        if (x.dim((size_t)x.rank() - 1) != channels)
            throw DimensionError("BatchNorm: channel mismatch, got " + x.shape_str());
        const int64_t n = x.numel() / channels;
        if (!y.same_shape(x)) y = Tensor(x.shape());
        if (!c.xhat.same_shape(x)) c.xhat = Tensor(x.shape());
        c.inv_std.assign(channels, 0.0);
        c.mode = mode;

        std::vector<double> mean(channels, 0.0), var(channels, 0.0);
        if (mode == StatsMode::Batch) {
            const float* px = x.data();
            for (int64_t i = 0; i < n; ++i)
                for (int ch = 0; ch < channels; ++ch) mean[ch] += px[i * channels + ch];
            for (int ch = 0; ch < channels; ++ch) mean[ch] /= (double)n;
            for (int64_t i = 0; i < n; ++i)
                for (int ch = 0; ch < channels; ++ch) {
                    double d = px[i * channels + ch] - mean[ch];
                    var[ch] += d * d;
                }
            for (int ch = 0; ch < channels; ++ch) var[ch] /= (double)n;
            if (update_running) {
                const double unbias = n > 1 ? (double)n / (double)(n - 1) : 1.0;
                for (int ch = 0; ch < channels; ++ch) {
                    running_mean[ch] = (float)((1.0 - stat_momentum) * running_mean[ch] +
                                               stat_momentum * mean[ch]);
                    running_var[ch] = (float)((1.0 - stat_momentum) * running_var[ch] +
                                              stat_momentum * var[ch] * unbias);
                }
            }
        } else {
            for (int ch = 0; ch < channels; ++ch) {
                mean[ch] = running_mean[ch];
                var[ch] = running_var[ch];
            }
        }
        for (int ch = 0; ch < channels; ++ch)
            c.inv_std[ch] = 1.0 / std::sqrt(var[ch] + kEps);

        const float* px = x.data();
        float* ph = c.xhat.data();
        float* py = y.data();
        for (int64_t i = 0; i < n; ++i)
            for (int ch = 0; ch < channels; ++ch) {
                const int64_t idx = i * channels + ch;
                const float xh = (float)((px[idx] - mean[ch]) * c.inv_std[ch]);
                ph[idx] = xh;
                py[idx] = gamma[ch] * xh + beta[ch];
            }
    }

    void backward(const Cache& c, const Tensor& gy, Tensor* gx) {
        const int64_t n = gy.numel() / channels;
        std::vector<double> sum_gy(channels, 0.0), sum_gy_xhat(channels, 0.0);
        const float* pgy = gy.data();
        const float* ph = c.xhat.data();
        for (int64_t i = 0; i < n; ++i)
            for (int ch = 0; ch < channels; ++ch) {
                const int64_t idx = i * channels + ch;
                sum_gy[ch] += pgy[idx];
                sum_gy_xhat[ch] += (double)pgy[idx] * ph[idx];
            }
        for (int ch = 0; ch < channels; ++ch) {
            gbeta[ch] += (float)sum_gy[ch];
            ggamma[ch] += (float)sum_gy_xhat[ch];
        }
        if (!gx) return;
        if (!gx->same_shape(gy)) *gx = Tensor(gy.shape());
        float* pgx = gx->data();
        if (c.mode == StatsMode::Batch) {
            for (int64_t i = 0; i < n; ++i)
                for (int ch = 0; ch < channels; ++ch) {
                    const int64_t idx = i * channels + ch;
                    const double t = (double)n * pgy[idx] - sum_gy[ch] -
                                     (double)ph[idx] * sum_gy_xhat[ch];
                    pgx[idx] = (float)(gamma[ch] * c.inv_std[ch] * t / (double)n);
                }
        } else {
            // Frozen statistics: the normalization is a per-channel affine map.
            for (int64_t i = 0; i < n; ++i)
                for (int ch = 0; ch < channels; ++ch) {
                    const int64_t idx = i * channels + ch;
                    pgx[idx] = (float)(gamma[ch] * c.inv_std[ch] * pgy[idx]);
                }
        }
    }

    static constexpr double kEps = 1e-5;

    int channels = 0;
    Tensor gamma, beta, ggamma, gbeta;
    Tensor running_mean, running_var;
};

// ---------------------------------------------------------------------------
// ReLU; cache keeps the output sign pattern.
// ---------------------------------------------------------------------------
class Relu {
public:
    struct Cache {
        Tensor out;
    };

    void forward(const Tensor& x, Cache& c, Tensor& y) const {
        if (!y.same_shape(x)) y = Tensor(x.shape());
        const float* px = x.data();
        float* py = y.data();
        for (int64_t i = 0; i < x.numel(); ++i) py[i] = px[i] > 0.0f ? px[i] : 0.0f;
        c.out = y;
    }

    void backward(const Cache& c, const Tensor& gy, Tensor* gx) const {
        if (!gx) return;
        if (!gx->same_shape(gy)) *gx = Tensor(gy.shape());
        const float* po = c.out.data();
        const float* pgy = gy.data();
        float* pgx = gx->data();
        for (int64_t i = 0; i < gy.numel(); ++i) pgx[i] = po[i] > 0.0f ? pgy[i] : 0.0f;
    }
};

// ---------------------------------------------------------------------------
// Linear: y = x W + b, x is [B, in], W is [in, out].
// ---------------------------------------------------------------------------
class Linear {
public:
    Linear() = default;
    Linear(int in_, int out_, bool bias_ = true)
        : in(in_), out(out_), has_bias(bias_), w(Tensor({in_, out_})),
          gw(Tensor({in_, out_})) {
        if (has_bias) {
            b = Tensor({out_});
            gb = Tensor({out_});
        }
    }

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt((double)in);
        for (auto& v : w.values()) v = (float)rng.uniform(-bound, bound);
        if (has_bias) b.zero();
    }

    struct Cache {
        Tensor x;
    };

    void forward(const Tensor& x, Cache& c, Tensor& y) const {
        if (x.rank() != 2 || x.dim(1) != in)
            throw DimensionError("Linear: want [B," + std::to_string(in) + "], got " +
                                 x.shape_str());
        const int bsz = (int)x.dim(0);
        if (y.shape() != std::vector<int64_t>{bsz, out}) y = Tensor({bsz, out});
        gemm(false, false, bsz, out, in, 1.0f, x.data(), in, w.data(), out, 0.0f,
             y.data(), out);
        if (has_bias) {
            float* py = y.data();
            for (int i = 0; i < bsz; ++i)
                for (int j = 0; j < out; ++j) py[(size_t)i * out + j] += b[j];
        }
        c.x = x;
    }

    void backward(const Cache& c, const Tensor& gy, Tensor* gx) {
        const int bsz = (int)gy.dim(0);
        gemm(true, false, in, out, bsz, 1.0f, c.x.data(), in, gy.data(), out, 1.0f,
             gw.data(), out);
        if (has_bias) {
            const float* pgy = gy.data();
            for (int i = 0; i < bsz; ++i)
                for (int j = 0; j < out; ++j) gb[j] += pgy[(size_t)i * out + j];
        }
        if (!gx) return;
        if (gx->shape() != std::vector<int64_t>{bsz, in}) *gx = Tensor({bsz, in});
        gemm(false, true, bsz, in, out, 1.0f, gy.data(), out, w.data(), out, 0.0f,
             gx->data(), in);
    }

    int in = 0, out = 0;
    bool has_bias = true;
    Tensor w, gw, b, gb;
};

// ---------------------------------------------------------------------------
// Global average pool: [B, H, W, C] -> [B, C].
// ---------------------------------------------------------------------------
class GlobalAvgPool {
public:
    struct Cache {
        int b = 0, h = 0, w = 0, c = 0;
    };

    void forward(const Tensor& x, Cache& cc, Tensor& y) const {
        cc.b = (int)x.dim(0);
        cc.h = (int)x.dim(1);
        cc.w = (int)x.dim(2);
        cc.c = (int)x.dim(3);
        if (y.shape() != std::vector<int64_t>{cc.b, cc.c}) y = Tensor({cc.b, cc.c});
        const int64_t hw = (int64_t)cc.h * cc.w;
        const float* px = x.data();
        for (int bi = 0; bi < cc.b; ++bi) {
            std::vector<double> acc(cc.c, 0.0);
            const float* pb = px + (size_t)bi * hw * cc.c;
            for (int64_t i = 0; i < hw; ++i)
                for (int ch = 0; ch < cc.c; ++ch) acc[ch] += pb[i * cc.c + ch];
            for (int ch = 0; ch < cc.c; ++ch)
                y[(size_t)bi * cc.c + ch] = (float)(acc[ch] / (double)hw);
        }
    }

    void backward(const Cache& cc, const Tensor& gy, Tensor* gx) const {
        if (!gx) return;
        if (gx->shape() != std::vector<int64_t>{cc.b, cc.h, cc.w, cc.c})
            *gx = Tensor({cc.b, cc.h, cc.w, cc.c});
        const int64_t hw = (int64_t)cc.h * cc.w;
        const float scale = 1.0f / (float)hw;
        float* pgx = gx->data();
        const float* pgy = gy.data();
        for (int bi = 0; bi < cc.b; ++bi)
            for (int64_t i = 0; i < hw; ++i)
                for (int ch = 0; ch < cc.c; ++ch)
                    pgx[((size_t)bi * hw + i) * cc.c + ch] =
                        pgy[(size_t)bi * cc.c + ch] * scale;
    }
};

// ---------------------------------------------------------------------------
// MaxPool (ResNet stem), NHWC, argmax cached as flat input offsets.
// ---------------------------------------------------------------------------
class MaxPool2d {
public:
    MaxPool2d() = default;
    MaxPool2d(int ksize_, int stride_, int pad_) : ksize(ksize_), stride(stride_), pad(pad_) {}

    struct Cache {
        std::vector<int64_t> argmax;
        int b = 0, h = 0, w = 0, c = 0;
    };

    int out_extent(int in) const { return (in + 2 * pad - ksize) / stride + 1; }

    void forward(const Tensor& x, Cache& cc, Tensor& y) const {
        cc.b = (int)x.dim(0);
        cc.h = (int)x.dim(1);
        cc.w = (int)x.dim(2);
        cc.c = (int)x.dim(3);
        const int oh = out_extent(cc.h), ow = out_extent(cc.w);
        if (y.shape() != std::vector<int64_t>{cc.b, oh, ow, cc.c})
            y = Tensor({cc.b, oh, ow, cc.c});
        cc.argmax.assign((size_t)cc.b * oh * ow * cc.c, -1);
        const float* px = x.data();
        float* py = y.data();
        for (int bi = 0; bi < cc.b; ++bi)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    for (int ch = 0; ch < cc.c; ++ch) {
                        float best = -std::numeric_limits<float>::infinity();
                        int64_t best_idx = -1;
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int yy = oy * stride - pad + ky;
                            if (yy < 0 || yy >= cc.h) continue;
                            for (int kx = 0; kx < ksize; ++kx) {
                                const int xx = ox * stride - pad + kx;
                                if (xx < 0 || xx >= cc.w) continue;
                                const int64_t idx =
                                    (((int64_t)bi * cc.h + yy) * cc.w + xx) * cc.c + ch;
                                if (px[idx] > best) {
                                    best = px[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        const int64_t oidx =
                            (((int64_t)bi * oh + oy) * ow + ox) * cc.c + ch;
                        py[oidx] = best;
                        cc.argmax[oidx] = best_idx;
                    }
    }

    void backward(const Cache& cc, const Tensor& gy, Tensor* gx) const {
        if (!gx) return;
        if (gx->shape() != std::vector<int64_t>{cc.b, cc.h, cc.w, cc.c})
            *gx = Tensor({cc.b, cc.h, cc.w, cc.c});
        gx->zero();
        const float* pgy = gy.data();
        float* pgx = gx->data();
        for (size_t i = 0; i < cc.argmax.size(); ++i)
            if (cc.argmax[i] >= 0) pgx[cc.argmax[i]] += pgy[i];
    }

    int ksize = 3, stride = 2, pad = 1;
};

} // namespace tribyol::nn
