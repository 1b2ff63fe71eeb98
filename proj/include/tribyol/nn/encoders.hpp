#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tribyol/nn/layers.hpp"

namespace tribyol::nn {

// Per-pass batch-norm behaviour, decided by the owning network.
struct BnContext {
    StatsMode mode = StatsMode::Batch;
    bool update_running = false;
    double stat_momentum = 0.01;
};

// conv -> bn -> relu
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(int cin, int cout, int ksize, int stride, int pad)
        : conv(cin, cout, ksize, stride, pad), bn(cout) {}

    struct Cache {
        Conv2d::Cache conv;
        BatchNorm::Cache bn;
        Relu::Cache relu;
        Tensor pre_bn, pre_relu;
    };

    void init(Rng& rng) { conv.init(rng); }

    void forward(const Tensor& x, Cache& c, const BnContext& ctx, Tensor& y) {
        conv.forward(x, c.conv, c.pre_bn);
        bn.forward(c.pre_bn, c.bn, c.pre_relu, ctx.mode, ctx.update_running,
                   ctx.stat_momentum);
        relu.forward(c.pre_relu, c.relu, y);
    }

    void backward(Cache& c, const Tensor& gy, Tensor* gx) {
        Tensor g1, g2;
        relu.backward(c.relu, gy, &g1);
        bn.backward(c.bn, g1, &g2);
        conv.backward(c.conv, g2, gx);
    }

    void collect(const std::string& prefix, Role role, std::vector<ParamRef>& out) {
        out.push_back({prefix + ".conv.w", role, Kind::Learnable, &conv.w, &conv.gw});
        out.push_back({prefix + ".bn.gamma", role, Kind::Learnable, &bn.gamma, &bn.ggamma});
        out.push_back({prefix + ".bn.beta", role, Kind::Learnable, &bn.beta, &bn.gbeta});
        out.push_back({prefix + ".bn.running_mean", role, Kind::RunningStat,
                       &bn.running_mean, nullptr});
        out.push_back({prefix + ".bn.running_var", role, Kind::RunningStat,
                       &bn.running_var, nullptr});
    }

    Conv2d conv;
    BatchNorm bn;
    Relu relu;
};

class EncoderBase {
public:
    struct Cache {
        virtual ~Cache() = default;
    };

    virtual ~EncoderBase() = default;
    virtual std::unique_ptr<Cache> make_cache() const = 0;
    virtual void init(Rng& rng) = 0;
    // Produces [B, feature_dim]. Gradient w.r.t. the input image is dropped.
    virtual void forward(const Tensor& x, Cache& c, const BnContext& ctx,
                         Tensor& features) = 0;
    virtual void backward(Cache& c, const Tensor& gfeatures) = 0;
    virtual void collect(const std::string& prefix, Role role,
                         std::vector<ParamRef>& out) = 0;
    virtual int64_t feature_dim() const = 0;
    virtual std::string kind() const = 0;
};

// Four stride-2 conv blocks (widths 32/64/128/256) + global average pool.
// Small enough for CPU training, deep enough not to collapse trivially.
class ToyEncoder : public EncoderBase {
public:
    ToyEncoder() {
        const int widths[4] = {32, 64, 128, 256};
        int cin = 3;
        for (int i = 0; i < 4; ++i) {
            blocks[i] = ConvBlock(cin, widths[i], 3, 2, 1);
            cin = widths[i];
        }
    }

    struct CacheImpl : Cache {
        ConvBlock::Cache blocks[4];
        GlobalAvgPool::Cache gap;
        Tensor acts[4];
    };

    std::unique_ptr<Cache> make_cache() const override {
        return std::make_unique<CacheImpl>();
    }

    void init(Rng& rng) override {
        for (auto& b : blocks) b.init(rng);
    }

    void forward(const Tensor& x, Cache& cache, const BnContext& ctx,
                 Tensor& features) override {
        auto& c = static_cast<CacheImpl&>(cache);
        const Tensor* cur = &x;
        for (int i = 0; i < 4; ++i) {
            blocks[i].forward(*cur, c.blocks[i], ctx, c.acts[i]);
            cur = &c.acts[i];
        }
        gap.forward(*cur, c.gap, features);
    }

    void backward(Cache& cache, const Tensor& gfeatures) override {
        auto& c = static_cast<CacheImpl&>(cache);
        Tensor g;
        gap.backward(c.gap, gfeatures, &g);
        for (int i = 3; i >= 1; --i) {
            Tensor gprev;
            blocks[i].backward(c.blocks[i], g, &gprev);
            g = std::move(gprev);
        }
        blocks[0].backward(c.blocks[0], g, nullptr);
    }

    void collect(const std::string& prefix, Role role,
                 std::vector<ParamRef>& out) override {
        for (int i = 0; i < 4; ++i)
            blocks[i].collect(prefix + "b" + std::to_string(i + 1), role, out);
    }

    int64_t feature_dim() const override { return 256; }
    std::string kind() const override { return "toy4"; }

    ConvBlock blocks[4];
    GlobalAvgPool gap;
};

// ---------------------------------------------------------------------------
// ResNet50 (the full-scale backbone): 7x7 stem, max pool, 4 bottleneck
// stages [3,4,6,3], global average pool, 2048 features.
// ---------------------------------------------------------------------------
class Bottleneck {
public:
    Bottleneck() = default;
    Bottleneck(int cin, int mid, int stride_) : stride(stride_), has_proj(stride_ != 1 || cin != 4 * mid) {
        c1 = Conv2d(cin, mid, 1, 1, 0);
        b1 = BatchNorm(mid);
        c2 = Conv2d(mid, mid, 3, stride_, 1);
        b2 = BatchNorm(mid);
        c3 = Conv2d(mid, 4 * mid, 1, 1, 0);
        b3 = BatchNorm(4 * mid);
        if (has_proj) {
            cs = Conv2d(cin, 4 * mid, 1, stride_, 0);
            bs = BatchNorm(4 * mid);
        }
    }

    struct Cache {
        Conv2d::Cache c1, c2, c3, cs;
        BatchNorm::Cache b1, b2, b3, bs;
        Relu::Cache r1, r2, r3;
        Tensor t1, t2, t3, t4, t5, t6, skip_pre, skip, sum;
    };

    void init(Rng& rng) {
        c1.init(rng);
        c2.init(rng);
        c3.init(rng);
        if (has_proj) cs.init(rng);
    }

    void forward(const Tensor& x, Cache& c, const BnContext& ctx, Tensor& y) {
        c1.forward(x, c.c1, c.t1);
        b1.forward(c.t1, c.b1, c.t2, ctx.mode, ctx.update_running, ctx.stat_momentum);
        r1.forward(c.t2, c.r1, c.t3);
        c2.forward(c.t3, c.c2, c.t4);
        b2.forward(c.t4, c.b2, c.t5, ctx.mode, ctx.update_running, ctx.stat_momentum);
        r2.forward(c.t5, c.r2, c.t6);
        c3.forward(c.t6, c.c3, c.sum);
        Tensor main_out;
        b3.forward(c.sum, c.b3, main_out, ctx.mode, ctx.update_running, ctx.stat_momentum);
        if (has_proj) {
            cs.forward(x, c.cs, c.skip_pre);
            bs.forward(c.skip_pre, c.bs, c.skip, ctx.mode, ctx.update_running,
                       ctx.stat_momentum);
        } else {
            c.skip = x;
        }
        check_same_shape(main_out, c.skip, "Bottleneck");
        c.sum = std::move(main_out);
        float* ps = c.sum.data();
        const float* pk = c.skip.data();
        for (int64_t i = 0; i < c.sum.numel(); ++i) ps[i] += pk[i];
        r3.forward(c.sum, c.r3, y);
    }

    // Returns gradient w.r.t. x through both paths.
    void backward(Cache& c, const Tensor& gy, Tensor* gx) {
        Tensor g, g2;
        r3.backward(c.r3, gy, &g);
        // main path
        Tensor gm;
        b3.backward(c.b3, g, &gm);
        Tensor gmain;
        c3.backward(c.c3, gm, &gmain);
        r2.backward(c.r2, gmain, &g2);
        b2.backward(c.b2, g2, &gm);
        c2.backward(c.c2, gm, &gmain);
        r1.backward(c.r1, gmain, &g2);
        b1.backward(c.b1, g2, &gm);
        Tensor gx_main;
        c1.backward(c.c1, gm, gx ? &gx_main : nullptr);
        // skip path
        if (has_proj) {
            Tensor gs;
            bs.backward(c.bs, g, &gs);
            Tensor gx_skip;
            cs.backward(c.cs, gs, gx ? &gx_skip : nullptr);
            if (gx) {
                *gx = std::move(gx_main);
                float* p = gx->data();
                const float* q = gx_skip.data();
                for (int64_t i = 0; i < gx->numel(); ++i) p[i] += q[i];
            }
        } else if (gx) {
            *gx = std::move(gx_main);
            float* p = gx->data();
            const float* q = g.data();
            for (int64_t i = 0; i < gx->numel(); ++i) p[i] += q[i];
        }
    }

    void collect(const std::string& prefix, Role role, std::vector<ParamRef>& out) {
        auto conv_bn = [&](const std::string& tag, Conv2d& cv, BatchNorm& bn) {
            out.push_back({prefix + "." + tag + ".w", role, Kind::Learnable, &cv.w, &cv.gw});
            out.push_back({prefix + "." + tag + ".bn.gamma", role, Kind::Learnable,
                           &bn.gamma, &bn.ggamma});
            out.push_back({prefix + "." + tag + ".bn.beta", role, Kind::Learnable,
                           &bn.beta, &bn.gbeta});
            out.push_back({prefix + "." + tag + ".bn.running_mean", role,
                           Kind::RunningStat, &bn.running_mean, nullptr});
            out.push_back({prefix + "." + tag + ".bn.running_var", role,
                           Kind::RunningStat, &bn.running_var, nullptr});
        };
        conv_bn("c1", c1, b1);
        conv_bn("c2", c2, b2);
        conv_bn("c3", c3, b3);
        if (has_proj) conv_bn("proj", cs, bs);
    }

    int stride = 1;
    bool has_proj = false;
    Conv2d c1, c2, c3, cs;
    BatchNorm b1, b2, b3, bs;
    Relu r1, r2, r3;
};

class ResNet50Encoder : public EncoderBase {
public:
    ResNet50Encoder() : stem(3, 64, 7, 2, 3), pool(3, 2, 1) {
        const int depths[4] = {3, 4, 6, 3};
        const int mids[4] = {64, 128, 256, 512};
        int cin = 64;
        for (int s = 0; s < 4; ++s) {
            const int stride = s == 0 ? 1 : 2;
            for (int i = 0; i < depths[s]; ++i) {
                stages[s].emplace_back(cin, mids[s], i == 0 ? stride : 1);
                cin = 4 * mids[s];
            }
        }
    }

    struct CacheImpl : Cache {
        ConvBlock::Cache stem;
        MaxPool2d::Cache pool;
        std::vector<Bottleneck::Cache> blocks;
        std::vector<Tensor> acts;
        Tensor stem_out, pool_out;
        GlobalAvgPool::Cache gap;
    };

    std::unique_ptr<Cache> make_cache() const override {
        auto c = std::make_unique<CacheImpl>();
        size_t n = 0;
        for (const auto& s : stages) n += s.size();
        c->blocks.resize(n);
        c->acts.resize(n);
        return c;
    }

    void init(Rng& rng) override {
        stem.init(rng);
        for (auto& s : stages)
            for (auto& b : s) b.init(rng);
    }

    void forward(const Tensor& x, Cache& cache, const BnContext& ctx,
                 Tensor& features) override {
        auto& c = static_cast<CacheImpl&>(cache);
        stem.forward(x, c.stem, ctx, c.stem_out);
        pool.forward(c.stem_out, c.pool, c.pool_out);
        const Tensor* cur = &c.pool_out;
        size_t bi = 0;
        for (auto& s : stages)
            for (auto& b : s) {
                b.forward(*cur, c.blocks[bi], ctx, c.acts[bi]);
                cur = &c.acts[bi];
                ++bi;
            }
        gap.forward(*cur, c.gap, features);
    }

    void backward(Cache& cache, const Tensor& gfeatures) override {
        auto& c = static_cast<CacheImpl&>(cache);
        Tensor g;
        gap.backward(c.gap, gfeatures, &g);
        size_t bi = c.blocks.size();
        for (int s = 3; s >= 0; --s)
            for (int i = (int)stages[s].size() - 1; i >= 0; --i) {
                --bi;
                Tensor gprev;
                stages[s][i].backward(c.blocks[bi], g, &gprev);
                g = std::move(gprev);
            }
        Tensor gpool;
        pool.backward(c.pool, g, &gpool);
        stem.backward(c.stem, gpool, nullptr);
    }

    void collect(const std::string& prefix, Role role,
                 std::vector<ParamRef>& out) override {
        stem.collect(prefix + "stem", role, out);
        for (int s = 0; s < 4; ++s)
            for (size_t i = 0; i < stages[s].size(); ++i)
                stages[s][i].collect(prefix + "s" + std::to_string(s + 1) + ".b" +
                                         std::to_string(i),
                                     role, out);
    }

    int64_t feature_dim() const override { return 2048; }
    std::string kind() const override { return "resnet50"; }

    ConvBlock stem;
    MaxPool2d pool;
    std::vector<Bottleneck> stages[4];
    GlobalAvgPool gap;
};

inline std::unique_ptr<EncoderBase> make_encoder(const std::string& kind) {
    if (kind == "toy4") return std::make_unique<ToyEncoder>();
    if (kind == "resnet50") return std::make_unique<ResNet50Encoder>();
    throw Error("unknown encoder kind: " + kind + " (supported: toy4, resnet50)");
}

} // namespace tribyol::nn
