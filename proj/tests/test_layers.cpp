#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "tribyol/nn/encoders.hpp"
#include "tribyol/nn/network.hpp"
#include "tribyol/rng.hpp"

using namespace tribyol;
using namespace tribyol::nn;
using Catch::Approx;

namespace {

void fill_random(Tensor& t, Rng& rng, double scale = 1.0) {
    for (auto& v : t.values()) v = (float)(scale * rng.normal());
}

// Scalar loss: fixed random projection of the output tensor.
struct ProjLoss {
    std::vector<float> c;
    void init(const Tensor& y, Rng& rng) {
        c.resize((size_t)y.numel());
        for (auto& v : c) v = (float)rng.normal();
    }
    double operator()(const Tensor& y) const {
        double acc = 0.0;
        for (int64_t i = 0; i < y.numel(); ++i) acc += (double)c[i] * y[i];
        return acc;
    }
    Tensor grad(const Tensor& y) const {
        Tensor g(y.shape());
        for (int64_t i = 0; i < y.numel(); ++i) g[i] = c[i];
        return g;
    }
};

// Central finite differences over (a sample of) coordinates of `param`,
// compared to `analytic` in relative L2 over the sampled set.
void check_against_fd(Tensor& param, const Tensor& analytic,
                      const std::function<double()>& loss_fn, Rng& rng,
                      int max_coords = 64, double h = 1e-2, double tol = 2e-2) {
    REQUIRE(analytic.numel() == param.numel());
    std::vector<int64_t> coords;
    if (param.numel() <= max_coords) {
        for (int64_t i = 0; i < param.numel(); ++i) coords.push_back(i);
    } else {
        for (int i = 0; i < max_coords; ++i)
            coords.push_back((int64_t)rng.uniform_int((uint64_t)param.numel()));
    }
    double diff2 = 0.0, ref2 = 0.0;
    for (int64_t i : coords) {
        const float orig = param[(size_t)i];
        param[(size_t)i] = orig + (float)h;
        const double hi = loss_fn();
        param[(size_t)i] = orig - (float)h;
        const double lo = loss_fn();
        param[(size_t)i] = orig;
        const double fd = (hi - lo) / (2.0 * h);
        const double an = analytic[(size_t)i];
        diff2 += (fd - an) * (fd - an);
        ref2 += fd * fd;
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-8);
    INFO("relative gradient error " << rel);
    REQUIRE(rel <= tol);
}

} // namespace

TEST_CASE("conv2d: gradients match finite differences") {
    Rng rng(100);
    Conv2d conv(3, 4, 3, 2, 1);
    conv.init(rng);
    Tensor x({2, 9, 9, 3});
    fill_random(x, rng);

    Conv2d::Cache cache;
    Tensor y;
    conv.forward(x, cache, y);
    REQUIRE(y.shape() == std::vector<int64_t>{2, 5, 5, 4});

    ProjLoss loss;
    loss.init(y, rng);
    auto run = [&]() {
        Conv2d::Cache c;
        Tensor out;
        conv.forward(x, c, out);
        return loss(out);
    };

    conv.gw.zero();
    Tensor gx;
    conv.backward(cache, loss.grad(y), &gx);

    check_against_fd(conv.w, conv.gw, run, rng, 80);
    check_against_fd(x, gx, run, rng, 80);
}

TEST_CASE("conv2d: 1x1 and 7x7 kernels") {
    Rng rng(101);
    for (auto [k, s, p] : {std::tuple{1, 1, 0}, std::tuple{7, 2, 3}}) {
        Conv2d conv(2, 3, k, s, p);
        conv.init(rng);
        Tensor x({1, 8, 8, 2});
        fill_random(x, rng);
        Conv2d::Cache cache;
        Tensor y;
        conv.forward(x, cache, y);
        ProjLoss loss;
        loss.init(y, rng);
        auto run = [&]() {
            Conv2d::Cache c;
            Tensor out;
            conv.forward(x, c, out);
            return loss(out);
        };
        conv.gw.zero();
        Tensor gx;
        conv.backward(cache, loss.grad(y), &gx);
        check_against_fd(conv.w, conv.gw, run, rng, 48);
        check_against_fd(x, gx, run, rng, 48);
    }
}

TEST_CASE("batchnorm: batch-mode gradients") {
    Rng rng(102);
    BatchNorm bn(5);
    Tensor x({6, 5});
    fill_random(x, rng);
    // Non-trivial affine parameters.
    for (auto& v : bn.gamma.values()) v = (float)rng.uniform(0.5, 1.5);
    for (auto& v : bn.beta.values()) v = (float)rng.uniform(-0.5, 0.5);

    BatchNorm::Cache cache;
    Tensor y;
    auto fwd = [&](BatchNorm::Cache& c, Tensor& out) {
        bn.forward(x, c, out, StatsMode::Batch, /*update_running=*/false, 0.01);
    };
    fwd(cache, y);
    ProjLoss loss;
    loss.init(y, rng);
    auto run = [&]() {
        BatchNorm::Cache c;
        Tensor out;
        fwd(c, out);
        return loss(out);
    };

    bn.ggamma.zero();
    bn.gbeta.zero();
    Tensor gx;
    bn.backward(cache, loss.grad(y), &gx);

    check_against_fd(bn.gamma, bn.ggamma, run, rng);
    check_against_fd(bn.beta, bn.gbeta, run, rng);
    check_against_fd(x, gx, run, rng, 30);
}

TEST_CASE("batchnorm: NHWC layout and running statistics") {
    Rng rng(103);
    BatchNorm bn(4);
    Tensor x({2, 3, 3, 4});
    fill_random(x, rng);

    // Manual per-channel batch statistics.
    const int64_t n = x.numel() / 4;
    std::vector<double> mean(4, 0.0), var(4, 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int ch = 0; ch < 4; ++ch) mean[ch] += x[i * 4 + ch];
    for (auto& m : mean) m /= (double)n;
    for (int64_t i = 0; i < n; ++i)
        for (int ch = 0; ch < 4; ++ch) {
            double d = x[i * 4 + ch] - mean[ch];
            var[ch] += d * d;
        }
    for (auto& v : var) v /= (double)n;

    BatchNorm::Cache cache;
    Tensor y;
    bn.forward(x, cache, y, StatsMode::Batch, /*update_running=*/true, 0.1);

    for (int ch = 0; ch < 4; ++ch) {
        REQUIRE(bn.running_mean[ch] == Approx(0.1 * mean[ch]).margin(1e-5));
        const double unbiased = var[ch] * n / (n - 1.0);
        REQUIRE(bn.running_var[ch] == Approx(0.9 * 1.0 + 0.1 * unbiased).margin(1e-5));
    }

    // Output is standardized per channel (gamma=1, beta=0).
    std::vector<double> om(4, 0.0), ov(4, 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int ch = 0; ch < 4; ++ch) om[ch] += y[i * 4 + ch];
    for (auto& m : om) m /= (double)n;
    for (int64_t i = 0; i < n; ++i)
        for (int ch = 0; ch < 4; ++ch) {
            double d = y[i * 4 + ch] - om[ch];
            ov[ch] += d * d;
        }
    for (int ch = 0; ch < 4; ++ch) {
        REQUIRE(om[ch] == Approx(0.0).margin(1e-5));
        REQUIRE(ov[ch] / n == Approx(1.0).margin(1e-3));
    }

    // Running mode: a pure affine map using stored statistics.
    BatchNorm::Cache c2;
    Tensor y2;
    bn.forward(x, c2, y2, StatsMode::Running, false, 0.1);
    const double is0 = 1.0 / std::sqrt((double)bn.running_var[0] + BatchNorm::kEps);
    REQUIRE(y2[0] == Approx((x[0] - bn.running_mean[0]) * is0).margin(1e-5));
}

TEST_CASE("linear: gradients match finite differences") {
    Rng rng(104);
    Linear lin(5, 4);
    lin.init(rng);
    fill_random(lin.b, rng, 0.1);
    Tensor x({3, 5});
    fill_random(x, rng);

    Linear::Cache cache;
    Tensor y;
    lin.forward(x, cache, y);
    ProjLoss loss;
    loss.init(y, rng);
    auto run = [&]() {
        Linear::Cache c;
        Tensor out;
        lin.forward(x, c, out);
        return loss(out);
    };

    lin.gw.zero();
    lin.gb.zero();
    Tensor gx;
    lin.backward(cache, loss.grad(y), &gx);
    check_against_fd(lin.w, lin.gw, run, rng);
    check_against_fd(lin.b, lin.gb, run, rng);
    check_against_fd(x, gx, run, rng);
}

TEST_CASE("global average pool: forward and backward") {
    Rng rng(105);
    GlobalAvgPool gap;
    Tensor x({2, 4, 4, 3});
    fill_random(x, rng);
    GlobalAvgPool::Cache cache;
    Tensor y;
    gap.forward(x, cache, y);
    REQUIRE(y.shape() == std::vector<int64_t>{2, 3});

    double manual = 0.0;
    for (int i = 0; i < 16; ++i) manual += x[(size_t)i * 3];
    REQUIRE(y[0] == Approx(manual / 16.0).margin(1e-5));

    Tensor gy({2, 3});
    fill_random(gy, rng);
    Tensor gx;
    gap.backward(cache, gy, &gx);
    REQUIRE(gx[0] == Approx(gy[0] / 16.0f).margin(1e-7));
}

TEST_CASE("maxpool: forward against naive reference, backward routing") {
    Rng rng(106);
    MaxPool2d pool(3, 2, 1);
    Tensor x({1, 6, 6, 2});
    fill_random(x, rng);
    MaxPool2d::Cache cache;
    Tensor y;
    pool.forward(x, cache, y);
    REQUIRE(y.shape() == std::vector<int64_t>{1, 3, 3, 2});

    for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox)
            for (int ch = 0; ch < 2; ++ch) {
                float best = -1e30f;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        int yy = oy * 2 - 1 + ky, xx = ox * 2 - 1 + kx;
                        if (yy < 0 || yy >= 6 || xx < 0 || xx >= 6) continue;
                        best = std::max(best, x[((size_t)yy * 6 + xx) * 2 + ch]);
                    }
                REQUIRE(y[((size_t)oy * 3 + ox) * 2 + ch] == Approx(best));
            }

    Tensor gy(y.shape());
    gy.fill(1.0f);
    Tensor gx;
    pool.backward(cache, gy, &gx);
    double total = 0.0;
    for (auto v : gx.values()) total += v;
    REQUIRE(total == Approx((double)gy.numel()));
}

TEST_CASE("mlp head: end-to-end gradient through linear/bn/relu/linear") {
    Rng rng(107);
    MlpHead head(6, 8, 5);
    head.init(rng);
    Tensor x({4, 6});
    fill_random(x, rng);

    BnContext ctx{StatsMode::Batch, false, 0.01};
    MlpHead::Cache cache;
    Tensor y;
    head.forward(x, cache, ctx, y);
    REQUIRE(y.shape() == std::vector<int64_t>{4, 5});

    ProjLoss loss;
    loss.init(y, rng);
    auto run = [&]() {
        MlpHead::Cache c;
        Tensor out;
        head.forward(x, c, ctx, out);
        return loss(out);
    };

    head.l1.gw.zero();
    head.l2.gw.zero();
    head.bn.ggamma.zero();
    Tensor gx;
    head.backward(cache, loss.grad(y), &gx);
    check_against_fd(head.l1.w, head.l1.gw, run, rng, 40);
    check_against_fd(head.l2.w, head.l2.gw, run, rng, 40);
    check_against_fd(head.bn.gamma, head.bn.ggamma, run, rng);
    check_against_fd(x, gx, run, rng, 24);
}

namespace {

// Directional derivative check: perturb a whole tensor along a fixed random
// unit direction and compare (L(w+hu) - L(w-hu)) / 2h with <grad, u>. One big
// finite difference has far better float32 signal-to-noise than per-element
// probing through a deep composite. Deep stacks get checked with frozen
// normalization statistics; batch statistics make the loss so curved along
// coordinated weight directions that float32 differences stop being usable.
void check_directional(Tensor& param, const Tensor& analytic,
                       const std::function<double()>& loss_fn, Rng& rng,
                       double h = 2e-3, double tol = 3e-2) {
    std::vector<float> dir((size_t)param.numel());
    double norm = 0.0;
    for (auto& v : dir) {
        v = (float)rng.normal();
        norm += (double)v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : dir) v = (float)(v / norm);
    std::vector<float> orig(param.data(), param.data() + param.numel());
    for (int64_t i = 0; i < param.numel(); ++i) param[(size_t)i] = orig[(size_t)i] + (float)h * dir[(size_t)i];
    const double hi = loss_fn();
    for (int64_t i = 0; i < param.numel(); ++i) param[(size_t)i] = orig[(size_t)i] - (float)h * dir[(size_t)i];
    const double lo = loss_fn();
    for (int64_t i = 0; i < param.numel(); ++i) param[(size_t)i] = orig[(size_t)i];
    const double fd = (hi - lo) / (2.0 * h);
    double an = 0.0;
    for (int64_t i = 0; i < param.numel(); ++i) an += (double)analytic[(size_t)i] * dir[(size_t)i];
    const double rel = std::abs(fd - an) / std::max(std::abs(fd), 1e-6);
    INFO("directional derivative: fd " << fd << " analytic " << an << " rel " << rel);
    REQUIRE(rel <= tol);
}

} // namespace

TEST_CASE("conv block: batch-mode gradients (conv + bn + relu)") {
    Rng rng(110);
    ConvBlock block(3, 4, 3, 2, 1);
    block.init(rng);
    Tensor x({3, 6, 6, 3});
    fill_random(x, rng);

    BnContext ctx{StatsMode::Batch, false, 0.01};
    ConvBlock::Cache cache;
    Tensor y;
    block.forward(x, cache, ctx, y);
    ProjLoss loss;
    loss.init(y, rng);
    auto run = [&]() {
        ConvBlock::Cache c;
        Tensor out;
        block.forward(x, c, ctx, out);
        return loss(out);
    };

    block.conv.gw.zero();
    block.bn.ggamma.zero();
    block.bn.gbeta.zero();
    Tensor gx;
    block.backward(cache, loss.grad(y), &gx);
    check_against_fd(block.conv.w, block.conv.gw, run, rng, 48, 1e-2, 3e-2);
    check_against_fd(block.bn.gamma, block.bn.ggamma, run, rng, 16, 1e-2, 3e-2);
    check_against_fd(x, gx, run, rng, 32, 1e-2, 3e-2);
}

TEST_CASE("toy encoder: weight gradients match directional derivatives") {
    Rng rng(108);
    ToyEncoder enc;
    enc.init(rng);
    Tensor x({2, 16, 16, 3});
    fill_random(x, rng);

    // Populate running statistics with the batch values, then test the deep
    // composite with frozen statistics (see check_directional note).
    BnContext warm{StatsMode::Batch, true, 1.0};
    auto cache = enc.make_cache();
    Tensor feat;
    enc.forward(x, *cache, warm, feat);

    BnContext ctx{StatsMode::Running, false, 0.01};
    enc.forward(x, *cache, ctx, feat);
    REQUIRE(feat.shape() == std::vector<int64_t>{2, 256});

    ProjLoss loss;
    loss.init(feat, rng);
    auto run = [&]() {
        auto c = enc.make_cache();
        Tensor f;
        enc.forward(x, *c, ctx, f);
        return loss(f);
    };

    for (auto& b : enc.blocks) {
        b.conv.gw.zero();
        b.bn.ggamma.zero();
        b.bn.gbeta.zero();
    }
    enc.backward(*cache, loss.grad(feat));

    check_directional(enc.blocks[0].conv.w, enc.blocks[0].conv.gw, run, rng);
    check_directional(enc.blocks[3].conv.w, enc.blocks[3].conv.gw, run, rng);
    check_directional(enc.blocks[1].bn.gamma, enc.blocks[1].bn.ggamma, run, rng);
    check_directional(enc.blocks[2].bn.beta, enc.blocks[2].bn.gbeta, run, rng);

    // Batch-statistics path: coarse per-coordinate sanity bound; float32
    // finite differences through four batch-norms are too noisy for a tight
    // tolerance, but a wiring error would still blow past this.
    BnContext bctx{StatsMode::Batch, false, 0.01};
    auto bcache = enc.make_cache();
    enc.forward(x, *bcache, bctx, feat);
    ProjLoss bloss;
    bloss.init(feat, rng);
    auto brun = [&]() {
        auto c = enc.make_cache();
        Tensor f;
        enc.forward(x, *c, bctx, f);
        return bloss(f);
    };
    for (auto& b : enc.blocks) b.conv.gw.zero();
    enc.backward(*bcache, bloss.grad(feat));
    check_against_fd(enc.blocks[3].conv.w, enc.blocks[3].conv.gw, brun, rng, 24, 1e-2,
                     0.15);
}

TEST_CASE("bottleneck: gradients through both paths") {
    Rng rng(109);
    Bottleneck block(8, 2, 2); // projection shortcut
    block.init(rng);
    Tensor x({2, 6, 6, 8});
    fill_random(x, rng);

    // Warm running stats, then check with them frozen (see directional note).
    BnContext warm{StatsMode::Batch, true, 1.0};
    Bottleneck::Cache wc;
    Tensor wy;
    block.forward(x, wc, warm, wy);

    BnContext ctx{StatsMode::Running, false, 0.01};
    Bottleneck::Cache cache;
    Tensor y;
    block.forward(x, cache, ctx, y);
    REQUIRE(y.shape() == std::vector<int64_t>{2, 3, 3, 8});

    ProjLoss loss;
    loss.init(y, rng);
    auto run = [&]() {
        Bottleneck::Cache c;
        Tensor out;
        block.forward(x, c, ctx, out);
        return loss(out);
    };

    block.c1.gw.zero();
    block.c3.gw.zero();
    block.cs.gw.zero();
    Tensor gx;
    block.backward(cache, loss.grad(y), &gx);
    check_directional(block.c1.w, block.c1.gw, run, rng);
    check_directional(block.c3.w, block.c3.gw, run, rng);
    check_directional(block.cs.w, block.cs.gw, run, rng);
    check_directional(x, gx, run, rng);

    // Identity-skip variant.
    Bottleneck ident(8, 2, 1);
    ident.init(rng);
    Bottleneck::Cache wc2;
    Tensor wy2;
    ident.forward(x, wc2, warm, wy2);
    Bottleneck::Cache c2;
    Tensor y2;
    ident.forward(x, c2, ctx, y2);
    REQUIRE(y2.shape() == x.shape());
    ProjLoss loss2;
    loss2.init(y2, rng);
    auto run2 = [&]() {
        Bottleneck::Cache c;
        Tensor out;
        ident.forward(x, c, ctx, out);
        return loss2(out);
    };
    Tensor gx2;
    ident.c2.gw.zero();
    ident.backward(c2, loss2.grad(y2), &gx2);
    check_directional(ident.c2.w, ident.c2.gw, run2, rng);
    check_directional(x, gx2, run2, rng);
}
