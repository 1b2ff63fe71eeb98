#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "tribyol/augment.hpp"

using namespace tribyol;
using Catch::Approx;

namespace {

Image structured_image(int side, uint64_t seed, int channels = 3) {
    Rng rng(seed);
    Image im(side, side, channels);
    for (auto& v : im.px) v = (float)rng.uniform();
    return im;
}

Image constant_image(int side, float value) {
    Image im(side, side, 3);
    std::fill(im.px.begin(), im.px.end(), value);
    return im;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0;
}

} // namespace

TEST_CASE("sample_transform: determinism under seeding") {
    AugmentPolicy p;
    Rng r1(99), r2(99);
    for (int i = 0; i < 20; ++i) {
        auto a = sample_transform(r1, p, 96);
        auto b = sample_transform(r2, p, 96);
        REQUIRE(a.crop_x == b.crop_x);
        REQUIRE(a.crop_w == b.crop_w);
        REQUIRE(a.flip == b.flip);
        REQUIRE(a.brightness == b.brightness);
        REQUIRE(a.jitter_order == b.jitter_order);
        REQUIRE(a.blur_sigma == b.blur_sigma);
    }
}

TEST_CASE("sample_transform: Monte-Carlo application rates") {
    AugmentPolicy p;
    Rng rng(2024);
    const int n = 10000;
    int flips = 0, jitters = 0, grays = 0, blurs = 0;
    for (int i = 0; i < n; ++i) {
        auto t = sample_transform(rng, p, 96);
        flips += t.flip;
        jitters += t.jitter_applied;
        grays += t.grayscale;
        blurs += t.blur_applied;
    }
    REQUIRE((double)flips / n >= 0.48);
    REQUIRE((double)flips / n <= 0.52);
    REQUIRE((double)jitters / n >= 0.78);
    REQUIRE((double)jitters / n <= 0.82);
    REQUIRE((double)grays / n >= 0.18);
    REQUIRE((double)grays / n <= 0.22);
    REQUIRE(blurs == n); // blur probability defaults to 1
}

TEST_CASE("sample_transform: every parameter inside its declared range") {
    AugmentPolicy p;
    Rng rng(777);
    const int n = 100000;
    for (int src : {32, 96}) {
        const double area = (double)src * src;
        for (int i = 0; i < n / 2; ++i) {
            auto t = sample_transform(rng, p, src);
            const double scale = t.crop_w * t.crop_h / area;
            REQUIRE(scale >= 0.2 - 1e-9);
            REQUIRE(scale <= 1.0 + 1e-9);
            REQUIRE(t.crop_x >= 0.0);
            REQUIRE(t.crop_y >= 0.0);
            REQUIRE(t.crop_x + t.crop_w <= src + 1e-9);
            REQUIRE(t.crop_y + t.crop_h <= src + 1e-9);
            REQUIRE(t.blur_sigma >= 0.1);
            REQUIRE(t.blur_sigma <= 2.0);
            REQUIRE(t.hue >= -0.2);
            REQUIRE(t.hue <= 0.2);
            for (double f : {t.brightness, t.contrast, t.saturation}) {
                REQUIRE(f >= 0.2 - 1e-12);
                REQUIRE(f <= 1.8 + 1e-12);
            }
        }
    }
}

TEST_CASE("apply_transform: shape contract for any source size") {
    AugmentPolicy p;
    Rng rng(5);
    for (int src : {32, 96, 128, 12}) {
        Image im = structured_image(src, 10 + src);
        auto t = sample_transform(rng, p, src);
        Image out = apply_transform(im, t, p);
        REQUIRE(out.h == 96);
        REQUIRE(out.w == 96);
        REQUIRE(out.c == 3);
    }
}

TEST_CASE("apply_transform: pipeline order is fixed") {
    AugmentPolicy p;
    Rng rng(6);
    Image im = structured_image(32, 1);
    auto t = sample_transform(rng, p, 32);
    std::vector<std::string> trace;
    apply_transform(im, t, p, &trace);
    REQUIRE(trace == std::vector<std::string>{"crop_resize", "flip", "jitter",
                                              "grayscale", "blur"});
}

TEST_CASE("apply_transform: grayscale makes all channels equal") {
    AugmentPolicy p;
    Image im = structured_image(48, 2);
    TransformParams t;
    t.crop_x = 0;
    t.crop_y = 0;
    t.crop_w = 48;
    t.crop_h = 48;
    t.grayscale = true;
    t.jitter_applied = false;
    t.blur_applied = true;
    t.blur_sigma = 1.3;
    Image out = apply_transform(im, t, p);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            REQUIRE(out.at(y, x, 0) == Approx(out.at(y, x, 1)).margin(1e-6));
            REQUIRE(out.at(y, x, 0) == Approx(out.at(y, x, 2)).margin(1e-6));
        }
}

TEST_CASE("apply_transform: constant field is preserved without jitter") {
    AugmentPolicy p;
    Image im = constant_image(40, 0.37f);
    TransformParams t;
    t.crop_x = 3.5;
    t.crop_y = 1.25;
    t.crop_w = 20.0;
    t.crop_h = 30.0;
    t.flip = true;
    t.jitter_applied = false;
    t.grayscale = false;
    t.blur_applied = true;
    t.blur_sigma = 1.7;
    Image out = apply_transform(im, t, p);
    for (float v : out.px) REQUIRE(v == Approx(0.37f).margin(1e-5));
}

TEST_CASE("apply_transform: channel count errors") {
    AugmentPolicy p;
    Image bad(8, 8, 2);
    TransformParams t;
    t.crop_w = 8;
    t.crop_h = 8;
    REQUIRE_THROWS_AS(apply_transform(bad, t, p), DimensionError);

    // Grayscale sources are replicated to three channels.
    Image gray = structured_image(32, 9, 1);
    t.crop_w = 32;
    t.crop_h = 32;
    Image out = apply_transform(gray, t, p);
    REQUIRE(out.c == 3);
}

TEST_CASE("make_views: determinism, distinctness and shape") {
    AugmentPolicy p;
    ChannelStats stats;
    std::vector<Image> batch;
    std::vector<int64_t> ids;
    for (int i = 0; i < 8; ++i) {
        batch.push_back(structured_image(i % 2 ? 32 : 96, 100 + i));
        ids.push_back(i);
    }
    ViewStream vs{12345, 0, 0};
    auto a = make_views(batch, ids, vs, p, stats);
    auto b = make_views(batch, ids, vs, p, stats);
    REQUIRE(tensors_equal(a.v1, b.v1));
    REQUIRE(tensors_equal(a.v2, b.v2));
    REQUIRE(tensors_equal(a.v3, b.v3));
    REQUIRE(a.v1.shape() == std::vector<int64_t>{8, 96, 96, 3});
    REQUIRE(a.source_ids == ids);

    // A different iteration gives different draws.
    ViewStream vs2{12345, 0, 1};
    auto c = make_views(batch, ids, vs2, p, stats);
    REQUIRE_FALSE(tensors_equal(a.v1, c.v1));
}

TEST_CASE("make_views: three views differ per sample") {
    AugmentPolicy p;
    ChannelStats stats;
    std::vector<Image> batch;
    std::vector<int64_t> ids;
    for (int i = 0; i < 100; ++i) {
        batch.push_back(structured_image(32, 500 + i));
        ids.push_back(i);
    }
    ViewStream vs{777, 3, 11};
    auto views = make_views(batch, ids, vs, p, stats);
    const int64_t px = 96 * 96 * 3;
    for (int i = 0; i < 100; ++i) {
        bool v12 = false, v13 = false, v23 = false;
        for (int64_t j = 0; j < px; ++j) {
            v12 |= views.v1[i * px + j] != views.v2[i * px + j];
            v13 |= views.v1[i * px + j] != views.v3[i * px + j];
            v23 |= views.v2[i * px + j] != views.v3[i * px + j];
        }
        REQUIRE(v12);
        REQUIRE(v13);
        REQUIRE(v23);
    }
}

TEST_CASE("make_views: standardization applied last") {
    AugmentPolicy p;
    p.jitter_prob = 0.0;
    p.grayscale_prob = 0.0;
    ChannelStats stats;
    stats.mean = {0.25, 0.5, 0.1};
    stats.stddev = {0.5, 0.25, 0.2};
    std::vector<Image> batch{constant_image(32, 0.75f)};
    std::vector<int64_t> ids{0};
    ViewStream vs{1, 0, 0};
    auto views = make_views(batch, ids, vs, p, stats);
    // Constant source + constant-preserving ops: channel c should be exactly
    // (0.75 - mean[c]) / std[c].
    for (int64_t i = 0; i < 96 * 96; ++i) {
        REQUIRE(views.v1[i * 3 + 0] == Approx((0.75 - 0.25) / 0.5).margin(1e-4));
        REQUIRE(views.v1[i * 3 + 1] == Approx((0.75 - 0.5) / 0.25).margin(1e-4));
        REQUIRE(views.v1[i * 3 + 2] == Approx((0.75 - 0.1) / 0.2).margin(1e-4));
    }
}

TEST_CASE("make_views: empty batch is an error") {
    AugmentPolicy p;
    ChannelStats stats;
    std::vector<Image> batch;
    std::vector<int64_t> ids;
    ViewStream vs{1, 0, 0};
    REQUIRE_THROWS_AS(make_views(batch, ids, vs, p, stats), Error);
}
