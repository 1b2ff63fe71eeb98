#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tribyol/image.hpp"
#include "tribyol/rng.hpp"
#include "tribyol/tensor.hpp"

namespace tribyol {

// The stochastic view pipeline: crop -> resize -> flip -> color jitter ->
// grayscale -> blur, then per-dataset channel standardization on the batch.

struct AugmentPolicy {
    double crop_scale_min = 0.2;
    double crop_scale_max = 1.0;
    double crop_ratio_min = 3.0 / 4.0;
    double crop_ratio_max = 4.0 / 3.0;
    double flip_prob = 0.5;
    double jitter_prob = 0.8;
    double jitter_brightness = 0.8;
    double jitter_contrast = 0.8;
    double jitter_saturation = 0.8;
    double jitter_hue = 0.2;
    double grayscale_prob = 0.2;
    double blur_prob = 1.0;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;
    int blur_kernel = 9;
    int out_size = 96;
    std::string interpolation = "bicubic"; // recorded for auditability
};

// One fully reified augmentation draw. Every random choice lives here so a
// view can be replayed bit-identically.
struct TransformParams {
    double crop_x = 0.0, crop_y = 0.0, crop_w = 0.0, crop_h = 0.0; // source pixels
    bool flip = false;
    bool jitter_applied = false;
    double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue = 0.0;
    std::array<int, 4> jitter_order = {0, 1, 2, 3}; // 0=bright 1=contrast 2=sat 3=hue
    bool grayscale = false;
    bool blur_applied = true;
    double blur_sigma = 1.0;
};

// Sample crop geometry for a (h, w) source. Ten attempts at the requested
// scale/ratio, then a deterministic centered square fallback.
inline void sample_crop(Rng& rng, const AugmentPolicy& p, int src_h, int src_w,
                        TransformParams& t) {
    const double area = (double)src_h * src_w;
    const double min_side = 9.0; // blur kernel needs some extent to see
    for (int attempt = 0; attempt < 10; ++attempt) {
        double target = rng.uniform(p.crop_scale_min, p.crop_scale_max) * area;
        double log_ratio =
            rng.uniform(std::log(p.crop_ratio_min), std::log(p.crop_ratio_max));
        double ratio = std::exp(log_ratio);
        double w = std::sqrt(target * ratio);
        double h = std::sqrt(target / ratio);
        if (w <= src_w && h <= src_h && w >= min_side && h >= min_side) {
            t.crop_w = w;
            t.crop_h = h;
            t.crop_x = rng.uniform(0.0, src_w - w);
            t.crop_y = rng.uniform(0.0, src_h - h);
            return;
        }
    }
    double side = std::sqrt(rng.uniform(p.crop_scale_min, p.crop_scale_max) * area);
    side = std::clamp(side, std::min(min_side, (double)std::min(src_h, src_w)),
                      (double)std::min(src_h, src_w));
    t.crop_w = side;
    t.crop_h = side;
    t.crop_x = (src_w - side) / 2.0;
    t.crop_y = (src_h - side) / 2.0;
}

inline TransformParams sample_transform(Rng& rng, const AugmentPolicy& p, int src_h,
                                        int src_w) {
    TransformParams t;
    sample_crop(rng, p, src_h, src_w, t);
    t.flip = rng.bernoulli(p.flip_prob);
    t.jitter_applied = rng.bernoulli(p.jitter_prob);
    // Factors are drawn even when jitter is skipped, so the params struct is
    // always fully populated and the draw sequence has a fixed shape.
    t.brightness = rng.uniform(std::max(0.0, 1.0 - p.jitter_brightness),
                               1.0 + p.jitter_brightness);
    t.contrast =
        rng.uniform(std::max(0.0, 1.0 - p.jitter_contrast), 1.0 + p.jitter_contrast);
    t.saturation =
        rng.uniform(std::max(0.0, 1.0 - p.jitter_saturation), 1.0 + p.jitter_saturation);
    t.hue = rng.uniform(-p.jitter_hue, p.jitter_hue);
    std::vector<int> order = {0, 1, 2, 3};
    rng.shuffle(order);
    std::copy(order.begin(), order.end(), t.jitter_order.begin());
    t.grayscale = rng.bernoulli(p.grayscale_prob);
    t.blur_applied = rng.bernoulli(p.blur_prob);
    t.blur_sigma = rng.uniform(p.blur_sigma_min, p.blur_sigma_max);
    return t;
}

// Default sampling uses square sources (all supported datasets are square);
// this overload keeps the common call sites short.
inline TransformParams sample_transform(Rng& rng, const AugmentPolicy& p, int src_side) {
    return sample_transform(rng, p, src_side, src_side);
}

inline Image apply_transform(const Image& src, const TransformParams& t,
                             const AugmentPolicy& p,
                             std::vector<std::string>* trace = nullptr) {
    if (src.c != 1 && src.c != 3)
        throw DimensionError("apply_transform: want 1 or 3 channels, got " +
                             std::to_string(src.c));
    Image rgb = img::replicate_to_rgb(src);

    double cw = std::min(t.crop_w, (double)rgb.w);
    double ch = std::min(t.crop_h, (double)rgb.h);
    double cx = std::clamp(t.crop_x, 0.0, rgb.w - cw);
    double cy = std::clamp(t.crop_y, 0.0, rgb.h - ch);
    Image out = img::crop_resize_bicubic(rgb, cx, cy, cw, ch, p.out_size, p.out_size);
    if (trace) trace->push_back("crop_resize");

    if (t.flip) img::hflip_inplace(out);
    if (trace) trace->push_back("flip");

    if (t.jitter_applied) {
        for (int op : t.jitter_order) {
            switch (op) {
                case 0: img::adjust_brightness(out, (float)t.brightness); break;
                case 1: img::adjust_contrast(out, (float)t.contrast); break;
                case 2: img::adjust_saturation(out, (float)t.saturation); break;
                default: img::adjust_hue(out, (float)t.hue); break;
            }
        }
    }
    if (trace) trace->push_back("jitter");

    if (t.grayscale) img::to_grayscale(out);
    if (trace) trace->push_back("grayscale");

    if (t.blur_applied) img::gaussian_blur(out, p.blur_kernel, (float)t.blur_sigma);
    if (trace) trace->push_back("blur");

    return out;
}

// Three standardized views per source image, NHWC [B, S, S, 3] each.
struct ViewBatch {
    Tensor v1, v2, v3;
    std::vector<int64_t> source_ids;

    Tensor& view(int i) { return i == 1 ? v1 : (i == 2 ? v2 : v3); }
    const Tensor& view(int i) const { return i == 1 ? v1 : (i == 2 ? v2 : v3); }
};

struct ChannelStats {
    std::array<double, 3> mean = {0.5, 0.5, 0.5};
    std::array<double, 3> stddev = {0.25, 0.25, 0.25};
};

// Stream coordinates for view augmentation. Each (sample, view) pair gets a
// private generator derived from these, so results do not depend on worker
// scheduling or batch traversal order.
struct ViewStream {
    uint64_t run_seed = 0;
    uint64_t epoch = 0;
    uint64_t iteration = 0;

    Rng rng_for(int64_t source_id, int view) const {
        return Rng::derive(run_seed, {rng_stream::kAugment, epoch, iteration,
                                      (uint64_t)source_id, (uint64_t)view});
    }
};

inline void write_standardized(Tensor& dst, int64_t row, const Image& im,
                               const ChannelStats& stats) {
    float* out = dst.data() + row * im.h * im.w * 3;
    for (size_t i = 0; i < im.px.size(); i += 3)
        for (int ch = 0; ch < 3; ++ch)
            out[i + ch] =
                (float)((im.px[i + ch] - stats.mean[ch]) / stats.stddev[ch]);
}

// n_views: two-view modes skip generating the third view; each view's draw is
// a pure function of (seed, epoch, iteration, sample, view), so shared views
// are bit-identical across modes regardless of how many get generated.
inline ViewBatch make_views(std::span<const Image> batch,
                            std::span<const int64_t> source_ids, const ViewStream& vs,
                            const AugmentPolicy& policy, const ChannelStats& stats,
                            int n_views = 3) {
    if (batch.empty()) throw Error("make_views: empty batch");
    if (batch.size() != source_ids.size())
        throw DimensionError("make_views: ids/batch size mismatch");
    if (n_views < 1 || n_views > 3) throw Error("make_views: n_views must be 1..3");
    const int64_t b = (int64_t)batch.size();
    const int s = policy.out_size;
    ViewBatch out;
    for (int view = 1; view <= n_views; ++view) out.view(view) = Tensor({b, s, s, 3});
    out.source_ids.assign(source_ids.begin(), source_ids.end());
    for (int64_t i = 0; i < b; ++i) {
        const Image& src = batch[i];
        for (int view = 1; view <= n_views; ++view) {
            Rng rng = vs.rng_for(source_ids[i], view);
            TransformParams t = sample_transform(rng, policy, src.h, src.w);
            Image v = apply_transform(src, t, policy);
            write_standardized(out.view(view), i, v, stats);
        }
    }
    return out;
}

} // namespace tribyol
