#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tribyol/error.hpp"

namespace tribyol {

// Float image, HWC layout, values nominally in [0, 1]. Channels: 1 or 3.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), px((size_t)h_ * w_ * c_, 0.0f) {}

    float& at(int y, int x, int ch) { return px[((size_t)y * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return px[((size_t)y * w + x) * c + ch]; }
};

namespace img {

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

inline float luma(float r, float g, float b) {
    return 0.299f * r + 0.587f * g + 0.114f * b;
}

inline Image replicate_to_rgb(const Image& src) {
    if (src.c == 3) return src;
    if (src.c != 1) throw DimensionError("replicate_to_rgb: want 1 or 3 channels");
    Image out(src.h, src.w, 3);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) {
            float v = src.at(y, x, 0);
            out.at(y, x, 0) = v;
            out.at(y, x, 1) = v;
            out.at(y, x, 2) = v;
        }
    return out;
}

// Keys bicubic kernel, a = -0.5 (Catmull-Rom).
inline double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

// Resample the (real-valued) source rectangle [x0, x0+bw) x [y0, y0+bh)
// to an out_h x out_w image with bicubic interpolation, clamped borders.
inline Image crop_resize_bicubic(const Image& src, double x0, double y0, double bw,
                                 double bh, int out_h, int out_w) {
    if (src.c != 3) throw DimensionError("crop_resize_bicubic: want 3 channels");
    Image out(out_h, out_w, 3);
    const double sx = bw / out_w, sy = bh / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = y0 + (oy + 0.5) * sy - 0.5;
        const int iy = (int)std::floor(fy);
        double wy[4];
        for (int k = 0; k < 4; ++k) wy[k] = cubic_weight(fy - (iy - 1 + k));
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = x0 + (ox + 0.5) * sx - 0.5;
            const int ix = (int)std::floor(fx);
            double wx[4];
            for (int k = 0; k < 4; ++k) wx[k] = cubic_weight(fx - (ix - 1 + k));
            double acc[3] = {0.0, 0.0, 0.0};
            for (int ky = 0; ky < 4; ++ky) {
                const int yy = std::clamp(iy - 1 + ky, 0, src.h - 1);
                for (int kx = 0; kx < 4; ++kx) {
                    const int xx = std::clamp(ix - 1 + kx, 0, src.w - 1);
                    const double wgt = wy[ky] * wx[kx];
                    const float* p = &src.px[((size_t)yy * src.w + xx) * 3];
                    acc[0] += wgt * p[0];
                    acc[1] += wgt * p[1];
                    acc[2] += wgt * p[2];
                }
            }
            float* q = &out.px[((size_t)oy * out_w + ox) * 3];
            q[0] = clamp01((float)acc[0]);
            q[1] = clamp01((float)acc[1]);
            q[2] = clamp01((float)acc[2]);
        }
    }
    return out;
}

inline void hflip_inplace(Image& im) {
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w / 2; ++x)
            for (int ch = 0; ch < im.c; ++ch)
                std::swap(im.at(y, x, ch), im.at(y, im.w - 1 - x, ch));
}

inline void adjust_brightness(Image& im, float factor) {
    for (float& v : im.px) v = clamp01(v * factor);
}

inline void adjust_contrast(Image& im, float factor) {
    double mean = 0.0;
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            mean += luma(im.at(y, x, 0), im.at(y, x, 1), im.at(y, x, 2));
    mean /= (double)im.h * im.w;
    const float m = (float)mean;
    for (float& v : im.px) v = clamp01(factor * v + (1.0f - factor) * m);
}

inline void adjust_saturation(Image& im, float factor) {
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
            float g = luma(im.at(y, x, 0), im.at(y, x, 1), im.at(y, x, 2));
            for (int ch = 0; ch < 3; ++ch)
                im.at(y, x, ch) = clamp01(factor * im.at(y, x, ch) + (1.0f - factor) * g);
        }
}

inline void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    float mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    float d = mx - mn;
    s = mx <= 0.0f ? 0.0f : d / mx;
    if (d <= 0.0f) {
        h = 0.0f;
        return;
    }
    if (mx == r)
        h = (g - b) / d + (g < b ? 6.0f : 0.0f);
    else if (mx == g)
        h = (b - r) / d + 2.0f;
    else
        h = (r - g) / d + 4.0f;
    h /= 6.0f;
}

inline void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    h = h - std::floor(h);
    float i = std::floor(h * 6.0f);
    float f = h * 6.0f - i;
    float p = v * (1.0f - s);
    float q = v * (1.0f - f * s);
    float t = v * (1.0f - (1.0f - f) * s);
    switch ((int)i % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// Hue shift in turns of the hue circle (torchvision convention, [-0.5, 0.5]).
inline void adjust_hue(Image& im, float shift) {
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
            float h, s, v;
            rgb_to_hsv(im.at(y, x, 0), im.at(y, x, 1), im.at(y, x, 2), h, s, v);
            hsv_to_rgb(h + shift, s, v, im.at(y, x, 0), im.at(y, x, 1), im.at(y, x, 2));
        }
}

inline void to_grayscale(Image& im) {
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
            float g = luma(im.at(y, x, 0), im.at(y, x, 1), im.at(y, x, 2));
            im.at(y, x, 0) = g;
            im.at(y, x, 1) = g;
            im.at(y, x, 2) = g;
        }
}

// Separable Gaussian blur, fixed odd kernel size, reflect-101 borders.
inline void gaussian_blur(Image& im, int ksize, float sigma) {
    const int r = ksize / 2;
    std::vector<float> k(ksize);
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        double d = i - r;
        k[i] = (float)std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (float& v : k) v = (float)(v / sum);

    auto reflect = [](int i, int n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return i;
    };

    Image tmp(im.h, im.w, im.c);
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            for (int ch = 0; ch < im.c; ++ch) {
                float acc = 0.0f;
                for (int t = -r; t <= r; ++t)
                    acc += k[t + r] * im.at(y, reflect(x + t, im.w), ch);
                tmp.at(y, x, ch) = acc;
            }
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            for (int ch = 0; ch < im.c; ++ch) {
                float acc = 0.0f;
                for (int t = -r; t <= r; ++t)
                    acc += k[t + r] * tmp.at(reflect(y + t, im.h), x, ch);
                im.at(y, x, ch) = acc;
            }
}

} // namespace img
} // namespace tribyol
