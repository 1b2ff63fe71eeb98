#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tribyol/image.hpp"
#include "tribyol/rng.hpp"

// Procedural shape datasets for offline CI. Ten glyph classes drawn with
// signed distance functions; colour, position, scale, rotation and background
// clutter are nuisance variables so a randomly initialized backbone cannot
// solve the task from colour statistics alone.

namespace tribyol::data {

struct SynthSpec {
    std::string family = "A"; // A | B | gray
    int side = 96;
    int num_classes = 10;
    uint64_t seed = 7;
};

namespace synth_detail {

struct Vec2 {
    double x, y;
};

inline double box_sdf(Vec2 p, double bx, double by) {
    const double qx = std::fabs(p.x) - bx, qy = std::fabs(p.y) - by;
    const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

inline double disk_sdf(Vec2 p, double r) { return std::hypot(p.x, p.y) - r; }

// Distance for one glyph, in units of the glyph radius r.
inline double glyph_sdf(int cls, Vec2 p, double r) {
    switch (cls) {
        case 0: // disk
            return disk_sdf(p, r);
        case 1: // ring
            return std::fabs(disk_sdf(p, 0.78 * r)) - 0.26 * r;
        case 2: // square
            return box_sdf(p, 0.8 * r, 0.8 * r);
        case 3: // square outline
            return std::fabs(box_sdf(p, 0.74 * r, 0.74 * r)) - 0.22 * r;
        case 4: { // triangle (upward)
            const double k = std::sqrt(3.0);
            double px = std::fabs(p.x) - r, py = p.y + r / k;
            if (px + k * py > 0.0) {
                const double nx = (px - k * py) / 2.0, ny = (-k * px - py) / 2.0;
                px = nx;
                py = ny;
            }
            px -= std::clamp(px, -2.0 * r, 0.0);
            return -std::hypot(px, py) * (py < 0.0 ? -1.0 : 1.0);
        }
        case 5: // plus
            return std::min(box_sdf(p, 0.95 * r, 0.32 * r), box_sdf(p, 0.32 * r, 0.95 * r));
        case 6: { // X cross (plus rotated 45 degrees)
            const double c = 0.70710678118654752, s = c;
            Vec2 q{c * p.x - s * p.y, s * p.x + c * p.y};
            return std::min(box_sdf(q, 0.95 * r, 0.3 * r), box_sdf(q, 0.3 * r, 0.95 * r));
        }
        case 7: // two horizontal bars
            return std::min(box_sdf({p.x, p.y - 0.52 * r}, 0.9 * r, 0.2 * r),
                            box_sdf({p.x, p.y + 0.52 * r}, 0.9 * r, 0.2 * r));
        case 8: // diamond
            return (std::fabs(p.x) + std::fabs(p.y) - r) * 0.7071;
        default: { // crescent: disk minus shifted disk
            const double d1 = disk_sdf(p, 0.85 * r);
            const double d2 = disk_sdf({p.x - 0.55 * r, p.y}, 0.62 * r);
            return std::max(d1, -d2);
        }
    }
}

inline void hsv_fill(float h, float s, float v, float* rgb) {
    img::hsv_to_rgb(h, s, v, rgb[0], rgb[1], rgb[2]);
}

} // namespace synth_detail

// Draws one sample of `cls` for the given family. Returned image is
// side x side with 3 channels (1 for the gray family).
inline Image synth_image(const SynthSpec& spec, int cls, Rng& rng) {
    using namespace synth_detail;
    const int side = spec.side;
    const bool gray = spec.family == "gray";
    const bool outline_family = spec.family == "B";
    Image im(side, side, gray ? 1 : 3);

    // Background: dark base colour + two low-frequency waves + pixel noise.
    float bg[3];
    if (gray) {
        bg[0] = bg[1] = bg[2] = (float)rng.uniform(0.05, 0.3);
    } else {
        hsv_fill((float)rng.uniform(), (float)rng.uniform(0.0, 0.6),
                 (float)rng.uniform(0.05, 0.35), bg);
    }
    const double wfx = rng.uniform(0.5, 2.0), wfy = rng.uniform(0.5, 2.0);
    const double wph = rng.uniform(0.0, 6.283), wamp = rng.uniform(0.0, 0.06);

    // Foreground colour: saturated, clearly above the background value.
    float fg[3];
    if (gray) {
        fg[0] = fg[1] = fg[2] = (float)rng.uniform(0.65, 1.0);
    } else {
        hsv_fill((float)rng.uniform(), (float)rng.uniform(0.6, 1.0),
                 (float)rng.uniform(0.7, 1.0), fg);
    }

    // Nuisance geometry.
    const double radius = side * rng.uniform(0.20, 0.34);
    const double cx = side * (0.5 + rng.uniform(-0.16, 0.16));
    const double cy = side * (0.5 + rng.uniform(-0.16, 0.16));
    const double rot = rng.uniform(-0.4, 0.4);
    const double cr = std::cos(rot), sr = std::sin(rot);

    struct Distractor {
        double x, y, w, h, rot;
        float col[3];
    };
    std::vector<Distractor> distract;
    const int n_distract = 2 + (int)rng.uniform_int(4);
    for (int i = 0; i < n_distract; ++i) {
        Distractor d;
        d.x = rng.uniform(0.0, (double)side);
        d.y = rng.uniform(0.0, (double)side);
        d.w = side * rng.uniform(0.03, 0.10);
        d.h = side * rng.uniform(0.03, 0.10);
        d.rot = rng.uniform(0.0, 3.14159);
        if (gray)
            d.col[0] = d.col[1] = d.col[2] = (float)rng.uniform(0.3, 0.8);
        else
            hsv_fill((float)rng.uniform(), (float)rng.uniform(0.5, 1.0),
                     (float)rng.uniform(0.4, 0.9), d.col);
        distract.push_back(d);
    }

    const double edge = 1.2; // soft edge width in pixels
    auto coverage = [&](double sd) {
        const double t = std::clamp(0.5 - sd / (2.0 * edge), 0.0, 1.0);
        return t * t * (3.0 - 2.0 * t);
    };

    std::vector<float> noise(im.px.size());
    for (auto& v : noise) v = (float)rng.normal(0.0, 0.03);

    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double wave = wamp * (std::sin(wfx * 6.283 * x / side + wph) +
                                        std::cos(wfy * 6.283 * y / side));
            float px[3];
            for (int ch = 0; ch < 3; ++ch) px[ch] = (float)(bg[ch] + wave);

            for (const auto& d : distract) {
                const double dc = std::cos(d.rot), ds = std::sin(d.rot);
                Vec2 q{dc * (x - d.x) - ds * (y - d.y), ds * (x - d.x) + dc * (y - d.y)};
                const double cov = coverage(box_sdf(q, d.w, d.h));
                for (int ch = 0; ch < 3; ++ch)
                    px[ch] = (float)(px[ch] * (1.0 - cov) + d.col[ch] * cov);
            }

            Vec2 p{cr * (x - cx) - sr * (y - cy), sr * (x - cx) + cr * (y - cy)};
            double sd = glyph_sdf(cls, p, radius);
            if (outline_family) sd = std::fabs(sd) - 0.12 * radius;
            const double cov = coverage(sd);
            for (int ch = 0; ch < 3; ++ch)
                px[ch] = (float)(px[ch] * (1.0 - cov) + fg[ch] * cov);

            for (int ch = 0; ch < im.c; ++ch)
                im.at(y, x, ch) =
                    img::clamp01(px[ch] + noise[((size_t)y * side + x) * im.c + ch]);
        }
    }
    return im;
}

} // namespace tribyol::data
