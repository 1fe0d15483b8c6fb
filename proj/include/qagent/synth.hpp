#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "qagent/codec.hpp"
#include "qagent/image.hpp"
#include "qagent/ops.hpp"
#include "qagent/rng.hpp"

// Procedural pristine-image source: smooth value-noise backgrounds layered
// with anti-aliased vector shapes. The goal is natural-ish statistics —
// sharp edges, saturated regions, decent contrast, no grain, nothing
// aligned to an 8-pixel grid — so that a clean render really is the
// "undistorted" end of every degradation axis.

namespace qagent {

namespace synthdetail {

struct Rgb {
    float r, g, b;
};

inline Rgb hsv(double h, double s, double v) {
    h = std::fmod(h, 1.0) * 6.0;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
    double r = v, g = t, b = p;
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        case 5: r = v; g = p; b = q; break;
    }
    return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

// Smooth lattice noise: coarse random grid, bicubic upsample. No grain.
inline Plane value_noise(int w, int h, int cells, Rng& rng) {
    Plane coarse(cells, cells);
    for (float& v : coarse.v) v = static_cast<float>(rng.next_double());
    return detail::resize_bicubic(coarse, w, h);
}

struct Shape {
    enum class Kind { Disk, Ring, Box, Capsule } kind;
    double cx, cy;
    double r;            // radius / half-extent
    double r2;           // second half-extent (box) or half-width (ring, capsule)
    double angle;        // orientation for box/capsule
    double len;          // capsule half-length
    Rgb color;
    float opacity;
};

inline double shape_sdf(const Shape& s, double px, double py) {
    const double dx = px - s.cx, dy = py - s.cy;
    switch (s.kind) {
        case Shape::Kind::Disk:
            return std::sqrt(dx * dx + dy * dy) - s.r;
        case Shape::Kind::Ring:
            return std::abs(std::sqrt(dx * dx + dy * dy) - s.r) - s.r2;
        case Shape::Kind::Box: {
            const double ca = std::cos(s.angle), sa = std::sin(s.angle);
            const double lx = std::abs(ca * dx + sa * dy) - s.r;
            const double ly = std::abs(-sa * dx + ca * dy) - s.r2;
            const double ox = std::max(lx, 0.0), oy = std::max(ly, 0.0);
            return std::sqrt(ox * ox + oy * oy) + std::min(std::max(lx, ly), 0.0);
        }
        case Shape::Kind::Capsule: {
            const double ca = std::cos(s.angle), sa = std::sin(s.angle);
            const double lx = ca * dx + sa * dy;
            const double ly = -sa * dx + ca * dy;
            const double t = std::clamp(lx, -s.len, s.len);
            const double ex = lx - t;
            return std::sqrt(ex * ex + ly * ly) - s.r2;
        }
    }
    return 1e9;
}

inline double shape_extent(const Shape& s) {
    switch (s.kind) {
        case Shape::Kind::Disk: return s.r + 2.0;
        case Shape::Kind::Ring: return s.r + s.r2 + 2.0;
        case Shape::Kind::Box: return std::hypot(s.r, s.r2) + 2.0;
        case Shape::Kind::Capsule: return s.len + s.r2 + 2.0;
    }
    return 0.0;
}

inline void draw_shape(ImageF& img, const Shape& s) {
    const double ext = shape_extent(s);
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - ext)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(s.cx + ext)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - ext)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(s.cy + ext)));
    float* pr = img.plane(0);
    float* pg = img.plane(1);
    float* pb = img.plane(2);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = shape_sdf(s, x + 0.5, y + 0.5);
            const double cov = std::clamp(0.5 - d, 0.0, 1.0); // ~1px anti-aliased edge
            if (cov <= 0.0) continue;
            const float a = static_cast<float>(cov) * s.opacity;
            const size_t i = static_cast<size_t>(y) * img.width + x;
            pr[i] = pr[i] * (1.0f - a) + s.color.r * a;
            pg[i] = pg[i] * (1.0f - a) + s.color.g * a;
            pb[i] = pb[i] * (1.0f - a) + s.color.b * a;
        }
}

} // namespace synthdetail

inline ImageF synth_image(int w, int h, uint64_t seed) {
    using namespace synthdetail;
    Rng rng(Rng::mix(seed, 0x73796e7468ULL));
    ImageF img(w, h);

    // background: two-color wash modulated by smooth noise. Kept dim so the
    // pixel population is shadow-heavy the way photographs are; highlights
    // come from the shapes.
    const Rgb c0 = hsv(rng.next_double(), rng.uniform(0.15, 0.5), rng.uniform(0.28, 0.50));
    const Rgb c1 = hsv(rng.next_double(), rng.uniform(0.15, 0.5), rng.uniform(0.28, 0.50));
    Plane n0 = value_noise(w, h, 5, rng);
    Plane n1 = value_noise(w, h, 9, rng);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const float m = std::clamp(0.65f * n0.v[i] + 0.35f * n1.v[i], 0.0f, 1.0f);
            img.plane(0)[i] = c0.r * (1.0f - m) + c1.r * m;
            img.plane(1)[i] = c0.g * (1.0f - m) + c1.g * m;
            img.plane(2)[i] = c0.b * (1.0f - m) + c1.b * m;
        }

    // mid-size vector shapes with crisp edges. The last few are forced
    // small and bright (drawn last so nothing paints over them): they anchor
    // the highlight percentile so the later contrast stretch never has to
    // brighten the whole frame to reach it.
    const int n_shapes = rng.uniform_int(14, 24);
    for (int s = 0; s < n_shapes; ++s) {
        Shape sh;
        const bool highlight = s >= n_shapes - 3;
        const int pick = rng.uniform_int(0, 3);
        sh.kind = static_cast<Shape::Kind>(pick);
        sh.cx = rng.uniform(0.0, w);
        sh.cy = rng.uniform(0.0, h);
        sh.r = (highlight ? rng.uniform(0.05, 0.09) : rng.uniform(0.04, 0.16)) * std::min(w, h);
        sh.r2 = sh.kind == Shape::Kind::Ring ? rng.uniform(2.0, 5.0)
              : sh.kind == Shape::Kind::Capsule ? rng.uniform(1.5, 4.0)
              : rng.uniform(0.03, 0.12) * std::min(w, h);
        sh.angle = rng.uniform(0.0, 3.14159265358979323846);
        sh.len = rng.uniform(0.08, 0.3) * std::min(w, h);
        // saturated palette keeps per-window min-channel low; values biased
        // dark so bright regions stay a minority of the frame
        const double v = highlight                 ? rng.uniform(0.75, 0.95)
                         : rng.next_double() < 0.62 ? rng.uniform(0.18, 0.55)
                                                    : rng.uniform(0.55, 0.95);
        sh.color = hsv(rng.next_double(), highlight ? rng.uniform(0.2, 0.55) : rng.uniform(0.55, 0.95), v);
        sh.opacity = static_cast<float>(rng.uniform(0.85, 1.0));
        draw_shape(img, sh);
    }

    // fine strokes: high-frequency content well above the blur scales
    const int n_fine = rng.uniform_int(25, 45);
    for (int s = 0; s < n_fine; ++s) {
        Shape sh;
        sh.kind = Shape::Kind::Capsule;
        sh.cx = rng.uniform(0.0, w);
        sh.cy = rng.uniform(0.0, h);
        sh.r = 0.0;
        sh.r2 = rng.uniform(0.6, 1.4);
        sh.angle = rng.uniform(0.0, 3.14159265358979323846);
        sh.len = rng.uniform(3.0, 14.0);
        sh.color = hsv(rng.next_double(), rng.uniform(0.4, 0.9), rng.next_double() < 0.5 ? rng.uniform(0.05, 0.3) : rng.uniform(0.7, 0.98));
        sh.opacity = static_cast<float>(rng.uniform(0.8, 1.0));
        draw_shape(img, sh);
    }

    // normalize contrast: stretch luma p1..p99 to [0.02, 0.98]
    {
        Plane y = to_luma(img);
        const double lo = percentile_of_plane(y, 1.0), hi = percentile_of_plane(y, 99.0);
        if (hi - lo > 1e-3) {
            const double scale = (0.98 - 0.02) / (hi - lo);
            for (float& v : img.data)
                v = static_cast<float>(0.02 + (v - lo) * scale);
            clamp_image(img);
        }
    }

    // guarantee a contrasty regime: expand around the mean if flat
    for (int round = 0; round < 2; ++round) {
        Plane y = to_luma(img);
        const double mean = plane_mean(y);
        const double rms = std::sqrt(plane_variance(y));
        if (rms >= 0.20 || rms <= 1e-4) break;
        const double k = std::min(1.6, 0.21 / rms);
        for (float& v : img.data)
            v = static_cast<float>(mean + (v - mean) * k);
        clamp_image(img);
    }

    return img;
}

inline std::vector<std::string> synth_corpus(const std::string& out_dir, int count, int w, int h,
                                             uint64_t seed) {
    namespace fs = std::filesystem;
    if (count < 1) throw ParamOutOfRange("synth_corpus: count must be >= 1");
    fs::create_directories(out_dir);
    std::vector<std::string> paths;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "s%04d.png", i);
        const std::string path = (fs::path(out_dir) / name).string();
        save_png(synth_image(w, h, Rng::mix(seed, static_cast<uint64_t>(i))), path);
        paths.push_back(path);
    }
    return paths;
}

} // namespace qagent
