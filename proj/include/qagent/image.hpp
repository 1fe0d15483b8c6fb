#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "qagent/error.hpp"

namespace qagent {

// Single-channel float raster. Values are unbounded (residuals, frequency
// magnitudes, luma) but must stay finite.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<float> v;

    Plane() = default;
    Plane(int w, int h, float fill = 0.0f)
        : width(w), height(h), v(static_cast<size_t>(w) * h, fill) {}

    float& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return v.size(); }
};

// Planar RGB image, all samples in [0, 1]. The carrier for every image
// that crosses a module boundary.
struct ImageF {
    int width = 0;
    int height = 0;
    std::vector<float> data; // plane-major: R plane, G plane, B plane

    ImageF() = default;
    ImageF(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

    size_t plane_size() const { return static_cast<size_t>(width) * height; }

    float* plane(int c) { return data.data() + static_cast<size_t>(c) * plane_size(); }
    const float* plane(int c) const { return data.data() + static_cast<size_t>(c) * plane_size(); }

    float& at(int c, int x, int y) { return plane(c)[static_cast<size_t>(y) * width + x]; }
    float at(int c, int x, int y) const { return plane(c)[static_cast<size_t>(y) * width + x]; }

    bool same_dims(const ImageF& o) const { return width == o.width && height == o.height; }
};

// 2-D convolution kernel; odd dimensions. Smoothing kernels are expected
// to sum to 1 within 1e-6.
struct Kernel2D {
    int width = 0;
    int height = 0;
    std::vector<float> taps;

    Kernel2D() = default;
    Kernel2D(int w, int h) : width(w), height(h), taps(static_cast<size_t>(w) * h, 0.0f) {}

    float& at(int x, int y) { return taps[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return taps[static_cast<size_t>(y) * width + x]; }

    double sum() const {
        double s = 0.0;
        for (float t : taps) s += t;
        return s;
    }

    void normalize() {
        const double s = sum();
        if (s != 0.0)
            for (float& t : taps) t = static_cast<float>(t / s);
    }
};

inline float clamp01(float x) { return x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x); }

inline void clamp_image(ImageF& img) {
    for (float& s : img.data) s = clamp01(s);
}

// BT.601 luma.
inline Plane to_luma(const ImageF& img) {
    Plane out(img.width, img.height);
    const float* r = img.plane(0);
    const float* g = img.plane(1);
    const float* b = img.plane(2);
    const size_t n = img.plane_size();
    for (size_t i = 0; i < n; ++i)
        out.v[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    return out;
}

inline Plane extract_plane(const ImageF& img, int c) {
    Plane out(img.width, img.height);
    std::copy(img.plane(c), img.plane(c) + img.plane_size(), out.v.begin());
    return out;
}

inline double plane_mean(const Plane& p) {
    double s = 0.0;
    for (float x : p.v) s += x;
    return p.v.empty() ? 0.0 : s / static_cast<double>(p.v.size());
}

inline double plane_variance(const Plane& p) {
    if (p.v.empty()) return 0.0;
    const double m = plane_mean(p);
    double s = 0.0;
    for (float x : p.v) {
        const double d = x - m;
        s += d * d;
    }
    return s / static_cast<double>(p.v.size());
}

inline double image_mean(const ImageF& img) {
    double s = 0.0;
    for (float x : img.data) s += x;
    return img.data.empty() ? 0.0 : s / static_cast<double>(img.data.size());
}

// Mean absolute difference over all samples; the drift measure used by the
// order-sensitivity checks.
inline double mean_abs_diff(const ImageF& a, const ImageF& b) {
    if (!a.same_dims(b)) throw DimMismatch("mean_abs_diff: image dimensions differ");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

inline bool all_finite(const ImageF& img) {
    for (float x : img.data)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Plane& p) {
    for (float x : p.v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace qagent
