#pragma once

#include <cmath>
#include <deque>
#include <vector>

#include "qagent/error.hpp"
#include "qagent/image.hpp"
#include "qagent/ops.hpp"

// Sharpness as the fraction of edges whose blur is below the just-noticeable
// threshold: edge widths measured across the local gradient direction,
// converted to blur probabilities, pooled as a cumulative probability.

namespace qagent {

struct CpbdResult {
    double cp = 0.0;
    bool no_edges = false;
};

namespace cpbddetail {

inline float sample_bilinear(const Plane& p, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(p.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(p.height - 1));
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, p.width - 1), y1 = std::min(y0 + 1, p.height - 1);
    const double fx = x - x0, fy = y - y0;
    return static_cast<float>(p.at(x0, y0) * (1 - fx) * (1 - fy) + p.at(x1, y0) * fx * (1 - fy) +
                              p.at(x0, y1) * (1 - fx) * fy + p.at(x1, y1) * fx * fy);
}

// March from the edge point along +-dir until the luminance profile turns
// around; returns (width in steps, contrast between the two extrema).
inline std::pair<double, double> edge_width(const Plane& luma, int x, int y, double dx, double dy) {
    const int max_steps = 16;
    double v0 = luma.at(x, y);
    // uphill side
    double hi = v0;
    int up = 0;
    for (int k = 1; k <= max_steps; ++k) {
        const double v = sample_bilinear(luma, x + k * dx, y + k * dy);
        if (v <= hi + 1e-6) break;
        hi = v;
        up = k;
    }
    // downhill side
    double lo = v0;
    int down = 0;
    for (int k = 1; k <= max_steps; ++k) {
        const double v = sample_bilinear(luma, x - k * dx, y - k * dy);
        if (v >= lo - 1e-6) break;
        lo = v;
        down = k;
    }
    return {static_cast<double>(up + down), hi - lo};
}

} // namespace cpbddetail

inline CpbdResult cpbd_detail(const ImageF& img) {
    if (std::min(img.width, img.height) < 64)
        throw ImageTooSmall("cpbd: min dimension must be >= 64");
    Plane luma = to_luma(img);
    GradientField g = sobel(luma);
    Plane mag(luma.width, luma.height);
    for (size_t i = 0; i < mag.v.size(); ++i)
        mag.v[i] = std::sqrt(g.gx.v[i] * g.gx.v[i] + g.gy.v[i] * g.gy.v[i]);

    // threshold over the population of actual gradient responses; exactly
    // flat pixels would otherwise drown the percentiles on synthetic content
    std::vector<double> responses;
    responses.reserve(mag.v.size());
    for (float m : mag.v)
        if (m > 1e-9f) responses.push_back(m);
    if (responses.empty()) return {0.0, true};
    const double hi_thr = percentile(responses, 80.0);
    const double lo_thr = percentile(std::move(responses), 40.0);
    if (hi_thr <= 1e-6) return {0.0, true};

    // hysteresis: strong seeds grown through weak neighbors
    const int w = luma.width, h = luma.height;
    std::vector<uint8_t> edge(static_cast<size_t>(w) * h, 0);
    std::deque<int> queue;
    for (int i = 0; i < w * h; ++i)
        if (mag.v[static_cast<size_t>(i)] >= hi_thr) {
            edge[static_cast<size_t>(i)] = 1;
            queue.push_back(i);
        }
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        const int x = i % w, y = i / w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const int ni = ny * w + nx;
                if (edge[static_cast<size_t>(ni)]) continue;
                if (mag.v[static_cast<size_t>(ni)] >= lo_thr) {
                    edge[static_cast<size_t>(ni)] = 1;
                    queue.push_back(ni);
                }
            }
    }

    size_t sharp = 0, total = 0;
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (!edge[i]) continue;
            const double m = mag.v[i];
            if (m < 1e-9) continue;
            const double dx = g.gx.v[i] / m, dy = g.gy.v[i] / m;
            auto [width, contrast] = cpbddetail::edge_width(luma, x, y, dx, dy);
            if (width < 1.0) continue; // not a resolvable transition
            const double w_jnb = contrast > 0.2 ? 3.0 : 5.0;
            const double p_blur = 1.0 - std::exp(-std::pow(width / w_jnb, 3.6));
            if (p_blur <= 0.63) ++sharp;
            ++total;
        }
    if (total == 0) return {0.0, true};
    return {static_cast<double>(sharp) / static_cast<double>(total), false};
}

inline double cpbd_score(const ImageF& img, bool* no_edges = nullptr) {
    const CpbdResult r = cpbd_detail(img);
    if (no_edges) *no_edges = r.no_edges;
    return r.cp;
}

} // namespace qagent
