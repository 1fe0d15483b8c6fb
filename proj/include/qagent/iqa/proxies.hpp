#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "qagent/iqa/mscn.hpp"
#include "qagent/iqa/niqe.hpp"

// Classical stand-ins for the two learned quality slots: a global-appearance
// score (colorfulness + contrast + entropy) and a local-artifact score
// (per-tile blockiness / MSCN-shape anomalies).

namespace qagent {

// Hasler-Susstrunk colorfulness on the [0,1] scale.
inline double colorfulness(const ImageF& img) {
    const size_t n = img.plane_size();
    const float* r = img.plane(0);
    const float* g = img.plane(1);
    const float* b = img.plane(2);
    double s_rg = 0, s_rg2 = 0, s_yb = 0, s_yb2 = 0;
    for (size_t i = 0; i < n; ++i) {
        const double rg = static_cast<double>(r[i]) - g[i];
        const double yb = 0.5 * (static_cast<double>(r[i]) + g[i]) - b[i];
        s_rg += rg;
        s_rg2 += rg * rg;
        s_yb += yb;
        s_yb2 += yb * yb;
    }
    const double m_rg = s_rg / n, m_yb = s_yb / n;
    const double v_rg = std::max(0.0, s_rg2 / n - m_rg * m_rg);
    const double v_yb = std::max(0.0, s_yb2 / n - m_yb * m_yb);
    return std::sqrt(v_rg + v_yb) + 0.3 * std::sqrt(m_rg * m_rg + m_yb * m_yb);
}

inline double rms_contrast(const ImageF& img) {
    Plane y = to_luma(img);
    return std::sqrt(plane_variance(y));
}

// Shannon entropy of the 8-bit luma histogram, in bits.
inline double luma_entropy(const ImageF& img) {
    Plane y = to_luma(img);
    std::array<size_t, 256> hist{};
    for (float v : y.v) {
        const int b = std::clamp(static_cast<int>(std::floor(255.0f * v + 0.5f)), 0, 255);
        hist[static_cast<size_t>(b)] += 1;
    }
    double e = 0.0;
    const double n = static_cast<double>(y.v.size());
    for (size_t c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        e -= p * std::log2(p);
    }
    return e;
}

// Ratio of mean absolute luminance jumps across 8-aligned column/row
// boundaries to the jumps inside blocks; ~1 on natural content, >1 on
// block-coded content. Constant images pin to 1.
inline double blockiness_index(const Plane& luma, int x0 = 0, int y0 = 0, int w = -1, int h = -1) {
    if (w < 0) w = luma.width;
    if (h < 0) h = luma.height;
    double on = 0.0, off = 0.0;
    size_t n_on = 0, n_off = 0;
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0 + 1; x < x0 + w; ++x) {
            const double d = std::abs(static_cast<double>(luma.at(x, y)) - luma.at(x - 1, y));
            if (x % 8 == 0) {
                on += d;
                ++n_on;
            } else {
                off += d;
                ++n_off;
            }
        }
    for (int x = x0; x < x0 + w; ++x)
        for (int y = y0 + 1; y < y0 + h; ++y) {
            const double d = std::abs(static_cast<double>(luma.at(x, y)) - luma.at(x, y - 1));
            if (y % 8 == 0) {
                on += d;
                ++n_on;
            } else {
                off += d;
                ++n_off;
            }
        }
    if (n_on == 0 || n_off == 0) return 1.0;
    const double mean_on = on / static_cast<double>(n_on);
    const double mean_off = off / static_cast<double>(n_off);
    if (mean_off < 1e-7) return 1.0; // flat region: no evidence either way
    return mean_on / mean_off;
}

inline double blockiness_index(const ImageF& img) {
    Plane y = to_luma(img);
    return blockiness_index(y);
}

// cl: higher = better global appearance. Components are normalized by the
// calibration percentile table.
inline double clarity_from_components(double color, double contrast, double entropy,
                                      const PercentileTable& table) {
    const double c = percentile_normalize(table, "colorfulness", color);
    const double r = percentile_normalize(table, "rms_contrast", contrast);
    const double e = percentile_normalize(table, "entropy", entropy);
    return 0.4 * c + 0.3 * r + 0.3 * e;
}

inline double clarity_proxy(const ImageF& img, const PercentileTable& table) {
    return clarity_from_components(colorfulness(img), rms_contrast(img), luma_entropy(img), table);
}

// Mean anomaly of the worst quarter of 32x32 tiles. Each tile's anomaly is
// the larger of: excess blockiness, or deviation of the MSCN kurtosis from
// the natural-image value (~3).
inline double tile_anomaly_mean(const ImageF& img) {
    if (std::min(img.width, img.height) < 64)
        throw ImageTooSmall("local distortion proxy: min dimension must be >= 64");
    Plane luma = to_luma(img);
    Plane m = mscn(luma);
    const int tile = 32;
    std::vector<double> anomalies;
    for (int ty = 0; ty + tile <= img.height; ty += tile)
        for (int tx = 0; tx + tile <= img.width; tx += tile) {
            double s1 = 0, s2 = 0, s4 = 0;
            for (int y = ty; y < ty + tile; ++y)
                for (int x = tx; x < tx + tile; ++x) {
                    const double v = m.at(x, y);
                    s1 += v;
                    s2 += v * v;
                }
            const double n = tile * tile;
            const double mean = s1 / n;
            const double var = std::max(1e-12, s2 / n - mean * mean);
            for (int y = ty; y < ty + tile; ++y)
                for (int x = tx; x < tx + tile; ++x) {
                    const double d = m.at(x, y) - mean;
                    s4 += d * d * d * d;
                }
            const double kurt = s4 / n / (var * var);
            const double kurt_dev = std::abs(kurt - 3.0) / 5.0;
            const double block = std::max(0.0, blockiness_index(luma, tx, ty, tile, tile) - 1.0);
            anomalies.push_back(std::max(block, kurt_dev));
        }
    std::sort(anomalies.begin(), anomalies.end(), std::greater<double>());
    const size_t keep = std::max<size_t>(1, anomalies.size() / 4);
    double acc = 0.0;
    for (size_t i = 0; i < keep; ++i) acc += anomalies[i];
    return acc / static_cast<double>(keep);
}

// hy: higher = fewer local artifacts.
inline double distortion_from_component(double tile_anomaly, const PercentileTable& table) {
    return 1.0 - percentile_normalize(table, "tile_anomaly", tile_anomaly);
}

inline double local_distortion_proxy(const ImageF& img, const PercentileTable& table) {
    return distortion_from_component(tile_anomaly_mean(img), table);
}

} // namespace qagent
