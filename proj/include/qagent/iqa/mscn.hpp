#pragma once

#include <cmath>

#include "qagent/error.hpp"
#include "qagent/image.hpp"
#include "qagent/ops.hpp"

// Mean-subtracted contrast-normalized coefficients: the local luminance
// normalization whose statistics separate natural from distorted images.

namespace qagent {

struct MscnField {
    Plane mu;    // local mean
    Plane sigma; // local stddev
    Plane mscn;  // (I - mu) / (sigma + C)
};

inline constexpr double kMscnC = 1.0 / 255.0;

inline MscnField mscn_field(const Plane& p) {
    if (std::min(p.width, p.height) < 16)
        throw ImageTooSmall("mscn: min dimension must be >= 16");
    const auto g = gaussian_kernel1d(7, 7.0 / 6.0);
    MscnField f{convolve_sep(p, g, g), Plane(p.width, p.height), Plane(p.width, p.height)};

    Plane p2(p.width, p.height);
    for (size_t i = 0; i < p.v.size(); ++i) p2.v[i] = p.v[i] * p.v[i];
    Plane mu2 = convolve_sep(p2, g, g);
    for (size_t i = 0; i < p.v.size(); ++i) {
        const double var = std::max(0.0, static_cast<double>(mu2.v[i]) -
                                             static_cast<double>(f.mu.v[i]) * f.mu.v[i]);
        f.sigma.v[i] = static_cast<float>(std::sqrt(var));
        f.mscn.v[i] = static_cast<float>((p.v[i] - f.mu.v[i]) / (f.sigma.v[i] + kMscnC));
    }
    return f;
}

inline Plane mscn(const Plane& p) { return mscn_field(p).mscn; }

// Pairwise products of neighboring MSCN coefficients along the four
// canonical orientations; the AGGD inputs.
enum class PairOrientation { H, V, D1, D2 };

inline Plane mscn_products(const Plane& m, PairOrientation o) {
    int dx = 0, dy = 0;
    switch (o) {
        case PairOrientation::H: dx = 1; dy = 0; break;
        case PairOrientation::V: dx = 0; dy = 1; break;
        case PairOrientation::D1: dx = 1; dy = 1; break;
        case PairOrientation::D2: dx = -1; dy = 1; break;
    }
    Plane out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            const int sx = x + dx, sy = y + dy;
            if (sx < 0 || sy < 0 || sx >= m.width || sy >= m.height) {
                out.at(x, y) = 0.0f;
                continue;
            }
            out.at(x, y) = m.at(x, y) * m.at(sx, sy);
        }
    return out;
}

} // namespace qagent
