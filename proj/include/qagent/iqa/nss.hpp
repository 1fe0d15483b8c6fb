#pragma once

#include <array>
#include <vector>

#include "qagent/iqa/fits.hpp"
#include "qagent/iqa/mscn.hpp"

// Natural-scene-statistics feature vectors: 18 features per scale (GGD of
// the MSCN field + AGGD of its four neighbor products), two scales, 36 total.

namespace qagent {

inline constexpr int kNssFeatureCount = 36;
using NssFeatures = std::array<double, kNssFeatureCount>;

// Per-scale planes shared between whole-image features and patch statistics.
struct NssScalePlanes {
    MscnField field;
    std::array<Plane, 4> products; // H, V, D1, D2
};

struct NssPyramid {
    NssScalePlanes full;
    NssScalePlanes half;
};

namespace nssdetail {

inline NssScalePlanes make_scale(const Plane& luma) {
    NssScalePlanes s{mscn_field(luma), {}};
    s.products = {mscn_products(s.field.mscn, PairOrientation::H),
                  mscn_products(s.field.mscn, PairOrientation::V),
                  mscn_products(s.field.mscn, PairOrientation::D1),
                  mscn_products(s.field.mscn, PairOrientation::D2)};
    return s;
}

// 18 features of one scale over a pixel rectangle [x0,x0+w) x [y0,y0+h)
inline void scale_features_rect(const NssScalePlanes& s, int x0, int y0, int w, int h,
                                double* out) {
    std::vector<float> buf(static_cast<size_t>(w) * h);
    auto gather = [&](const Plane& p) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                buf[static_cast<size_t>(y) * w + x] = p.at(x0 + x, y0 + y);
    };
    gather(s.field.mscn);
    const GgdFit g = ggd_fit(buf.begin(), buf.end());
    out[0] = g.alpha;
    out[1] = g.sigma_sq;
    int k = 2;
    for (const Plane& prod : s.products) {
        gather(prod);
        const AggdFit a = aggd_fit(buf.begin(), buf.end());
        out[k++] = a.alpha;
        out[k++] = a.sigma_l_sq;
        out[k++] = a.sigma_r_sq;
        out[k++] = a.mean;
    }
}

} // namespace nssdetail

inline NssPyramid nss_pyramid(const ImageF& img) {
    if (std::min(img.width, img.height) < 32)
        throw ImageTooSmall("nss: min dimension must be >= 32");
    Plane luma = to_luma(img);
    Plane half = detail::resize_box(luma, std::max(16, img.width / 2), std::max(16, img.height / 2));
    return {nssdetail::make_scale(luma), nssdetail::make_scale(half)};
}

// Whole-image 36-vector: full-scale block then half-scale block.
inline NssFeatures nss_features(const ImageF& img) {
    const NssPyramid pyr = nss_pyramid(img);
    NssFeatures f{};
    nssdetail::scale_features_rect(pyr.full, 0, 0, pyr.full.field.mscn.width,
                                   pyr.full.field.mscn.height, f.data());
    nssdetail::scale_features_rect(pyr.half, 0, 0, pyr.half.field.mscn.width,
                                   pyr.half.field.mscn.height, f.data() + 18);
    return f;
}

// 36-vector for one 96x96 full-scale patch (uses the matching 48x48 region
// at the half scale).
inline NssFeatures nss_patch_features(const NssPyramid& pyr, int x0, int y0, int patch = 96) {
    NssFeatures f{};
    nssdetail::scale_features_rect(pyr.full, x0, y0, patch, patch, f.data());
    const int hx = std::min(x0 / 2, pyr.half.field.mscn.width - patch / 2);
    const int hy = std::min(y0 / 2, pyr.half.field.mscn.height - patch / 2);
    nssdetail::scale_features_rect(pyr.half, std::max(0, hx), std::max(0, hy), patch / 2, patch / 2,
                                   f.data() + 18);
    return f;
}

} // namespace qagent
