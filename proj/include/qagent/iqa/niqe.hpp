#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qagent/iqa/nss.hpp"

// Corpus naturalness model and the Mahalanobis-style distance from an
// image's patch statistics to it. Higher = less natural = worse.

namespace qagent {

struct PercentileRange {
    double p1 = 0.0;
    double p99 = 1.0;
};

using PercentileTable = std::map<std::string, PercentileRange>;

inline double percentile_normalize(const PercentileTable& table, const std::string& key, double x) {
    auto it = table.find(key);
    if (it == table.end()) throw ModelMissing("percentile table lacks '" + key + "'");
    const double span = it->second.p99 - it->second.p1;
    if (span <= 1e-12) return 0.5;
    return std::clamp((x - it->second.p1) / span, 0.0, 1.0);
}

struct NaturalnessModel {
    Eigen::VectorXd feature_mean;                  // 36
    Eigen::MatrixXd feature_cov;                   // 36x36
    std::string fitted_on;                         // corpus descriptor

    bool fitted() const { return feature_mean.size() == kNssFeatureCount; }
};

inline constexpr int kNiqePatch = 96;

// Patch anchor positions: stride 1/2 patch, final position flush with the
// far edge so the whole image is covered.
inline std::vector<int> patch_positions(int dim, int patch = kNiqePatch) {
    std::vector<int> pos;
    const int stride = patch / 2;
    for (int p = 0; p + patch <= dim; p += stride) pos.push_back(p);
    if (pos.empty() || pos.back() + patch < dim) pos.push_back(dim - patch);
    return pos;
}

struct PatchStats {
    std::vector<NssFeatures> features; // one row per selected sharp patch
};

// Select the top-50% sharpest patches (mean local sigma) and fit per-patch
// feature vectors.
inline PatchStats image_patch_stats(const ImageF& img) {
    if (std::min(img.width, img.height) < kNiqePatch)
        throw ImageTooSmall("niqe: min dimension must be >= 96");
    const NssPyramid pyr = nss_pyramid(img);
    const std::vector<int> xs = patch_positions(img.width);
    const std::vector<int> ys = patch_positions(img.height);

    struct Cand {
        double sharpness;
        int x, y;
    };
    std::vector<Cand> cands;
    for (int y : ys)
        for (int x : xs) {
            double acc = 0.0;
            for (int dy = 0; dy < kNiqePatch; ++dy)
                for (int dx = 0; dx < kNiqePatch; ++dx)
                    acc += pyr.full.field.sigma.at(x + dx, y + dy);
            cands.push_back({acc / (kNiqePatch * kNiqePatch), x, y});
        }
    // stable order: sharpness desc, then scan order, so selection is reproducible
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.sharpness != b.sharpness) return a.sharpness > b.sharpness;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    const size_t keep = std::max<size_t>(1, (cands.size() + 1) / 2);
    cands.resize(keep);

    PatchStats stats;
    stats.features.reserve(cands.size());
    for (const Cand& c : cands)
        stats.features.push_back(nss_patch_features(pyr, c.x, c.y));
    return stats;
}

inline void feature_moments(const std::vector<NssFeatures>& rows, Eigen::VectorXd& mean,
                            Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd m(n, kNssFeatureCount);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < kNssFeatureCount; ++j)
            m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    mean = m.colwise().mean();
    Eigen::MatrixXd centered = m.rowwise() - mean.transpose();
    cov = centered.transpose() * centered / std::max(1, n - 1);
}

inline NaturalnessModel fit_naturalness(const std::vector<ImageF>& pristine,
                                        const std::string& descriptor = "corpus") {
    if (pristine.size() < 50)
        throw CorpusTooSmall("fit_naturalness: need >= 50 pristine images, got " +
                             std::to_string(pristine.size()));
    std::vector<NssFeatures> all;
    for (const ImageF& img : pristine) {
        PatchStats s = image_patch_stats(img);
        all.insert(all.end(), s.features.begin(), s.features.end());
    }
    NaturalnessModel model;
    model.fitted_on = descriptor;
    feature_moments(all, model.feature_mean, model.feature_cov);
    return model;
}

// Mahalanobis-style distance with the two covariances pooled and a relative
// ridge to keep the solve well posed.
inline double naturalness_distance(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                                   const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b) {
    const auto n = mean_a.size();
    Eigen::MatrixXd pooled = (cov_a + cov_b) * 0.5;
    const double eps = 1e-6 * pooled.trace() / static_cast<double>(n);
    pooled += eps * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd d = mean_a - mean_b;
    const Eigen::VectorXd solved = pooled.ldlt().solve(d);
    return std::sqrt(std::max(0.0, d.dot(solved)));
}

inline double niqe_score(const ImageF& img, const NaturalnessModel& model) {
    if (!model.fitted()) throw ModelMissing("niqe_score: model not fitted");
    PatchStats s = image_patch_stats(img);
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    if (s.features.size() < 2) {
        // single patch: no covariance; fall back to model covariance alone
        mean = Eigen::VectorXd::Zero(kNssFeatureCount);
        for (int j = 0; j < kNssFeatureCount; ++j)
            mean(j) = s.features[0][static_cast<size_t>(j)];
        cov = Eigen::MatrixXd::Zero(kNssFeatureCount, kNssFeatureCount);
    } else {
        feature_moments(s.features, mean, cov);
    }
    return naturalness_distance(mean, cov, model.feature_mean, model.feature_cov);
}

} // namespace qagent
