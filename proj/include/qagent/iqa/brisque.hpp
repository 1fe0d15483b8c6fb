#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "qagent/error.hpp"
#include "qagent/iqa/nss.hpp"

// Distortion-index regressor: ridge regression from the 36 NSS features to
// a severity score in [0,100], trained on this artifact's own synthetic
// sweep. Stands in for the reference method's pretrained SVR.

namespace qagent {

struct RidgeRegressor {
    Eigen::VectorXd weights;   // 36
    double bias = 0.0;
    Eigen::VectorXd feat_mean; // z-score standardization
    Eigen::VectorXd feat_std;
    double lambda = 1.0;
    double train_spearman = 0.0;

    bool fitted() const { return weights.size() == kNssFeatureCount; }
};

inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw LengthMismatch("spearman: length mismatch or empty");
    const size_t n = a.size();
    auto ranks = [](const std::vector<double>& xs) {
        std::vector<size_t> idx(xs.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return xs[i] < xs[j]; });
        std::vector<double> r(xs.size());
        size_t i = 0;
        while (i < idx.size()) {
            size_t j = i;
            while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
            for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da < 1e-12 || db < 1e-12) return 0.0;
    return num / std::sqrt(da * db);
}

inline RidgeRegressor fit_ridge(const std::vector<NssFeatures>& feats,
                                const std::vector<double>& targets, double lambda = 1.0) {
    if (feats.size() != targets.size() || feats.empty())
        throw LengthMismatch("fit_ridge: feature/target size mismatch or empty");
    const int n = static_cast<int>(feats.size());
    Eigen::MatrixXd x(n, kNssFeatureCount);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        y(i) = targets[static_cast<size_t>(i)];
        for (int j = 0; j < kNssFeatureCount; ++j)
            x(i, j) = feats[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    RidgeRegressor r;
    r.lambda = lambda;
    r.feat_mean = x.colwise().mean();
    Eigen::MatrixXd xc = x.rowwise() - r.feat_mean.transpose();
    r.feat_std = (xc.array().square().colwise().mean().sqrt() + 1e-9).matrix();
    for (int i = 0; i < n; ++i) xc.row(i) = xc.row(i).cwiseQuotient(r.feat_std.transpose());

    const double y_mean = y.mean();
    Eigen::VectorXd yc = y.array() - y_mean;
    Eigen::MatrixXd gram = xc.transpose() * xc +
                           lambda * Eigen::MatrixXd::Identity(kNssFeatureCount, kNssFeatureCount);
    r.weights = gram.ldlt().solve(xc.transpose() * yc);
    r.bias = y_mean;

    std::vector<double> preds(feats.size());
    for (size_t i = 0; i < feats.size(); ++i) {
        Eigen::VectorXd f(kNssFeatureCount);
        for (int j = 0; j < kNssFeatureCount; ++j) f(j) = feats[i][static_cast<size_t>(j)];
        preds[i] = ((f - r.feat_mean).cwiseQuotient(r.feat_std)).dot(r.weights) + r.bias;
    }
    r.train_spearman = spearman_rho(preds, targets);
    return r;
}

inline double ridge_predict(const RidgeRegressor& r, const NssFeatures& f) {
    if (!r.fitted()) throw ModelMissing("ridge_predict: regressor not fitted");
    Eigen::VectorXd v(kNssFeatureCount);
    for (int j = 0; j < kNssFeatureCount; ++j) v(j) = f[static_cast<size_t>(j)];
    const double raw = ((v - r.feat_mean).cwiseQuotient(r.feat_std)).dot(r.weights) + r.bias;
    return std::clamp(raw, 0.0, 100.0);
}

inline double brisque_score(const ImageF& img, const RidgeRegressor& r) {
    return ridge_predict(r, nss_features(img));
}

} // namespace qagent
