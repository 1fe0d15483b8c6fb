#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qagent/degrade.hpp"
#include "qagent/error.hpp"
#include "qagent/image.hpp"
#include "qagent/iqa/brisque.hpp"
#include "qagent/iqa/cpbd.hpp"
#include "qagent/iqa/metrics.hpp"
#include "qagent/iqa/niqe.hpp"
#include "qagent/iqa/proxies.hpp"
#include "qagent/rng.hpp"

// Everything the quality model learns from data, bundled into one artifact:
// naturalness moments, the distortion regressor, percentile spans for the
// normalized slots, and the perception thresholds. Fitted once from a
// pristine corpus plus a graded degradation sweep, saved as JSON, reloaded
// everywhere else.

namespace qagent {

inline constexpr int kCalibrationVersion = 1;
inline constexpr const char* kCalibrationEnvVar = "Q_AGENT_CALIBRATION";

// Detector decision thresholds. The literals are the shipped fallbacks;
// calibration re-derives the corpus-dependent ones (blur_vol, lr_pristine_hf
// and friends) from labeled sweep statistics. Every comparison is
// closed-upper: value == threshold counts as positive.
struct DetectorThresholds {
    double noise_sigma = 6.0 / 255.0;     // present iff sigma_hat >= this
    double noise_low_mid = 17.5 / 255.0;  // severity boundaries (generator midpoints)
    double noise_mid_high = 37.5 / 255.0;
    double jpeg_blockiness = 1.15;
    double haze_dark_mean = 0.35;
    double haze_contrast = 0.18;
    double low_light_mean = 0.25;
    double low_light_dark_level = 0.12;
    double low_light_dark_frac = 0.5;
    double rain_band_ratio = 2.0;   // max bin in 60..120 deg vs median bin
    double rain_resid_level = 0.04; // residual pixel counts as streak above this
    double rain_density_min = 5e-4; // plausible streak-coverage window
    double rain_density_max = 0.40;
    double blur_vol = 2e-3;        // variance of Laplacian floor; calibrated
    double blur_anisotropy = 2.5;  // structure-tensor eigen ratio: motion vs defocus
    double lr_cutoff = 0.35;       // HF band starts at this fraction of Nyquist
    double lr_pristine_hf = 0.10;  // expected pristine HF energy fraction; calibrated
    double lr_hf_ratio = 0.5;      // present iff hf <= ratio * pristine expectation
    double lr_invariance = 0.025;  // re-down-up RMSE below this means the factor fits
};

// name <-> member table so JSON save/load can't drift out of sync
inline const std::vector<std::pair<const char*, double DetectorThresholds::*>>&
detector_threshold_fields() {
    static const std::vector<std::pair<const char*, double DetectorThresholds::*>> fields = {
        {"noise_sigma", &DetectorThresholds::noise_sigma},
        {"noise_low_mid", &DetectorThresholds::noise_low_mid},
        {"noise_mid_high", &DetectorThresholds::noise_mid_high},
        {"jpeg_blockiness", &DetectorThresholds::jpeg_blockiness},
        {"haze_dark_mean", &DetectorThresholds::haze_dark_mean},
        {"haze_contrast", &DetectorThresholds::haze_contrast},
        {"low_light_mean", &DetectorThresholds::low_light_mean},
        {"low_light_dark_level", &DetectorThresholds::low_light_dark_level},
        {"low_light_dark_frac", &DetectorThresholds::low_light_dark_frac},
        {"rain_band_ratio", &DetectorThresholds::rain_band_ratio},
        {"rain_resid_level", &DetectorThresholds::rain_resid_level},
        {"rain_density_min", &DetectorThresholds::rain_density_min},
        {"rain_density_max", &DetectorThresholds::rain_density_max},
        {"blur_vol", &DetectorThresholds::blur_vol},
        {"blur_anisotropy", &DetectorThresholds::blur_anisotropy},
        {"lr_cutoff", &DetectorThresholds::lr_cutoff},
        {"lr_pristine_hf", &DetectorThresholds::lr_pristine_hf},
        {"lr_hf_ratio", &DetectorThresholds::lr_hf_ratio},
        {"lr_invariance", &DetectorThresholds::lr_invariance},
    };
    return fields;
}

struct CorpusInfo {
    std::string descriptor;
    int count = 0;
    std::string digest;
};

struct CalibrationArtifact {
    int version = kCalibrationVersion;
    CorpusInfo corpus;
    NaturalnessModel naturalness;
    RidgeRegressor brisque;
    PercentileTable percentiles;
    DetectorThresholds detectors;

    bool fitted() const { return naturalness.fitted() && brisque.fitted(); }
};

// FNV-1a over quantized pixel bytes + dims; pins the artifact to its corpus.
inline std::string corpus_digest(const std::vector<ImageF>& imgs) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ull;
        }
    };
    for (const ImageF& im : imgs) {
        mix(static_cast<uint64_t>(im.width));
        mix(static_cast<uint64_t>(im.height));
        for (float s : im.data) {
            h ^= static_cast<unsigned char>(std::floor(255.0f * std::clamp(s, 0.0f, 1.0f) + 0.5f));
            h *= 0x100000001b3ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// One graded degradation per (kind, level). Levels 1..3 step the generator's
// parameter range from mild to harsh; stochastic parameters (angles, airlight
// tint, streak geometry) come from rng so the sweep covers realizations, not
// one fixed instance.
inline DegradationStep sweep_step(DegradationKind kind, int level, Rng& rng) {
    if (level < 1 || level > 3) throw ParamOutOfRange("sweep level must be 1..3");
    const int i = level - 1;
    const auto sev = static_cast<Severity>(i);
    switch (kind) {
        case DegradationKind::Noise:
            return make_noise_step(sev);
        case DegradationKind::MotionBlur: {
            constexpr double len[3] = {9.0, 15.0, 21.0};
            return {MotionBlurParams{len[i], rng.uniform(0.0, 180.0)}, sev};
        }
        case DegradationKind::DefocusBlur: {
            constexpr double rad[3] = {2.0, 4.0, 6.0};
            return {DefocusBlurParams{rad[i]}, sev};
        }
        case DegradationKind::Jpeg: {
            constexpr int q[3] = {40, 25, 10};
            return {JpegParams{q[i]}, sev};
        }
        case DegradationKind::LowLight: {
            constexpr double gamma[3] = {1.8, 2.4, 3.0};
            constexpr double gain[3] = {0.9, 0.7, 0.5};
            return {LowLightParams{gamma[i], gain[i]}, sev};
        }
        case DegradationKind::LowRes:
            return {LowResParams{i + 2}, sev};
        case DegradationKind::Haze: {
            constexpr double t[3] = {0.75, 0.55, 0.40};
            HazeParams p;
            p.t = t[i];
            for (double& a : p.airlight) a = rng.uniform(0.8, 1.0);
            return {p, sev};
        }
        case DegradationKind::Rain: {
            constexpr double den[3] = {0.002, 0.006, 0.01};
            RainParams p;
            p.angle_deg = rng.uniform(60.0, 120.0);
            p.length = rng.uniform(12.0, 30.0);
            p.density = den[i];
            p.beta = rng.uniform(0.6, 0.9);
            return {p, sev};
        }
    }
    throw ParamOutOfRange("sweep kind");
}

namespace caldetail {

// Raw metric components of one sweep image; level 0 = pristine.
struct Observation {
    DegradationKind kind = DegradationKind::Noise;
    int level = 0;
    NssFeatures nss{};
    double ni = 0.0, cp = 0.0;
    double color = 0.0, contrast = 0.0, entropy = 0.0, tile = 0.0;
};

inline Observation observe(const ImageF& img, const NaturalnessModel& nat) {
    Observation o;
    o.nss = nss_features(img);
    o.ni = niqe_score(img, nat);
    o.cp = cpbd_score(img);
    o.color = colorfulness(img);
    o.contrast = rms_contrast(img);
    o.entropy = luma_entropy(img);
    o.tile = tile_anomaly_mean(img);
    return o;
}

inline PercentileRange span_of(std::vector<double> values) {
    return {percentile(values, 1.0), percentile(values, 99.0)};
}

} // namespace caldetail

// Fit the full quality side of the artifact. Order matters: naturalness
// first (NIQE needs it), then the sweep observations, then the regressor,
// then component percentiles, and only then the composite cl/hy/slot spans
// which depend on everything before them. Detector thresholds keep their
// shipped defaults here; perception calibration refines them separately.
inline CalibrationArtifact fit_calibration(const std::vector<ImageF>& pristine,
                                           const std::string& descriptor, uint64_t seed) {
    CalibrationArtifact cal;
    cal.corpus.descriptor = descriptor;
    cal.corpus.count = static_cast<int>(pristine.size());
    cal.corpus.digest = corpus_digest(pristine);
    cal.naturalness = fit_naturalness(pristine, descriptor);

    // one observation per pristine image plus one per (image, kind); the
    // severity level rotates with (image, kind) so all 24 kind-level cells
    // get even coverage without a 24x fan-out
    std::vector<caldetail::Observation> obs;
    std::vector<double> targets;
    const double rank_scale = 100.0 / 3.0;
    Rng rng(Rng::mix(seed, 0x63616c6962ull));
    for (size_t i = 0; i < pristine.size(); ++i) {
        obs.push_back(caldetail::observe(pristine[i], cal.naturalness));
        targets.push_back(0.0);
        for (int k = 0; k < kNumDegradationKinds; ++k) {
            const auto kind = static_cast<DegradationKind>(k);
            const int level = 1 + static_cast<int>((i + static_cast<size_t>(k)) % 3);
            Rng step_rng = rng.fork(Rng::mix(i, static_cast<uint64_t>(k)));
            const DegradationStep step = sweep_step(kind, level, step_rng);
            const ImageF degraded = apply_step(pristine[i], step, step_rng);
            auto o = caldetail::observe(degraded, cal.naturalness);
            o.kind = kind;
            o.level = level;
            obs.push_back(std::move(o));
            targets.push_back(level * rank_scale);
        }
    }

    // The regressor trains only on families its features can rank: global
    // illumination shifts (haze, low light) barely move MSCN statistics, so
    // including them just drags pristine upward. They are carried by the
    // ni/cl slots instead.
    auto nss_visible = [](DegradationKind k) {
        return k != DegradationKind::Haze && k != DegradationKind::LowLight;
    };
    std::vector<NssFeatures> feats;
    std::vector<double> feat_targets;
    for (size_t i = 0; i < obs.size(); ++i) {
        if (obs[i].level > 0 && !nss_visible(obs[i].kind)) continue;
        feats.push_back(obs[i].nss);
        feat_targets.push_back(targets[i]);
    }
    cal.brisque = fit_ridge(feats, feat_targets, 0.3);

    auto collect = [&obs](auto&& get) {
        std::vector<double> v;
        v.reserve(obs.size());
        for (const auto& o : obs) v.push_back(get(o));
        return v;
    };
    PercentileTable& t = cal.percentiles;
    t["colorfulness"] = caldetail::span_of(collect([](const auto& o) { return o.color; }));
    t["rms_contrast"] = caldetail::span_of(collect([](const auto& o) { return o.contrast; }));
    t["entropy"] = caldetail::span_of(collect([](const auto& o) { return o.entropy; }));
    t["tile_anomaly"] = caldetail::span_of(collect([](const auto& o) { return o.tile; }));
    t["ni"] = caldetail::span_of(collect([](const auto& o) { return o.ni; }));
    t["cp"] = caldetail::span_of(collect([](const auto& o) { return o.cp; }));
    t["br"] = caldetail::span_of(collect(
        [&cal](const auto& o) { return ridge_predict(cal.brisque, o.nss); }));
    t["cl"] = caldetail::span_of(collect([&t](const auto& o) {
        return clarity_from_components(o.color, o.contrast, o.entropy, t);
    }));
    t["hy"] = caldetail::span_of(collect(
        [&t](const auto& o) { return distortion_from_component(o.tile, t); }));
    return cal;
}

// Five-slot measurement of one image under a fitted artifact.
inline MetricVector measure(const ImageF& img, const CalibrationArtifact& cal) {
    if (!cal.fitted()) throw ModelMissing("calibration artifact is not fitted");
    MetricVector m;
    m.ni = niqe_score(img, cal.naturalness);
    m.br = brisque_score(img, cal.brisque);
    m.cp = cpbd_score(img);
    m.cl = clarity_proxy(img, cal.percentiles);
    m.hy = local_distortion_proxy(img, cal.percentiles);
    m.normalized = {{
        percentile_normalize(cal.percentiles, "ni", m.ni),
        percentile_normalize(cal.percentiles, "br", m.br),
        percentile_normalize(cal.percentiles, "cp", m.cp),
        percentile_normalize(cal.percentiles, "cl", m.cl),
        percentile_normalize(cal.percentiles, "hy", m.hy),
    }};
    return m;
}

inline QualityScore measure_quality(const ImageF& img, const CalibrationArtifact& cal,
                                    QualityMode mode) {
    return quality_score(measure(img, cal), mode);
}

// ---- JSON round trip ------------------------------------------------------

namespace caldetail {

inline nlohmann::json vec_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Eigen::VectorXd vec_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw ConfigError(std::string(what) + ": expected array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

inline nlohmann::json mat_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd mat_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError(std::string(what) + ": expected array of arrays");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols)
            throw ConfigError(std::string(what) + ": ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

} // namespace caldetail

inline nlohmann::json calibration_to_json(const CalibrationArtifact& cal) {
    nlohmann::json j;
    j["version"] = cal.version;
    j["corpus"] = {{"descriptor", cal.corpus.descriptor},
                   {"count", cal.corpus.count},
                   {"digest", cal.corpus.digest}};
    j["naturalness"] = {{"feature_mean", caldetail::vec_json(cal.naturalness.feature_mean)},
                        {"feature_cov", caldetail::mat_json(cal.naturalness.feature_cov)},
                        {"fitted_on", cal.naturalness.fitted_on}};
    j["brisque"] = {{"weights", caldetail::vec_json(cal.brisque.weights)},
                    {"bias", cal.brisque.bias},
                    {"feat_mean", caldetail::vec_json(cal.brisque.feat_mean)},
                    {"feat_std", caldetail::vec_json(cal.brisque.feat_std)},
                    {"lambda", cal.brisque.lambda},
                    {"train_spearman", cal.brisque.train_spearman}};
    nlohmann::json pct = nlohmann::json::object();
    for (const auto& [key, range] : cal.percentiles)
        pct[key] = {{"p1", range.p1}, {"p99", range.p99}};
    j["percentiles"] = std::move(pct);
    nlohmann::json det = nlohmann::json::object();
    for (const auto& [name, member] : detector_threshold_fields())
        det[name] = cal.detectors.*member;
    j["detectors"] = std::move(det);
    return j;
}

inline CalibrationArtifact calibration_from_json(const nlohmann::json& j) {
    CalibrationArtifact cal;
    try {
        cal.version = j.at("version").get<int>();
        if (cal.version != kCalibrationVersion)
            throw ConfigError("calibration version " + std::to_string(cal.version) +
                              " unsupported (want " + std::to_string(kCalibrationVersion) + ")");
        const auto& corpus = j.at("corpus");
        cal.corpus.descriptor = corpus.at("descriptor").get<std::string>();
        cal.corpus.count = corpus.at("count").get<int>();
        cal.corpus.digest = corpus.at("digest").get<std::string>();
        const auto& nat = j.at("naturalness");
        cal.naturalness.feature_mean = caldetail::vec_from(nat.at("feature_mean"), "feature_mean");
        cal.naturalness.feature_cov = caldetail::mat_from(nat.at("feature_cov"), "feature_cov");
        cal.naturalness.fitted_on = nat.at("fitted_on").get<std::string>();
        const auto& br = j.at("brisque");
        cal.brisque.weights = caldetail::vec_from(br.at("weights"), "weights");
        cal.brisque.bias = br.at("bias").get<double>();
        cal.brisque.feat_mean = caldetail::vec_from(br.at("feat_mean"), "feat_mean");
        cal.brisque.feat_std = caldetail::vec_from(br.at("feat_std"), "feat_std");
        cal.brisque.lambda = br.at("lambda").get<double>();
        cal.brisque.train_spearman = br.at("train_spearman").get<double>();
        for (const auto& [key, range] : j.at("percentiles").items())
            cal.percentiles[key] = {range.at("p1").get<double>(), range.at("p99").get<double>()};
        const auto& det = j.at("detectors");
        for (const auto& [name, member] : detector_threshold_fields())
            if (det.contains(name)) cal.detectors.*member = det.at(name).get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("calibration artifact malformed: ") + e.what());
    }
    if (cal.naturalness.feature_mean.size() != kNssFeatureCount ||
        cal.naturalness.feature_cov.rows() != kNssFeatureCount ||
        cal.naturalness.feature_cov.cols() != kNssFeatureCount ||
        cal.brisque.weights.size() != kNssFeatureCount)
        throw ConfigError("calibration artifact has wrong feature dimensions");
    return cal;
}

inline void save_calibration(const CalibrationArtifact& cal, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write calibration: " + path);
    out << calibration_to_json(cal).dump(2) << "\n";
    if (!out) throw IoError("short write: " + path);
}

inline CalibrationArtifact load_calibration(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read calibration: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("calibration artifact is not JSON: ") + e.what());
    }
    return calibration_from_json(j);
}

// CLI flag wins; Q_AGENT_CALIBRATION is the fallback.
inline std::string resolve_calibration_path(const std::string& cli_path) {
    if (!cli_path.empty()) return cli_path;
    if (const char* env = std::getenv(kCalibrationEnvVar); env && *env) return env;
    throw CalibrationMissing("no calibration artifact: pass --calibration or set " +
                             std::string(kCalibrationEnvVar));
}

} // namespace qagent
