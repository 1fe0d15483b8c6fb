#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "qagent/calibration.hpp"
#include "qagent/iqa/brisque.hpp"
#include "qagent/iqa/cpbd.hpp"
#include "qagent/iqa/fits.hpp"
#include "qagent/iqa/metrics.hpp"
#include "qagent/iqa/mscn.hpp"
#include "qagent/iqa/niqe.hpp"
#include "qagent/iqa/proxies.hpp"
#include "qagent/ops.hpp"
#include "testutil.hpp"

using namespace qagent;

TEST_CASE("mscn of a constant plane is zero") {
    Plane p(32, 24, 0.5f);
    MscnField f = mscn_field(p);
    for (size_t i = 0; i < p.size(); ++i) {
        CHECK(std::abs(f.mscn.v[i]) < 1e-5f);
        CHECK(std::abs(f.mu.v[i] - 0.5f) < 1e-5f);
        CHECK(f.sigma.v[i] < 1e-3f);
    }
}

TEST_CASE("mscn matches a direct windowed oracle") {
    Plane p = testutil::noise_plane(19, 16, 11);
    MscnField f = mscn_field(p);

    const auto g = gaussian_kernel1d(7, 7.0 / 6.0);
    auto window = [&](const Plane& src, int cx, int cy) {
        double acc = 0.0;
        for (int j = -3; j <= 3; ++j)
            for (int i = -3; i <= 3; ++i) {
                const int x = reflect101(cx + i, src.width);
                const int y = reflect101(cy + j, src.height);
                acc += static_cast<double>(g[static_cast<size_t>(i + 3)]) *
                       g[static_cast<size_t>(j + 3)] * src.at(x, y);
            }
        return acc;
    };
    Plane p2(p.width, p.height);
    for (size_t i = 0; i < p.size(); ++i) p2.v[i] = p.v[i] * p.v[i];

    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            const double mu = window(p, x, y);
            const double var = std::max(0.0, window(p2, x, y) - mu * mu);
            const double want = (p.at(x, y) - mu) / (std::sqrt(var) + kMscnC);
            CHECK(std::abs(f.mu.at(x, y) - mu) < 5e-6);
            CHECK(std::abs(f.mscn.at(x, y) - want) < 1e-3);
        }
}

TEST_CASE("mscn rejects tiny planes") {
    CHECK_THROWS_AS(mscn_field(Plane(15, 40)), ImageTooSmall);
    CHECK_THROWS_AS(mscn_field(Plane(40, 15)), ImageTooSmall);
}

TEST_CASE("mscn pair products multiply the right neighbors") {
    Plane m(4, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) m.at(x, y) = static_cast<float>(1 + x + 4 * y);

    Plane h = mscn_products(m, PairOrientation::H);
    CHECK(h.at(0, 0) == m.at(0, 0) * m.at(1, 0));
    CHECK(h.at(3, 1) == 0.0f); // right edge has no neighbor

    Plane v = mscn_products(m, PairOrientation::V);
    CHECK(v.at(2, 1) == m.at(2, 1) * m.at(2, 2));
    CHECK(v.at(1, 2) == 0.0f);

    Plane d1 = mscn_products(m, PairOrientation::D1);
    CHECK(d1.at(1, 1) == m.at(1, 1) * m.at(2, 2));

    Plane d2 = mscn_products(m, PairOrientation::D2);
    CHECK(d2.at(1, 1) == m.at(1, 1) * m.at(0, 2));
    CHECK(d2.at(0, 0) == 0.0f); // left edge
}

TEST_CASE("ggd fit recovers generator shapes") {
    Rng rng(123);

    SECTION("gaussian field => alpha near 2") {
        std::vector<double> xs(40000);
        for (double& x : xs) x = 0.8 * rng.next_gaussian();
        GgdFit fit = ggd_fit(xs.begin(), xs.end());
        CHECK(fit.alpha > 1.8);
        CHECK(fit.alpha < 2.2);
        CHECK(fit.sigma_sq == Catch::Approx(0.64).epsilon(0.06));
    }

    SECTION("laplacian field => alpha near 1") {
        const double b = 0.5;
        std::vector<double> xs(40000);
        for (double& x : xs) {
            const double u = rng.uniform(-0.5, 0.5);
            x = -b * (u < 0 ? -1.0 : 1.0) * std::log(std::max(1e-15, 1.0 - 2.0 * std::abs(u)));
        }
        GgdFit fit = ggd_fit(xs.begin(), xs.end());
        CHECK(fit.alpha > 0.85);
        CHECK(fit.alpha < 1.15);
        CHECK(fit.sigma_sq == Catch::Approx(2.0 * b * b).epsilon(0.08));
    }

    SECTION("near-uniform field pushes alpha high") {
        std::vector<double> xs(20000);
        for (double& x : xs) x = rng.uniform(-1.0, 1.0);
        CHECK(ggd_fit(xs.begin(), xs.end()).alpha > 4.0);
    }

    SECTION("degenerate and empty inputs") {
        std::vector<double> zeros(100, 0.0);
        GgdFit fit = ggd_fit(zeros.begin(), zeros.end());
        CHECK(fit.alpha == 2.0);
        CHECK(fit.sigma_sq == 0.0);
        std::vector<double> none;
        CHECK_THROWS_AS(ggd_fit(none.begin(), none.end()), EmptyInput);
    }
}

TEST_CASE("aggd fit separates the two sides") {
    Rng rng(321);

    SECTION("symmetric gaussian balances sides") {
        std::vector<double> xs(60000);
        for (double& x : xs) x = rng.next_gaussian();
        AggdFit fit = aggd_fit(xs.begin(), xs.end());
        CHECK(fit.alpha > 1.7);
        CHECK(fit.alpha < 2.3);
        CHECK(fit.sigma_l_sq == Catch::Approx(fit.sigma_r_sq).epsilon(0.1));
        CHECK(std::abs(fit.mean) < 0.02);
    }

    SECTION("right-heavy field leans right") {
        std::vector<double> xs(60000);
        for (double& x : xs) {
            const double gauss = rng.next_gaussian();
            x = rng.next_double() < 0.5 ? std::abs(gauss) : -0.4 * std::abs(gauss);
        }
        AggdFit fit = aggd_fit(xs.begin(), xs.end());
        CHECK(fit.sigma_r_sq > fit.sigma_l_sq);
        CHECK(fit.mean > 0.05);

        // the reported mean must be the closed-form function of the fitted params
        const double gr = std::tgamma(2.0 / fit.alpha) / std::tgamma(1.0 / fit.alpha);
        const double konst = std::sqrt(std::tgamma(1.0 / fit.alpha) / std::tgamma(3.0 / fit.alpha));
        const double want = (std::sqrt(fit.sigma_r_sq) - std::sqrt(fit.sigma_l_sq)) * konst * gr;
        CHECK(fit.mean == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("rho table inversion round trips known shapes") {
    for (double alpha : {0.5, 1.0, 2.0, 5.0}) {
        const double num = std::tgamma(2.0 / alpha);
        const double rho = num * num / (std::tgamma(1.0 / alpha) * std::tgamma(3.0 / alpha));
        CHECK(fitdetail::rho_table().invert(rho) == Catch::Approx(alpha).margin(5e-3));
    }
}

TEST_CASE("feature moments match a brute-force oracle") {
    Rng rng(99);
    std::vector<NssFeatures> rows(5);
    for (auto& r : rows)
        for (double& x : r) x = rng.uniform(-2.0, 2.0);

    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    feature_moments(rows, mean, cov);

    for (int j = 0; j < kNssFeatureCount; ++j) {
        double m = 0.0;
        for (const auto& r : rows) m += r[static_cast<size_t>(j)];
        m /= static_cast<double>(rows.size());
        CHECK(mean(j) == Catch::Approx(m).margin(1e-12));
    }
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double acc = 0.0;
            for (const auto& r : rows)
                acc += (r[static_cast<size_t>(a)] - mean(a)) * (r[static_cast<size_t>(b)] - mean(b));
            acc /= static_cast<double>(rows.size() - 1);
            CHECK(cov(a, b) == Catch::Approx(acc).margin(1e-12));
        }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("naturalness distance matches the closed form on diagonal covariances") {
    Eigen::VectorXd ma(2), mb(2);
    ma << 1.0, 0.0;
    mb << 0.0, 0.0;
    Eigen::MatrixXd ca = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd cb = Eigen::MatrixXd::Identity(2, 2);
    cb(0, 0) = 3.0;

    const double eps = 1e-6 * 3.0 / 2.0; // trace(pooled)/n with pooled = diag(2, 1)
    const double want = std::sqrt(1.0 / (2.0 + eps));
    CHECK(naturalness_distance(ma, ca, mb, cb) == Catch::Approx(want).margin(1e-12));
    CHECK(naturalness_distance(ma, ca, mb, cb) ==
          Catch::Approx(naturalness_distance(mb, cb, ma, ca)).margin(1e-12));
    CHECK(naturalness_distance(ma, ca, ma, ca) == 0.0);
}

TEST_CASE("spearman uses averaged ranks for ties") {
    CHECK(spearman_rho({1, 2, 3}, {5, 9, 11}) == Catch::Approx(1.0).margin(1e-12));
    CHECK(spearman_rho({1, 2, 3}, {11, 9, 5}) == Catch::Approx(-1.0).margin(1e-12));
    // ranks of {10,20,20} are {1, 2.5, 2.5}; hand pearson = sqrt(3)/2
    CHECK(spearman_rho({1, 2, 3}, {10, 20, 20}) ==
          Catch::Approx(std::sqrt(3.0) / 2.0).margin(1e-12));
    CHECK_THROWS_AS(spearman_rho({1, 2}, {1, 2, 3}), LengthMismatch);
}

TEST_CASE("ridge regression recovers a noisy linear rule") {
    Rng rng(2024);
    std::vector<NssFeatures> feats(240);
    std::vector<double> targets(240);
    for (size_t i = 0; i < feats.size(); ++i) {
        for (double& x : feats[i]) x = rng.next_gaussian();
        targets[i] = 50.0 + 12.0 * feats[i][0] - 7.0 * feats[i][5] + 3.0 * feats[i][17] +
                     0.5 * rng.next_gaussian();
    }
    RidgeRegressor r = fit_ridge(feats, targets, 1.0);
    CHECK(r.train_spearman > 0.95);

    // predictions are clamped to the score range
    NssFeatures far{};
    for (double& x : far) x = 50.0;
    const double hi = ridge_predict(r, far);
    CHECK(hi >= 0.0);
    CHECK(hi <= 100.0);
    for (double& x : far) x = -50.0;
    const double lo = ridge_predict(r, far);
    CHECK(lo >= 0.0);
    CHECK(lo <= 100.0);

    RidgeRegressor blank;
    CHECK_THROWS_AS(ridge_predict(blank, feats[0]), ModelMissing);
}

TEST_CASE("quality score arithmetic") {
    MetricVector v;
    v.cp = v.cl = v.hy = 1.0;
    CHECK(quality_score(v, QualityMode::RawEq1).value == Catch::Approx(0.6).margin(1e-15));

    MetricVector zero;
    CHECK(quality_score(zero, QualityMode::RawEq1).value == 0.0);

    SECTION("raw mode is exactly linear in each slot") {
        MetricVector a;
        a.ni = 0.25;
        a.br = 30.0;
        a.cp = 0.5;
        a.cl = 0.4;
        a.hy = 0.7;
        MetricVector b = a;
        const double delta = 0.125;
        b.cp += delta;
        const double diff =
            quality_score(b, QualityMode::RawEq1).value - quality_score(a, QualityMode::RawEq1).value;
        CHECK(diff == Catch::Approx(delta / 5.0).margin(1e-15));
        b = a;
        b.ni += delta;
        const double down =
            quality_score(b, QualityMode::RawEq1).value - quality_score(a, QualityMode::RawEq1).value;
        CHECK(down == Catch::Approx(-delta / 5.0).margin(1e-15));
    }

    SECTION("normalized mode flips the badness slots") {
        MetricVector m;
        m.normalized = {{0.2, 0.4, 0.9, 0.8, 0.6}};
        const double want = ((1.0 - 0.2) + (1.0 - 0.4) + 0.9 + 0.8 + 0.6) / 5.0;
        CHECK(quality_score(m, QualityMode::Normalized).value == Catch::Approx(want).margin(1e-15));

        MetricVector bare;
        CHECK_THROWS_AS(quality_score(bare, QualityMode::Normalized), MissingSlots);
    }
}

TEST_CASE("percentile normalization clamps and handles degenerate spans") {
    PercentileTable t;
    t["x"] = {2.0, 4.0};
    t["flat"] = {1.0, 1.0};
    CHECK(percentile_normalize(t, "x", 3.0) == Catch::Approx(0.5));
    CHECK(percentile_normalize(t, "x", 1.0) == 0.0);
    CHECK(percentile_normalize(t, "x", 9.0) == 1.0);
    CHECK(percentile_normalize(t, "flat", 7.0) == 0.5);
    CHECK_THROWS_AS(percentile_normalize(t, "absent", 0.0), ModelMissing);
}

TEST_CASE("cpbd scores hard edges as sharp and blurred edges as soft") {
    // vertical bands, 16 px period, hard edges
    ImageF bands(128, 128);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 128; ++y)
            for (int x = 0; x < 128; ++x)
                bands.at(c, x, y) = (x / 16) % 2 ? 0.85f : 0.15f;

    const double sharp = cpbd_score(bands);
    CHECK(sharp >= 0.9);
    CHECK(sharp <= 1.0);

    ImageF blurred = convolve_image(bands, disk_kernel(4.0));
    bool no_edges = false;
    const double soft = cpbd_score(blurred, &no_edges);
    CHECK_FALSE(no_edges);
    CHECK(soft >= 0.0);
    CHECK(sharp - soft >= 0.3);

    SECTION("deterministic") { CHECK(cpbd_score(bands) == sharp); }
}

TEST_CASE("cpbd flags images without edges") {
    ImageF flat(96, 96, 0.4f);
    bool no_edges = false;
    CHECK(cpbd_score(flat, &no_edges) == 0.0);
    CHECK(no_edges);
}

TEST_CASE("blockiness index rises on 8-aligned block structure") {
    Rng rng(5);
    Plane blocky(64, 64);
    for (int by = 0; by < 8; ++by)
        for (int bx = 0; bx < 8; ++bx) {
            const float base = static_cast<float>(rng.uniform(0.2, 0.8));
            for (int y = by * 8; y < by * 8 + 8; ++y)
                for (int x = bx * 8; x < bx * 8 + 8; ++x)
                    blocky.at(x, y) = base + static_cast<float>(rng.uniform(-0.01, 0.01));
        }
    CHECK(blockiness_index(blocky) > 1.5);

    Plane smooth(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) smooth.at(x, y) = (x + y) / 126.0f;
    CHECK(blockiness_index(smooth) == Catch::Approx(1.0).margin(0.3));

    CHECK(blockiness_index(Plane(64, 64, 0.5f)) == 1.0);
}

TEST_CASE("scalar appearance components behave on endpoints") {
    ImageF gray(96, 96, 0.5f);
    CHECK(colorfulness(gray) == 0.0);
    CHECK(rms_contrast(gray) == 0.0);
    CHECK(luma_entropy(gray) == Catch::Approx(0.0).margin(1e-12));

    ImageF colorful = testutil::noise_image(96, 96, 17);
    CHECK(colorfulness(colorful) > 0.3);
    CHECK(luma_entropy(colorful) > 5.0);

    ImageF tiny(32, 32, 0.5f);
    CHECK_THROWS_AS(tile_anomaly_mean(tiny), ImageTooSmall);
}

static CalibrationArtifact tiny_artifact() {
    CalibrationArtifact cal;
    cal.corpus = {"unit", 3, "deadbeefdeadbeef"};
    cal.naturalness.feature_mean = Eigen::VectorXd::LinSpaced(kNssFeatureCount, 0.0, 1.0);
    cal.naturalness.feature_cov =
        Eigen::MatrixXd::Identity(kNssFeatureCount, kNssFeatureCount) * 0.5;
    cal.naturalness.feature_cov(0, 1) = cal.naturalness.feature_cov(1, 0) = 0.125;
    cal.naturalness.fitted_on = "unit";
    cal.brisque.weights = Eigen::VectorXd::LinSpaced(kNssFeatureCount, -1.0, 1.0);
    cal.brisque.bias = 42.5;
    cal.brisque.feat_mean = Eigen::VectorXd::Constant(kNssFeatureCount, 0.25);
    cal.brisque.feat_std = Eigen::VectorXd::Constant(kNssFeatureCount, 2.0);
    cal.brisque.lambda = 1.0;
    cal.brisque.train_spearman = 0.91;
    for (const char* key : {"ni", "br", "cp", "cl", "hy", "colorfulness", "rms_contrast",
                            "entropy", "tile_anomaly"})
        cal.percentiles[key] = {0.125, 0.875};
    cal.detectors.blur_vol = 3.5e-3;
    cal.detectors.lr_pristine_hf = 0.09;
    return cal;
}

TEST_CASE("calibration artifact json round trip is exact") {
    const CalibrationArtifact cal = tiny_artifact();
    std::filesystem::create_directories(testutil::tmp_dir());
    const std::string path = testutil::tmp_dir() + "/cal_roundtrip.json";
    save_calibration(cal, path);
    const CalibrationArtifact back = load_calibration(path);

    CHECK(back.version == cal.version);
    CHECK(back.corpus.descriptor == cal.corpus.descriptor);
    CHECK(back.corpus.count == cal.corpus.count);
    CHECK(back.corpus.digest == cal.corpus.digest);
    auto exact = [](const auto& a, const auto& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() &&
               (a - b).cwiseAbs().maxCoeff() == 0.0;
    };
    CHECK(exact(back.naturalness.feature_mean, cal.naturalness.feature_mean));
    CHECK(exact(back.naturalness.feature_cov, cal.naturalness.feature_cov));
    CHECK(back.naturalness.fitted_on == cal.naturalness.fitted_on);
    CHECK(exact(back.brisque.weights, cal.brisque.weights));
    CHECK(back.brisque.bias == cal.brisque.bias);
    CHECK(exact(back.brisque.feat_mean, cal.brisque.feat_mean));
    CHECK(exact(back.brisque.feat_std, cal.brisque.feat_std));
    CHECK(back.brisque.lambda == cal.brisque.lambda);
    CHECK(back.brisque.train_spearman == cal.brisque.train_spearman);
    REQUIRE(back.percentiles.size() == cal.percentiles.size());
    for (const auto& [key, range] : cal.percentiles) {
        CHECK(back.percentiles.at(key).p1 == range.p1);
        CHECK(back.percentiles.at(key).p99 == range.p99);
    }
    for (const auto& [name, member] : detector_threshold_fields())
        CHECK(back.detectors.*member == cal.detectors.*member);
}

TEST_CASE("calibration loading rejects bad inputs") {
    CHECK_THROWS_AS(load_calibration(testutil::tmp_dir() + "/nope_missing.json"), IoError);

    std::filesystem::create_directories(testutil::tmp_dir());
    const std::string garbled = testutil::tmp_dir() + "/cal_garbled.json";
    std::ofstream(garbled) << "{ not json";
    CHECK_THROWS_AS(load_calibration(garbled), ConfigError);

    nlohmann::json j = calibration_to_json(tiny_artifact());
    j["version"] = kCalibrationVersion + 1;
    const std::string wrong = testutil::tmp_dir() + "/cal_wrong_version.json";
    std::ofstream(wrong) << j.dump();
    CHECK_THROWS_AS(load_calibration(wrong), ConfigError);

    j["version"] = kCalibrationVersion;
    j["naturalness"]["feature_mean"] = {1.0, 2.0}; // wrong dimension
    const std::string shape = testutil::tmp_dir() + "/cal_wrong_shape.json";
    std::ofstream(shape) << j.dump();
    CHECK_THROWS_AS(load_calibration(shape), ConfigError);
}

TEST_CASE("calibration path resolution prefers the flag over the environment") {
    unsetenv(kCalibrationEnvVar);
    CHECK(resolve_calibration_path("/a/b.json") == "/a/b.json");
    CHECK_THROWS_AS(resolve_calibration_path(""), CalibrationMissing);
    setenv(kCalibrationEnvVar, "/env/cal.json", 1);
    CHECK(resolve_calibration_path("") == "/env/cal.json");
    CHECK(resolve_calibration_path("/a/b.json") == "/a/b.json");
    unsetenv(kCalibrationEnvVar);
}

TEST_CASE("sweep steps stay inside generator ranges and rotate severity") {
    Rng rng(8);
    for (int k = 0; k < kNumDegradationKinds; ++k)
        for (int level = 1; level <= 3; ++level) {
            Rng fork = rng.fork(static_cast<uint64_t>(k * 4 + level));
            const DegradationStep step = sweep_step(static_cast<DegradationKind>(k), level, fork);
            CHECK(step.kind() == static_cast<DegradationKind>(k));
            CHECK_NOTHROW(validate_step(step));
            CHECK(step.severity == static_cast<Severity>(level - 1));
        }
    Rng fork = rng.fork(1);
    CHECK_THROWS_AS(sweep_step(DegradationKind::Noise, 0, fork), ParamOutOfRange);
    CHECK_THROWS_AS(sweep_step(DegradationKind::Noise, 4, fork), ParamOutOfRange);
}

TEST_CASE("corpus digest tracks content") {
    ImageF a = testutil::noise_image_u8(24, 24, 1);
    ImageF b = testutil::noise_image_u8(24, 24, 2);
    const std::string d1 = corpus_digest({a, b});
    CHECK(d1 == corpus_digest({a, b}));
    CHECK(d1 != corpus_digest({b, a}));
    ImageF a2 = a;
    a2.at(0, 3, 3) += 1.0f / 255.0f;
    CHECK(d1 != corpus_digest({a2, b}));
    CHECK(d1.size() == 16);
}
