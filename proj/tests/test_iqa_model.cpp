#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qagent/calibration.hpp"
#include "qagent/degrade.hpp"
#include "qagent/synth.hpp"
#include "testcal.hpp"
#include "testutil.hpp"

using namespace qagent;

namespace {

// fresh sources outside the calibration corpus
ImageF held_out(int i) { return synth_image(160, 160, 900100 + static_cast<uint64_t>(i)); }

ImageF degraded_once(const ImageF& src, DegradationKind kind, int level, uint64_t salt) {
    Rng rng(Rng::mix(salt, static_cast<uint64_t>(level)));
    const DegradationStep step = sweep_step(kind, level, rng);
    return apply_step(src, step, rng);
}

} // namespace

TEST_CASE("fitted artifact passes its own sanity checks") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    CHECK(cal.fitted());
    CHECK(cal.corpus.count == 52);
    CHECK(cal.brisque.train_spearman >= 0.8);
    for (const char* key : {"ni", "br", "cp", "cl", "hy", "colorfulness", "rms_contrast",
                            "entropy", "tile_anomaly"}) {
        REQUIRE(cal.percentiles.count(key) == 1);
        CHECK(cal.percentiles.at(key).p99 > cal.percentiles.at(key).p1);
    }
}

TEST_CASE("niqe separates pristine from heavy noise") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    int wins = 0;
    const int pairs = 20;
    for (int i = 0; i < pairs; ++i) {
        const ImageF clean = held_out(i);
        const ImageF noisy = degraded_once(clean, DegradationKind::Noise, 3, 31000 + i);
        const double score_clean = niqe_score(clean, cal.naturalness);
        const double score_noisy = niqe_score(noisy, cal.naturalness);
        CHECK(score_clean >= 0.0);
        CHECK(score_noisy >= 0.0);
        if (score_clean < score_noisy) ++wins;
    }
    CHECK(wins >= 19);
}

TEST_CASE("niqe is deterministic") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    const ImageF img = held_out(0);
    CHECK(niqe_score(img, cal.naturalness) == niqe_score(img, cal.naturalness));
    NaturalnessModel blank;
    CHECK_THROWS_AS(niqe_score(img, blank), ModelMissing);
}

TEST_CASE("brisque ranks degradation severity") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    double clean_mean = 0.0, heavy_mean = 0.0;
    const int n = 10;
    for (int i = 0; i < n; ++i) {
        const ImageF clean = held_out(40 + i);
        const ImageF heavy = degraded_once(clean, DegradationKind::Noise, 3, 32000 + i);
        const double s_clean = brisque_score(clean, cal.brisque);
        const double s_heavy = brisque_score(heavy, cal.brisque);
        CHECK(s_clean >= 0.0);
        CHECK(s_clean <= 100.0);
        CHECK(s_heavy >= 0.0);
        CHECK(s_heavy <= 100.0);
        clean_mean += s_clean;
        heavy_mean += s_heavy;
    }
    clean_mean /= n;
    heavy_mean /= n;
    CHECK(heavy_mean - clean_mean >= 10.0);
}

TEST_CASE("noise drives ni up") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    int wins = 0;
    for (int i = 0; i < 10; ++i) {
        const ImageF src = held_out(60 + i);
        const double lo = niqe_score(degraded_once(src, DegradationKind::Noise, 1, 33000 + i),
                                     cal.naturalness);
        const double hi = niqe_score(degraded_once(src, DegradationKind::Noise, 3, 33000 + i),
                                     cal.naturalness);
        if (lo < hi) ++wins;
    }
    CHECK(wins >= 9);
}

TEST_CASE("defocus drives cp down") {
    int wins = 0;
    for (int i = 0; i < 10; ++i) {
        const ImageF src = held_out(70 + i);
        const ImageF blurred = degraded_once(src, DegradationKind::DefocusBlur, 2, 34000 + i);
        if (cpbd_score(blurred) < cpbd_score(src)) ++wins;
    }
    CHECK(wins >= 9);
}

TEST_CASE("harsh jpeg drives hy down") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    int wins = 0;
    for (int i = 0; i < 10; ++i) {
        const ImageF src = held_out(80 + i);
        const ImageF coded = degraded_once(src, DegradationKind::Jpeg, 3, 35000 + i);
        const double before = local_distortion_proxy(src, cal.percentiles);
        const double after = local_distortion_proxy(coded, cal.percentiles);
        if (after < before) ++wins;
    }
    CHECK(wins >= 8);
}

TEST_CASE("haze drives cl down") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    int wins = 0;
    for (int i = 0; i < 10; ++i) {
        const ImageF src = held_out(90 + i);
        const ImageF hazed = degraded_once(src, DegradationKind::Haze, 3, 36000 + i);
        if (clarity_proxy(hazed, cal.percentiles) < clarity_proxy(src, cal.percentiles)) ++wins;
    }
    CHECK(wins >= 8);
}

TEST_CASE("constant gray image has near-zero clarity") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    const ImageF gray(128, 128, 0.5f);
    CHECK(clarity_proxy(gray, cal.percentiles) <= 0.05);
}

TEST_CASE("measure fills every slot with finite normalized values") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    const ImageF img = degraded_once(held_out(5), DegradationKind::Rain, 2, 37000);
    const MetricVector m = measure(img, cal);
    REQUIRE(m.normalized.has_value());
    for (double v : {m.ni, m.br, m.cp, m.cl, m.hy}) CHECK(std::isfinite(v));
    for (double v : *m.normalized) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // normalized slots must agree with the raw slots pushed through the table
    CHECK((*m.normalized)[0] == percentile_normalize(cal.percentiles, "ni", m.ni));
    CHECK((*m.normalized)[2] == percentile_normalize(cal.percentiles, "cp", m.cp));

    const MetricVector again = measure(img, cal);
    CHECK(again.ni == m.ni);
    CHECK(again.br == m.br);
    CHECK(again.cp == m.cp);
    CHECK(again.cl == m.cl);
    CHECK(again.hy == m.hy);

    CalibrationArtifact blank;
    CHECK_THROWS_AS(measure(img, blank), ModelMissing);
}

TEST_CASE("quality drops under degradation and the modes agree on direction") {
    const CalibrationArtifact& cal = testutil::test_calibration();
    int wins_norm = 0, wins_raw = 0;
    const int pairs = 8;
    for (int i = 0; i < pairs; ++i) {
        const ImageF clean = held_out(110 + i);
        const auto kind = static_cast<DegradationKind>(i % kNumDegradationKinds);
        const ImageF bad = degraded_once(clean, kind, 3, 38000 + i);
        const MetricVector mc = measure(clean, cal);
        const MetricVector mb = measure(bad, cal);
        if (quality_score(mb, QualityMode::Normalized).value <
            quality_score(mc, QualityMode::Normalized).value)
            ++wins_norm;
        if (quality_score(mb, QualityMode::RawEq1).value <
            quality_score(mc, QualityMode::RawEq1).value)
            ++wins_raw;
    }
    CHECK(wins_norm >= 6);
    CHECK(wins_raw >= 6);
}
