#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "qagent/synth.hpp"
#include "testutil.hpp"

using namespace qagent;

TEST_CASE("synthesis is deterministic per seed") {
    ImageF a = synth_image(96, 96, 5);
    ImageF b = synth_image(96, 96, 5);
    REQUIRE(mean_abs_diff(a, b) == 0.0);
    ImageF c = synth_image(96, 96, 6);
    REQUIRE(mean_abs_diff(a, c) > 1.0 / 255.0);
}

TEST_CASE("renders sit in a photographic exposure regime") {
    for (uint64_t seed = 0; seed < 12; ++seed) {
        ImageF img = synth_image(128, 128, seed);
        Plane y = to_luma(img);
        const double mean = plane_mean(y);
        const double rms = std::sqrt(plane_variance(y));
        REQUIRE(mean > 0.25); // shadow-heavy is fine; black-crush is not
        REQUIRE(mean < 0.62);
        REQUIRE(rms > 0.14);
        REQUIRE(percentile_of_plane(y, 99.5) > 0.8);
        REQUIRE(percentile_of_plane(y, 0.5) < 0.15);
        REQUIRE(all_finite(img));
    }
}

TEST_CASE("corpus writer emits the requested files") {
    const std::string dir = testutil::tmp_dir() + "/synth_corpus_t";
    auto paths = synth_corpus(dir, 4, 48, 48, 77);
    REQUIRE(paths.size() == 4);
    for (const std::string& p : paths) {
        REQUIRE(std::filesystem::exists(p));
        ImageF img = load_image(p);
        REQUIRE(img.width == 48);
    }
    REQUIRE_THROWS_AS(synth_corpus(dir, 0, 8, 8, 1), ParamOutOfRange);
}
