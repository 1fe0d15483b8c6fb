#include <catch2/catch_amalgamated.hpp>

#include "qagent/image.hpp"
#include "qagent/rng.hpp"
#include "testutil.hpp"

using namespace qagent;

TEST_CASE("planar layout and accessors") {
    ImageF img(4, 3);
    REQUIRE(img.plane_size() == 12);
    REQUIRE(img.data.size() == 36);
    img.at(2, 1, 2) = 0.5f;
    REQUIRE(img.plane(2)[static_cast<size_t>(2) * 4 + 1] == 0.5f);
    REQUIRE(img.at(0, 0, 0) == 0.0f);
}

TEST_CASE("luma uses 601 weights") {
    ImageF img(2, 2);
    std::fill(img.plane(0), img.plane(0) + 4, 1.0f); // pure red
    Plane y = to_luma(img);
    REQUIRE(y.at(0, 0) == Catch::Approx(0.299).margin(1e-6));

    ImageF g(2, 2);
    std::fill(g.plane(1), g.plane(1) + 4, 1.0f);
    REQUIRE(to_luma(g).at(1, 1) == Catch::Approx(0.587).margin(1e-6));

    ImageF b(2, 2);
    std::fill(b.plane(2), b.plane(2) + 4, 1.0f);
    REQUIRE(to_luma(b).at(0, 1) == Catch::Approx(0.114).margin(1e-6));

    // gray in = same gray out
    ImageF w(2, 2);
    std::fill(w.data.begin(), w.data.end(), 0.42f);
    REQUIRE(to_luma(w).at(1, 0) == Catch::Approx(0.42).margin(1e-6));
}

TEST_CASE("clamp_image pins out-of-range samples") {
    ImageF img(2, 1);
    img.at(0, 0, 0) = -0.25f;
    img.at(0, 1, 0) = 1.75f;
    clamp_image(img);
    REQUIRE(img.at(0, 0, 0) == 0.0f);
    REQUIRE(img.at(0, 1, 0) == 1.0f);
}

TEST_CASE("mean_abs_diff and dimension guard") {
    ImageF a = testutil::noise_image(8, 6, 1);
    ImageF b = a;
    REQUIRE(mean_abs_diff(a, b) == 0.0);
    for (float& v : b.data) v = std::min(1.0f, v + 0.25f);
    REQUIRE(mean_abs_diff(a, b) > 0.0);
    ImageF c(7, 6);
    REQUIRE_THROWS_AS(mean_abs_diff(a, c), DimMismatch);
}

TEST_CASE("plane statistics") {
    Plane p(4, 1);
    p.v = {1.0f, 2.0f, 3.0f, 4.0f};
    REQUIRE(plane_mean(p) == Catch::Approx(2.5));
    REQUIRE(plane_variance(p) == Catch::Approx(1.25));
}

TEST_CASE("rng streams are deterministic and fork-independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng root(7);
    Rng f1 = root.fork(1), f2 = root.fork(2);
    REQUIRE(f1.next_u64() != f2.next_u64());
    // forking does not disturb the parent stream
    Rng root2(7);
    (void)root2.fork(1);
    (void)root2.fork(2);
    Rng root3(7);
    REQUIRE(root2.next_u64() == root3.next_u64());

    Rng g(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = g.next_double();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const int k = g.uniform_int(3, 9);
        REQUIRE(k >= 3);
        REQUIRE(k <= 9);
    }
}

TEST_CASE("gaussian draws have plausible first two moments") {
    Rng g(99);
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = g.next_gaussian();
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.03);
    REQUIRE(var == Catch::Approx(1.0).margin(0.05));
}
