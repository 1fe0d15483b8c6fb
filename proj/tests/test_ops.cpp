#include <catch2/catch_amalgamated.hpp>

#include "qagent/ops.hpp"
#include "testutil.hpp"

using namespace qagent;

namespace {

// Straight quadruple loop with the same border rule; the oracle for the
// production convolution paths.
Plane convolve_naive(const Plane& p, const Kernel2D& k) {
    Plane out(p.width, p.height);
    const int rx = k.width / 2, ry = k.height / 2;
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < k.height; ++ky)
                for (int kx = 0; kx < k.width; ++kx)
                    acc += static_cast<double>(k.at(kx, ky)) *
                           p.at(reflect101(x + kx - rx, p.width), reflect101(y + ky - ry, p.height));
            out.at(x, y) = static_cast<float>(acc);
        }
    return out;
}

} // namespace

TEST_CASE("reflect101 mirrors without repeating the edge") {
    // n=5: ... 2 1 | 0 1 2 3 4 | 3 2 1 0 1 ...
    REQUIRE(reflect101(-1, 5) == 1);
    REQUIRE(reflect101(-2, 5) == 2);
    REQUIRE(reflect101(0, 5) == 0);
    REQUIRE(reflect101(4, 5) == 4);
    REQUIRE(reflect101(5, 5) == 3);
    REQUIRE(reflect101(6, 5) == 2);
    REQUIRE(reflect101(8, 5) == 0);
    REQUIRE(reflect101(0, 1) == 0);
    REQUIRE(reflect101(-3, 1) == 0);
}

TEST_CASE("convolve2d matches the naive oracle") {
    Plane p = testutil::noise_plane(17, 13, 3);
    Kernel2D k(5, 3);
    Rng rng(11);
    for (float& t : k.taps) t = static_cast<float>(rng.uniform(-1.0, 1.0));
    Plane got = convolve2d(p, k);
    Plane want = convolve_naive(p, k);
    for (size_t i = 0; i < got.v.size(); ++i)
        REQUIRE(got.v[i] == Catch::Approx(want.v[i]).margin(1e-6));
}

TEST_CASE("separable gaussian equals its full 2d kernel") {
    Plane p = testutil::noise_plane(24, 18, 5);
    const double sigma = 7.0 / 6.0;
    auto k1 = gaussian_kernel1d(7, sigma);
    Plane sep = convolve_sep(p, k1, k1);
    Plane full = convolve2d(p, gaussian_kernel2d(7, sigma));
    for (size_t i = 0; i < sep.v.size(); ++i)
        REQUIRE(sep.v[i] == Catch::Approx(full.v[i]).margin(2e-6));
}

TEST_CASE("kernel guards") {
    Plane p = testutil::noise_plane(8, 8, 1);
    REQUIRE_THROWS_AS(convolve2d(p, Kernel2D(16, 3)), ParamOutOfRange); // even width
    REQUIRE_THROWS_AS(convolve2d(p, Kernel2D(17, 17)), KernelTooLarge);
}

TEST_CASE("motion kernel concentrates along its angle") {
    Kernel2D k = motion_kernel(13.0, 0.0);
    REQUIRE(k.sum() == Catch::Approx(1.0).margin(1e-6));
    const int mid = k.height / 2;
    double on_axis = 0.0;
    for (int x = 0; x < k.width; ++x) on_axis += k.at(x, mid);
    REQUIRE(on_axis > 0.99);

    Kernel2D kv = motion_kernel(13.0, 90.0);
    const int cx = kv.width / 2;
    double on_col = 0.0;
    for (int y = 0; y < kv.height; ++y) on_col += kv.at(cx, y);
    REQUIRE(on_col > 0.99);
    REQUIRE_THROWS_AS(motion_kernel(0.5, 0.0), ParamOutOfRange);
}

TEST_CASE("disk kernel is a normalized symmetric pillbox") {
    Kernel2D k = disk_kernel(3.0);
    REQUIRE(k.sum() == Catch::Approx(1.0).margin(1e-6));
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            REQUIRE(k.at(x, y) == Catch::Approx(k.at(k.width - 1 - x, y)).margin(1e-6));
            REQUIRE(k.at(x, y) == Catch::Approx(k.at(x, k.height - 1 - y)).margin(1e-6));
        }
    // center tap is interior, corners are outside the radius
    REQUIRE(k.at(k.width / 2, k.height / 2) > 0.0f);
    REQUIRE(k.at(0, 0) == 0.0f);
}

TEST_CASE("box resize is the exact block mean for integer ratios") {
    Plane p = testutil::noise_plane(16, 12, 7);
    ImageF img(16, 12);
    for (int c = 0; c < 3; ++c) std::copy(p.v.begin(), p.v.end(), img.plane(c));
    ImageF small = resize(img, 8, 6, ResizeFilter::Box);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) {
            const double want = (p.at(2 * x, 2 * y) + p.at(2 * x + 1, 2 * y) +
                                 p.at(2 * x, 2 * y + 1) + p.at(2 * x + 1, 2 * y + 1)) / 4.0;
            REQUIRE(small.at(0, x, y) == Catch::Approx(want).margin(1e-6));
        }
}

TEST_CASE("bicubic resize keeps constants and dimensions") {
    ImageF img(10, 8);
    std::fill(img.data.begin(), img.data.end(), 0.37f);
    ImageF up = resize(img, 25, 19, ResizeFilter::Bicubic);
    REQUIRE(up.width == 25);
    REQUIRE(up.height == 19);
    for (float v : up.data) REQUIRE(v == Catch::Approx(0.37).margin(1e-5));
    REQUIRE_THROWS_AS(resize(img, 0, 4, ResizeFilter::Box), ParamOutOfRange);
}

TEST_CASE("median filter removes isolated impulses") {
    Plane p(9, 9);
    std::fill(p.v.begin(), p.v.end(), 0.5f);
    p.at(4, 4) = 1.0f;
    p.at(2, 6) = 0.0f;
    Plane m = median_filter(p, 1);
    for (float v : m.v) REQUIRE(v == 0.5f);
}

TEST_CASE("min filter equals brute-force erosion") {
    Plane p = testutil::noise_plane(14, 11, 9);
    const int r = 3;
    Plane got = min_filter(p, r);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            float want = 1e9f;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int sx = std::clamp(x + dx, 0, p.width - 1);
                    const int sy = std::clamp(y + dy, 0, p.height - 1);
                    want = std::min(want, p.at(sx, sy));
                }
            REQUIRE(got.at(x, y) == want);
        }
}

TEST_CASE("box_mean equals brute-force truncated window mean") {
    Plane p = testutil::noise_plane(13, 9, 13);
    const int r = 2;
    Plane got = box_mean(p, r);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            double acc = 0.0;
            int n = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int sx = x + dx, sy = y + dy;
                    if (sx < 0 || sy < 0 || sx >= p.width || sy >= p.height) continue;
                    acc += p.at(sx, sy);
                    ++n;
                }
            REQUIRE(got.at(x, y) == Catch::Approx(acc / n).margin(1e-5));
        }
}

TEST_CASE("guided filter is edge preserving and smooths flats") {
    // step edge guide, noisy source
    Plane guide(32, 16), src(32, 16);
    Rng rng(21);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x) {
            const float base = x < 16 ? 0.2f : 0.8f;
            guide.at(x, y) = base;
            src.at(x, y) = base + static_cast<float>(rng.uniform(-0.05, 0.05));
        }
    Plane q = guided_filter(guide, src, 4, 1e-3);
    // noise is attenuated away from the edge
    double err_in = 0.0, err_out = 0.0;
    int n = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 4; x < 12; ++x) {
            err_in += std::abs(src.at(x, y) - 0.2);
            err_out += std::abs(q.at(x, y) - 0.2);
            ++n;
        }
    REQUIRE(err_out < err_in);
    // the step survives
    REQUIRE(q.at(2, 8) < 0.35f);
    REQUIRE(q.at(29, 8) > 0.65f);
    Plane bad(5, 5);
    REQUIRE_THROWS_AS(guided_filter(bad, src, 2, 1e-3), DimMismatch);
}

TEST_CASE("sobel responds to the gradient direction") {
    Plane p(12, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) p.at(x, y) = 0.05f * x;
    GradientField g = sobel(p);
    for (int y = 2; y < 10; ++y)
        for (int x = 2; x < 10; ++x) {
            REQUIRE(g.gx.at(x, y) == Catch::Approx(8.0 * 0.05).margin(1e-5));
            REQUIRE(g.gy.at(x, y) == Catch::Approx(0.0).margin(1e-5));
        }
}

TEST_CASE("percentile interpolates between order statistics") {
    std::vector<double> xs = {5.0, 1.0, 3.0, 2.0, 4.0};
    REQUIRE(percentile(xs, 0) == 1.0);
    REQUIRE(percentile(xs, 100) == 5.0);
    REQUIRE(percentile(xs, 50) == 3.0);
    REQUIRE(percentile(xs, 25) == 2.0);
    REQUIRE(percentile(xs, 10) == Catch::Approx(1.4));
    REQUIRE_THROWS_AS(percentile({}, 50), EmptyInput);
}
