#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "qagent/codec.hpp"
#include "testutil.hpp"

using namespace qagent;

TEST_CASE("png round trip is exact on the 8-bit lattice") {
    ImageF img = testutil::noise_image_u8(33, 21, 4);
    const std::string path = testutil::tmp_dir() + "/roundtrip.png";
    save_png(img, path);
    ImageF back = load_png(path);
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    REQUIRE(mean_abs_diff(img, back) == 0.0);
}

TEST_CASE("quantization rounds half up") {
    ImageF img(2, 1);
    img.at(0, 0, 0) = 0.5f;                  // 127.5 -> 128
    img.at(0, 1, 0) = 126.49f / 255.0f;      // -> 126
    img.at(1, 0, 0) = 1.5f;                  // clamps to 255
    img.at(2, 0, 0) = -0.5f;                 // clamps to 0
    const std::string path = testutil::tmp_dir() + "/quant.png";
    save_png(img, path);
    ImageF back = load_png(path);
    REQUIRE(back.at(0, 0, 0) == Catch::Approx(128.0 / 255.0).margin(1e-7));
    REQUIRE(back.at(0, 1, 0) == Catch::Approx(126.0 / 255.0).margin(1e-7));
    REQUIRE(back.at(1, 0, 0) == 1.0f);
    REQUIRE(back.at(2, 0, 0) == 0.0f);
}

TEST_CASE("load_image dispatches on magic bytes") {
    ImageF img = testutil::gradient_image(24, 16);
    const std::string ppath = testutil::tmp_dir() + "/dispatch.png";
    save_png(img, ppath);
    REQUIRE(load_image(ppath).width == 24);

    const std::string jpath = testutil::tmp_dir() + "/dispatch.jpg";
    {
        auto bytes = encode_jpeg(img, 90);
        std::ofstream out(jpath, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    ImageF j = load_image(jpath);
    REQUIRE(j.width == 24);
    REQUIRE(j.height == 16);

    const std::string tpath = testutil::tmp_dir() + "/garbage.bin";
    {
        std::ofstream out(tpath, std::ios::binary);
        out << "not an image at all, truly";
    }
    REQUIRE_THROWS_AS(load_image(tpath), UnsupportedFormat);
    REQUIRE_THROWS_AS(load_image(testutil::tmp_dir() + "/missing.png"), IoError);
}

TEST_CASE("jpeg quality controls reconstruction error") {
    ImageF img = testutil::gradient_image(64, 64);
    ImageF hi = jpeg_roundtrip(img, 95);
    ImageF lo = jpeg_roundtrip(img, 10);
    const double err_hi = mean_abs_diff(img, hi);
    const double err_lo = mean_abs_diff(img, lo);
    REQUIRE(err_hi < 0.02);
    REQUIRE(err_lo > err_hi);
    REQUIRE_THROWS_AS(jpeg_roundtrip(img, 0), ParamOutOfRange);
    REQUIRE_THROWS_AS(jpeg_roundtrip(img, 101), ParamOutOfRange);
}

TEST_CASE("jpeg round trip is deterministic") {
    ImageF img = testutil::noise_image_u8(48, 32, 17);
    ImageF a = jpeg_roundtrip(img, 25);
    ImageF b = jpeg_roundtrip(img, 25);
    REQUIRE(mean_abs_diff(a, b) == 0.0);
    auto bytes_a = encode_jpeg(img, 25);
    auto bytes_b = encode_jpeg(img, 25);
    REQUIRE(bytes_a == bytes_b);
}
