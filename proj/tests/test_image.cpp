#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "mgreid/image.hpp"
#include "mgreid/rng.hpp"

using namespace mgreid;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("quantize8 snaps every channel to /255 levels") {
    Image img(4, 4);
    Rng rng(1);
    for (double& p : img.pix) p = rng.uniform();
    img.quantize8();
    for (double p : img.pix) {
        const double scaled = p * 255.0;
        CHECK(std::abs(scaled - std::lround(scaled)) < 1e-9);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("png round trip is lossless on quantized images") {
    Image img(16, 9);
    Rng rng(2);
    for (double& p : img.pix) p = rng.uniform();
    img.quantize8();

    const std::string path = tmp_path("mgreid_test_rt.png");
    write_png_rgb(path, img);
    Image back = read_png_rgb(path);
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    CHECK(back.pix == img.pix);
    std::remove(path.c_str());
}

TEST_CASE("grayscale png writes and has the right size") {
    const int h = 8, w = 5;
    std::vector<uint8_t> gray(h * w);
    for (size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<uint8_t>(i * 7);
    const std::string path = tmp_path("mgreid_test_gray.png");
    write_png_gray(path, h, w, gray);
    CHECK(fs::file_size(path) > 0);
    std::remove(path.c_str());
}

TEST_CASE("reading a missing file reports the path") {
    CHECK_THROWS_WITH_AS(read_png_rgb("/nonexistent/nowhere.png"),
                         doctest::Contains("nowhere.png"), std::runtime_error);
}

TEST_CASE("image accessor is row major with interleaved channels") {
    Image img(2, 3);
    img.at(1, 2, 0) = 0.25;
    img.at(0, 0, 2) = 0.5;
    CHECK(img.pix[(1 * 3 + 2) * 3 + 0] == 0.25);
    CHECK(img.pix[2] == 0.5);
}
