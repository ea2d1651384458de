#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>

#include "cflx/color.hpp"
#include "cflx/image.hpp"
#include "cflx/png_io.hpp"
#include "cflx/rng.hpp"

using namespace cflx;

namespace {

Image8 constant_rgb(int w, int h, int r, int g, int b) {
    Image8 img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = static_cast<std::uint8_t>(r);
            img.at(x, y, 1) = static_cast<std::uint8_t>(g);
            img.at(x, y, 2) = static_cast<std::uint8_t>(b);
        }
    return img;
}

Image8 random_rgb(Rng& rng, int w, int h) {
    Image8 img(w, h, 3);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.next_below(256));
    return img;
}

// Independent brute-force two-pass colorfulness oracle.
double colorfulness_oracle(const Image8& img) {
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    std::vector<double> rg(n), yb(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = img.data[3 * i + 0];
        const double g = img.data[3 * i + 1];
        const double b = img.data[3 * i + 2];
        rg[i] = r - g;
        yb[i] = 0.5 * (r + g) - b;
    }
    double mu_rg = 0, mu_yb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mu_rg += rg[i];
        mu_yb += yb[i];
    }
    mu_rg /= static_cast<double>(n);
    mu_yb /= static_cast<double>(n);
    double var_rg = 0, var_yb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        var_rg += (rg[i] - mu_rg) * (rg[i] - mu_rg);
        var_yb += (yb[i] - mu_yb) * (yb[i] - mu_yb);
    }
    var_rg /= static_cast<double>(n);
    var_yb /= static_cast<double>(n);
    return std::sqrt(var_rg + var_yb) +
           0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb);
}

}  // namespace

TEST_CASE("rgb_to_gray integer BT.601") {
    auto white = rgb_to_gray(constant_rgb(2, 2, 255, 255, 255));
    CHECK(white.channels == 1);
    CHECK(white.at(0, 0, 0) == 255);

    for (int g : {0, 7, 128, 200, 255}) {
        auto out = rgb_to_gray(constant_rgb(1, 1, g, g, g));
        CHECK(int(out.at(0, 0, 0)) == g);
    }

    auto red = rgb_to_gray(constant_rgb(1, 1, 255, 0, 0));
    CHECK(int(red.at(0, 0, 0)) == 76);

    // Brute-force agreement on random pixels.
    Rng rng(7);
    auto img = random_rgb(rng, 5, 4);
    auto gray = rgb_to_gray(img);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) {
            long v = 299L * img.at(x, y, 0) + 587L * img.at(x, y, 1) +
                     114L * img.at(x, y, 2);
            CHECK(long(gray.at(x, y, 0)) == v / 1000);
        }
}

TEST_CASE("rgb_to_gray idempotent on replicated gray") {
    Rng rng(11);
    auto img = random_rgb(rng, 6, 6);
    auto g1 = rgb_to_gray(img);
    Image8 rep(6, 6, 3);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 3; ++c) rep.at(x, y, c) = g1.at(x, y, 0);
    CHECK(rgb_to_gray(rep) == g1);
}

TEST_CASE("rgb_to_hsv hexcone") {
    auto h = rgb_to_hsv(1, 0, 0);
    CHECK(h.h == doctest::Approx(0.0));
    CHECK(h.s == doctest::Approx(1.0));
    CHECK(h.v == doctest::Approx(1.0));

    for (double c : {0.0, 0.25, 0.9}) {
        auto a = rgb_to_hsv(c, c, c);
        CHECK(a.h == 0.0);
        CHECK(a.s == 0.0);
        CHECK(a.v == doctest::Approx(c));
    }

    auto cyan = rgb_to_hsv(0, 1, 1);
    CHECK(cyan.h == doctest::Approx(0.5));
    CHECK(cyan.s == doctest::Approx(1.0));
    CHECK(cyan.v == doctest::Approx(1.0));
}

TEST_CASE("hsv round trip on chromatic grid") {
    for (int ri = 0; ri <= 4; ++ri)
        for (int gi = 0; gi <= 4; ++gi)
            for (int bi = 0; bi <= 4; ++bi) {
                const double r = ri / 4.0, g = gi / 4.0, b = bi / 4.0;
                auto hsv = rgb_to_hsv(r, g, b);
                if (hsv.s <= 0.0) continue;
                double r2, g2, b2;
                hsv_to_rgb(hsv, r2, g2, b2);
                CHECK(std::abs(r - r2) <= 1e-12);
                CHECK(std::abs(g - g2) <= 1e-12);
                CHECK(std::abs(b - b2) <= 1e-12);
            }
}

TEST_CASE("colorfulness closed forms and oracle") {
    CHECK(colorfulness(constant_rgb(4, 4, 90, 90, 90)) == doctest::Approx(0.0));

    const double red = 0.3 * std::sqrt(255.0 * 255.0 + 127.5 * 127.5);
    CHECK(colorfulness(constant_rgb(3, 5, 255, 0, 0)) == doctest::Approx(red));

    Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        auto img = random_rgb(rng, 8, 8);
        CHECK(std::abs(colorfulness(img) - colorfulness_oracle(img)) <= 1e-9);
    }

    // Zero iff R==G and (R+G)/2==B everywhere.
    auto bal = constant_rgb(4, 4, 100, 100, 100);
    bal.at(1, 1, 0) = 120;
    bal.at(1, 1, 1) = 120;
    bal.at(1, 1, 2) = 120;
    CHECK(colorfulness(bal) == doctest::Approx(0.0));
    bal.at(2, 2, 2) = 130;  // breaks yb balance
    CHECK(colorfulness(bal) > 0.0);
}

TEST_CASE("hsv_stats") {
    auto black = hsv_stats(constant_rgb(3, 3, 0, 0, 0));
    CHECK(black.mean_saturation == doctest::Approx(0.0));
    CHECK(black.mean_brightness == doctest::Approx(0.0));

    auto red = hsv_stats(constant_rgb(3, 3, 255, 0, 0));
    CHECK(red.mean_saturation == doctest::Approx(1.0));
    CHECK(red.mean_brightness == doctest::Approx(1.0));

    auto gray = hsv_stats(constant_rgb(3, 3, 128, 128, 128));
    CHECK(gray.mean_saturation == doctest::Approx(0.0));
    CHECK(gray.mean_brightness == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("to_float / from_float") {
    Image8 img(1, 1, 1);
    img.data[0] = 255;
    auto f = to_float(img);
    CHECK(f.data[0] == doctest::Approx(1.0));
    CHECK(from_float(f).data[0] == 255);

    ImageF half(1, 1, 1);
    half.data[0] = 0.5;
    CHECK(from_float(half).data[0] == 128);  // round half-up

    ImageF neg(1, 1, 1);
    neg.data[0] = -0.2;
    CHECK(from_float(neg).data[0] == 0);

    ImageF big(1, 1, 1);
    big.data[0] = 1.7;
    CHECK(from_float(big).data[0] == 255);
}

TEST_CASE("png round trip and alpha rejection") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "cflx_png_test";
    fs::create_directories(dir);

    Rng rng(99);
    auto img = random_rgb(rng, 9, 7);
    const auto path = (dir / "rt.png").string();
    write_png(path, img);
    CHECK(read_png(path) == img);

    Image8 gray(4, 4, 1);
    for (auto& v : gray.data) v = static_cast<std::uint8_t>(rng.next_below(256));
    const auto gpath = (dir / "gray.png").string();
    write_png(gpath, gray);
    CHECK(read_png(gpath) == gray);

    auto bytes = encode_png(img);
    CHECK(bytes.size() > 8);
    const auto epath = (dir / "enc.png").string();
    {
        FILE* fp = std::fopen(epath.c_str(), "wb");
        REQUIRE(fp != nullptr);
        std::fwrite(bytes.data(), 1, bytes.size(), fp);
        std::fclose(fp);
    }
    CHECK(read_png(epath) == img);

    // RGBA input must be rejected.
    const auto apath = (dir / "alpha.png").string();
    {
        FILE* fp = std::fopen(apath.c_str(), "wb");
        REQUIRE(fp != nullptr);
        png_structp png =
            png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png_create_info_struct(png);
        REQUIRE(setjmp(png_jmpbuf(png)) == 0);
        png_init_io(png, fp);
        png_set_IHDR(png, info, 1, 1, 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::uint8_t row[4] = {10, 20, 30, 128};
        png_bytep rows[1] = {row};
        png_write_image(png, rows);
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
    }
    CHECK_THROWS(read_png(apath));

    CHECK_THROWS(read_png((dir / "does_not_exist.png").string()));

    fs::remove_all(dir);
}
