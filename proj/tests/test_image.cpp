#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "smt/image.hpp"

using namespace smt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / name;
}

} // namespace

TEST_CASE("smt round trip is bit-exact") {
    ImageTensor img(2, 3, 4);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data[i] = static_cast<double>(static_cast<float>(0.125 * i - 1.0));
    const auto path = temp_file("rt.smt");
    save_smt(img, path.string());
    const ImageTensor back = load_smt(path.string());
    CHECK(back.channels == 2);
    CHECK(back.height == 3);
    CHECK(back.width == 4);
    CHECK(back.data == img.data);
}

TEST_CASE("smt round trip property over random float tensors") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ImageTensor img = oracle::random_image(3, 5, 7, seed, -10.0, 10.0);
        // Values within the format's binary32 domain.
        for (double& v : img.data) v = static_cast<double>(static_cast<float>(v));
        const auto path = temp_file("rt_prop.smt");
        save_smt(img, path.string());
        CHECK(load_smt(path.string()).data == img.data);
    }
}

TEST_CASE("smt file size for 1x1x1") {
    ImageTensor img(1, 1, 1);
    img.data[0] = 0.5;
    const auto path = temp_file("one.smt");
    save_smt(img, path.string());
    CHECK(fs::file_size(path) == 20);
}

TEST_CASE("smt load rejects bad magic, truncation and non-finite payloads") {
    const auto path = temp_file("bad.smt");
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        const unsigned char bytes[] = {'S', 'M', 'T', '9', 1, 0, 0, 0,
                                       1,   0,   0,   0,   1, 0, 0, 0,
                                       0,   0,   0,   0x3f};
        out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    }
    CHECK_THROWS_AS(load_smt(path.string()), FormatError);

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        const unsigned char bytes[] = {'S', 'M', 'T', '1', 1, 0, 0, 0,
                                       1,   0,   0,   0,   2, 0, 0, 0,
                                       0,   0,   0,   0x3f}; // promises 2 values
        out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    }
    CHECK_THROWS_AS(load_smt(path.string()), CorruptFileError);

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        // 1x1x1 with a NaN payload (0x7fc00000 LE).
        const unsigned char bytes[] = {'S', 'M', 'T', '1', 1,    0,    0,    0,
                                       1,   0,   0,   0,   1,    0,    0,    0,
                                       0x00, 0x00, 0xc0, 0x7f};
        out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    }
    CHECK_THROWS_AS(load_smt(path.string()), ValidationError);

    CHECK_THROWS_AS(load_smt("/nonexistent/missing.smt"), IoError);
}

TEST_CASE("percentiles with linear interpolation") {
    ImageTensor ramp(1, 1, 1001);
    for (int i = 0; i <= 1000; ++i) ramp.data[i] = static_cast<double>(i);
    const auto stats = compute_percentiles(std::vector<const ImageTensor*>{&ramp}, 0.5, 99.5);
    CHECK(stats.lo == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(stats.hi == doctest::Approx(995.0).epsilon(1e-12));

    ImageTensor constant(2, 3, 3);
    std::fill(constant.data.begin(), constant.data.end(), 0.7);
    const auto cs = compute_percentiles(std::vector<const ImageTensor*>{&constant}, 10.0, 90.0);
    CHECK(cs.lo == 0.7);
    CHECK(cs.hi == 0.7);

    ImageTensor a(1, 1, 2), b(1, 1, 2);
    a.data = {0.0, 1.0};
    b.data = {2.0, 3.0};
    const auto mm = compute_percentiles(std::vector<const ImageTensor*>{&a, &b}, 0.0, 100.0);
    CHECK(mm.lo == 0.0);
    CHECK(mm.hi == 3.0);

    CHECK_THROWS_AS(compute_percentiles(std::vector<const ImageTensor*>{}, 0.5, 99.5),
                    std::invalid_argument);
}

TEST_CASE("percentiles at 0 and 100 equal min and max exactly") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ImageTensor img = oracle::random_image(2, 6, 6, seed, -4.0, 9.0);
        const auto stats = compute_percentiles(std::vector<const ImageTensor*>{&img}, 0.0, 100.0);
        double mn = img.data[0], mx = img.data[0];
        for (double v : img.data) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        CHECK(stats.lo == mn);
        CHECK(stats.hi == mx);
    }
}

TEST_CASE("normalize maps endpoints, clamps and flags degenerate ranges") {
    NormalizationStats stats{2.0, 4.0, "t"};
    ImageTensor img(1, 1, 4);
    img.data = {2.0, 4.0, 3.0, -8.0};
    bool degenerate = true;
    const ImageTensor out = normalize(img, stats, &degenerate);
    CHECK_FALSE(degenerate);
    CHECK(out.data[0] == 0.0);
    CHECK(out.data[1] == 1.0);
    CHECK(out.data[2] == doctest::Approx(0.5));
    CHECK(out.data[3] == 0.0); // clamped below lo

    NormalizationStats flat{1.0, 1.0, "t"};
    const ImageTensor outFlat = normalize(img, flat, &degenerate);
    CHECK(degenerate);
    for (double v : outFlat.data) CHECK(v == 0.5);
}

TEST_CASE("normalize is monotone and stays in [0,1]") {
    const ImageTensor img = oracle::random_image(1, 8, 8, 99, -3.0, 3.0);
    NormalizationStats stats{-1.0, 2.0, ""};
    const ImageTensor out = normalize(img, stats);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out.data[i] >= 0.0);
        CHECK(out.data[i] <= 1.0);
        for (std::size_t j = 0; j < out.size(); ++j)
            if (img.data[i] <= img.data[j]) CHECK(out.data[i] <= out.data[j]);
    }
}

TEST_CASE("to_db") {
    ImageTensor img(1, 1, 3);
    img.data = {1.0, 100.0, 0.0};
    const ImageTensor out = to_db(img, 1e-6);
    CHECK(out.data[0] == doctest::Approx(0.0));
    CHECK(out.data[1] == doctest::Approx(20.0));
    CHECK(out.data[2] == doctest::Approx(-60.0));
    CHECK_THROWS_AS(to_db(img, 0.0), std::invalid_argument);
}

TEST_CASE("gray_average") {
    ImageTensor two(2, 1, 1);
    two.data = {0.0, 1.0};
    CHECK(gray_average(two).data[0] == doctest::Approx(0.5));

    const ImageTensor one = oracle::random_image(1, 4, 4, 3);
    CHECK(gray_average(one).data == one.data);

    ImageTensor three(3, 1, 1);
    three.data = {0.3, 0.3, 0.3};
    CHECK(gray_average(three).data[0] == doctest::Approx(0.3));
}

TEST_CASE("select_channels") {
    const ImageTensor img = oracle::random_image(10, 3, 3, 11);
    const ImageTensor sel = select_channels(img, {2, 1, 0});
    CHECK(sel.channels == 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            CHECK(sel.at(0, r, c) == img.at(2, r, c));
            CHECK(sel.at(2, r, c) == img.at(0, r, c));
        }

    const ImageTensor rgb = oracle::random_image(3, 2, 2, 12);
    CHECK(select_channels(rgb, {0, 1, 2}).data == rgb.data);
    CHECK_THROWS_AS(select_channels(img, {10}), std::invalid_argument);
    CHECK_THROWS_AS(select_channels(img, {}), std::invalid_argument);
}

TEST_CASE("dihedral transforms") {
    ImageTensor img(1, 2, 2);
    img.data = {1, 2, 3, 4};

    const ImageTensor flipped = apply_dihedral(img, Dihedral::FlipH);
    CHECK(flipped.data == std::vector<double>{2, 1, 4, 3});

    const ImageTensor r90twice =
        apply_dihedral(apply_dihedral(img, Dihedral::Rot90), Dihedral::Rot90);
    const ImageTensor r180 = apply_dihedral(img, Dihedral::Rot180);
    CHECK(r90twice.data == r180.data);

    // Every op is a bijection on pixels.
    const ImageTensor big = oracle::random_image(2, 5, 5, 17);
    for (int op = 0; op < 8; ++op) {
        auto sorted = apply_dihedral(big, static_cast<Dihedral>(op)).data;
        auto orig = big.data;
        std::sort(sorted.begin(), sorted.end());
        std::sort(orig.begin(), orig.end());
        CHECK(sorted == orig);
    }
}

TEST_CASE("augment_pair applies one op to both inputs and is deterministic") {
    // Coordinate grids make mismatched transforms visible.
    ImageTensor gridA(2, 6, 6), gridB(1, 6, 6);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) {
            gridA.at(0, r, c) = r;
            gridA.at(1, r, c) = c;
            gridB.at(0, r, c) = 10.0 * r + c;
        }
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
        Rng rng(seed);
        auto [a1, b1] = augment_pair(gridA, gridB, rng);
        Rng rng2(seed);
        auto [a2, b2] = augment_pair(gridA, gridB, rng2);
        CHECK(a1.data == a2.data); // determinism
        CHECK(b1.data == b2.data);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c)
                CHECK(b1.at(0, r, c) ==
                      doctest::Approx(10.0 * a1.at(0, r, c) + a1.at(1, r, c)));
    }

    ImageTensor other(1, 4, 6);
    Rng rng(0);
    CHECK_THROWS_AS(augment_pair(gridA, other, rng), std::invalid_argument);
}

TEST_CASE("gray_average commutes with dihedral ops") {
    const ImageTensor img = oracle::random_image(3, 6, 6, 23);
    for (int op = 0; op < 8; ++op) {
        const auto d = static_cast<Dihedral>(op);
        const ImageTensor lhs = gray_average(apply_dihedral(img, d));
        const ImageTensor rhs = apply_dihedral(gray_average(img), d);
        REQUIRE(lhs.data.size() == rhs.data.size());
        for (std::size_t i = 0; i < lhs.data.size(); ++i)
            CHECK(lhs.data[i] == doctest::Approx(rhs.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("validate rejects non-finite values") {
    ImageTensor img(1, 1, 2);
    img.data = {0.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(img.validate(), ValidationError);
    CHECK_THROWS_AS(save_smt(img, temp_file("nan.smt").string()), ValidationError);
}
