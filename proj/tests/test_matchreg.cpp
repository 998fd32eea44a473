#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "smt/matchreg.hpp"

using namespace smt;
using namespace smt::match;

namespace {

Homography planted_similarity(double angleDeg, double scale, double tx, double ty) {
    const double a = angleDeg * M_PI / 180.0;
    Homography t;
    t.m = {scale * std::cos(a), -scale * std::sin(a), tx,
           scale * std::sin(a), scale * std::cos(a),  ty,
           0.0,                 0.0,                  1.0};
    return t;
}

// Mean displacement of the four frame corners between two transforms.
double mean_corner_error(const Homography& a, const Homography& b, double w, double h) {
    const Point corners[4] = {{0, 0}, {0, h}, {w, 0}, {w, h}};
    double sum = 0.0;
    for (const Point& c : corners) {
        const Point pa = project(c, a);
        const Point pb = project(c, b);
        sum += std::hypot(pa.x - pb.x, pa.y - pb.y);
    }
    return sum / 4.0;
}

} // namespace

TEST_CASE("project: identity, translation and a perspective case") {
    const Point p{3.0, 4.0};
    CHECK(project(p, Homography::identity()).x == doctest::Approx(3.0));
    CHECK(project(p, Homography::identity()).y == doctest::Approx(4.0));

    const Homography t = Homography::translation(2.0, -1.0);
    CHECK(project(p, t).x == doctest::Approx(5.0));
    CHECK(project(p, t).y == doctest::Approx(3.0));

    Homography persp;
    persp.m = {1, 0, 0, 0, 1, 0, 0.01, 0, 1};
    const Point q = project({10.0, 0.0}, persp);
    CHECK(q.x == doctest::Approx(10.0 / 1.1).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(0.0));

    Homography toInfinity;
    toInfinity.m = {1, 0, 0, 0, 1, 0, -0.1, 0, 1};
    CHECK_THROWS_AS(project({10.0, 0.0}, toInfinity), ProjectionError);
}

TEST_CASE("project round trips through the inverse") {
    std::mt19937_64 eng(5);
    auto u = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(eng() >> 11) * 0x1.0p-53);
    };
    for (int trial = 0; trial < 20; ++trial) {
        Homography t = planted_similarity(u(-30, 30), u(0.8, 1.2), u(-10, 10), u(-10, 10));
        t.m[6] = u(-1e-3, 1e-3);
        t.m[7] = u(-1e-3, 1e-3);
        const Homography inv = t.inverse();
        const Point p{u(0, 60), u(0, 60)};
        const Point q = project(project(p, t), inv);
        CHECK(std::abs(q.x - p.x) <= 1e-9);
        CHECK(std::abs(q.y - p.y) <= 1e-9);
    }
}

TEST_CASE("ace-style invariance: scaling all entries leaves projection unchanged") {
    Homography t = planted_similarity(10, 1.05, 4, -2);
    Homography scaled = t;
    for (double& v : scaled.m) v *= 3.7;
    const Point p{12.0, 30.0};
    CHECK(project(p, t).x == doctest::Approx(project(p, scaled).x).epsilon(1e-12));
    CHECK(project(p, t).y == doctest::Approx(project(p, scaled).y).epsilon(1e-12));
}

TEST_CASE("detect: constant image has no corners") {
    ImageTensor flat(1, 32, 32);
    std::fill(flat.data.begin(), flat.data.end(), 0.4);
    CHECK(detect(flat).empty());
    ImageTensor tiny(1, 8, 8);
    CHECK_THROWS_AS(detect(tiny), std::invalid_argument);
}

TEST_CASE("detect: single dot yields its response-map maximum at the dot") {
    ImageTensor img(1, 32, 32);
    img.at(0, 14, 17) = 1.0;
    const auto kps = detect(img, 4096, 8);
    REQUIRE(!kps.empty());
    CHECK(kps[0].x == doctest::Approx(17.0));
    CHECK(kps[0].y == doctest::Approx(14.0));

    // Independent response-map recomputation; every reported keypoint must be
    // a strict local maximum of it with a positive score.
    const int H = 32, W = 32;
    std::vector<double> gx(H * W, 0.0), gy(H * W, 0.0), resp(H * W, 0.0);
    for (int r = 1; r < H - 1; ++r)
        for (int c = 1; c < W - 1; ++c) {
            auto v = [&](int rr, int cc) { return img.at(0, rr, cc); };
            gx[r * W + c] = v(r - 1, c + 1) - v(r - 1, c - 1) +
                            2 * (v(r, c + 1) - v(r, c - 1)) + v(r + 1, c + 1) -
                            v(r + 1, c - 1);
            gy[r * W + c] = v(r + 1, c - 1) - v(r - 1, c - 1) +
                            2 * (v(r + 1, c) - v(r - 1, c)) + v(r + 1, c + 1) -
                            v(r - 1, c + 1);
        }
    const double gw[3] = {0.25, 0.5, 0.25};
    for (int r = 2; r < H - 2; ++r)
        for (int c = 2; c < W - 2; ++c) {
            double xx = 0, yy = 0, xy = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const double wgt = gw[dr + 1] * gw[dc + 1];
                    xx += wgt * gx[(r + dr) * W + c + dc] * gx[(r + dr) * W + c + dc];
                    yy += wgt * gy[(r + dr) * W + c + dc] * gy[(r + dr) * W + c + dc];
                    xy += wgt * gx[(r + dr) * W + c + dc] * gy[(r + dr) * W + c + dc];
                }
            resp[r * W + c] = xx * yy - xy * xy - 0.04 * (xx + yy) * (xx + yy);
        }
    for (const Keypoint& kp : kps) {
        const int r = static_cast<int>(kp.y), c = static_cast<int>(kp.x);
        CHECK(kp.score == doctest::Approx(resp[r * W + c]).epsilon(1e-12));
        CHECK(resp[r * W + c] > 0.0);
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc)
                CHECK(resp[r * W + c] >= resp[(r + dr) * W + c + dc]);
    }
}

TEST_CASE("detect: keypoint cap is respected") {
    // Dense corner grid: isolated dots every 3 pixels.
    ImageTensor img(1, 64, 64);
    for (int r = 9; r < 55; r += 3)
        for (int c = 9; c < 55; c += 3) img.at(0, r, c) = 1.0;
    const auto all = detect(img, 4096, 8);
    CHECK(all.size() > 50);
    const auto capped = detect(img, 50, 8);
    CHECK(capped.size() == 50);
    // Cap keeps the highest scores.
    for (std::size_t i = 0; i < capped.size(); ++i)
        CHECK(capped[i].score == doctest::Approx(all[i].score));
}

TEST_CASE("describe: affine brightness invariance and unit norm") {
    const ImageTensor img = oracle::random_image(1, 32, 32, 9);
    const Keypoint kp{16.0, 15.0, 1.0};
    const Descriptor d = describe(img, kp, 16);
    CHECK_FALSE(d.flat);

    double norm2 = 0.0;
    for (double v : d.v) norm2 += v * v;
    CHECK(norm2 == doctest::Approx(1.0).epsilon(1e-12));

    ImageTensor brighter = img;
    for (double& v : brighter.data) v += 0.3;
    ImageTensor contrasted = img;
    for (double& v : contrasted.data) v = 2.0 * v + 0.1;
    const Descriptor db = describe(brighter, kp, 16);
    const Descriptor dc = describe(contrasted, kp, 16);
    for (std::size_t i = 0; i < d.v.size(); ++i) {
        CHECK(db.v[i] == doctest::Approx(d.v[i]).epsilon(1e-9));
        CHECK(dc.v[i] == doctest::Approx(d.v[i]).epsilon(1e-9));
    }

    ImageTensor flat(1, 32, 32);
    std::fill(flat.data.begin(), flat.data.end(), 0.8);
    CHECK(describe(flat, kp, 16).flat);

    CHECK_THROWS_AS(describe(img, Keypoint{3.0, 16.0, 0.0}, 16), std::invalid_argument);
}

TEST_CASE("match_mutual_nn: identity, singleton and the quadratic oracle") {
    std::mt19937_64 eng(13);
    auto randomDescs = [&](int n, int dim) {
        std::vector<Descriptor> out(n);
        for (auto& d : out) {
            d.v.resize(dim);
            double norm2 = 0.0;
            for (double& v : d.v) {
                v = static_cast<double>(eng() >> 11) * 0x1.0p-53 - 0.5;
                norm2 += v * v;
            }
            for (double& v : d.v) v /= std::sqrt(norm2);
        }
        return out;
    };

    const auto a = randomDescs(12, 8);
    const auto self = match_mutual_nn(a, a);
    REQUIRE(self.size() == a.size());
    for (const auto& [i, j] : self) CHECK(i == j);

    const auto one = match_mutual_nn(randomDescs(1, 4), randomDescs(1, 4));
    CHECK(one.size() == 1);

    for (int trial = 0; trial < 5; ++trial) {
        const auto descA = randomDescs(20, 6);
        const auto descB = randomDescs(20, 6);
        const auto got = match_mutual_nn(descA, descB);

        // Brute-force mutual-NN oracle.
        std::vector<std::pair<int, int>> expected;
        auto d2 = [](const Descriptor& p, const Descriptor& q) {
            double s = 0.0;
            for (std::size_t k = 0; k < p.v.size(); ++k)
                s += (p.v[k] - q.v[k]) * (p.v[k] - q.v[k]);
            return s;
        };
        for (int i = 0; i < 20; ++i) {
            int bj = 0;
            for (int j = 1; j < 20; ++j)
                if (d2(descA[i], descB[j]) < d2(descA[i], descB[bj])) bj = j;
            int bi = 0;
            for (int k = 1; k < 20; ++k)
                if (d2(descA[k], descB[bj]) < d2(descA[bi], descB[bj])) bi = k;
            if (bi == i) expected.emplace_back(i, bj);
        }
        CHECK(got == expected);

        // Symmetry: swapping sides transposes the match set.
        auto swapped = match_mutual_nn(descB, descA);
        for (auto& [i, j] : swapped) std::swap(i, j);
        std::sort(swapped.begin(), swapped.end());
        auto sortedGot = got;
        std::sort(sortedGot.begin(), sortedGot.end());
        CHECK(swapped == sortedGot);
    }
}

TEST_CASE("estimate_homography: exact recovery and degeneracy") {
    Homography t = planted_similarity(12.0, 1.04, 5.0, -3.0);
    t.m[6] = 5e-4;
    t.normalize();

    std::mt19937_64 eng(7);
    auto u = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(eng() >> 11) * 0x1.0p-53);
    };

    MatchSet four;
    const double corners[4][2] = {{0, 0}, {60, 2}, {3, 58}, {55, 61}};
    for (auto& c : corners) {
        const Point p{c[0], c[1]};
        four.push_back({p, project(p, t)});
    }
    const Homography rec4 = estimate_homography(four);
    for (int i = 0; i < 9; ++i)
        CHECK(std::abs(rec4.m[i] - t.m[i]) <= 1e-6 * std::max(1.0, std::abs(t.m[i])));

    MatchSet twenty;
    for (int i = 0; i < 20; ++i) {
        const Point p{u(0, 64), u(0, 64)};
        twenty.push_back({p, project(p, t)});
    }
    const Homography rec20 = estimate_homography(twenty);
    for (int i = 0; i < 9; ++i)
        CHECK(std::abs(rec20.m[i] - t.m[i]) <= 1e-6 * std::max(1.0, std::abs(t.m[i])));

    MatchSet line;
    for (int i = 0; i < 6; ++i) {
        const Point p{static_cast<double>(i), 2.0 * i + 1.0};
        line.push_back({p, project(p, t)});
    }
    CHECK_THROWS_AS(estimate_homography(line), EstimationError);

    MatchSet three(four.begin(), four.begin() + 3);
    CHECK_THROWS_AS(estimate_homography(three), std::invalid_argument);
}

TEST_CASE("ransac: noiseless recovery, minimal-sample failure, determinism") {
    const Homography t = planted_similarity(-8.0, 0.97, 12.0, 6.0);
    std::mt19937_64 eng(21);
    auto u = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(eng() >> 11) * 0x1.0p-53);
    };

    MatchSet matches;
    for (int i = 0; i < 100; ++i) {
        const Point p{u(0, 64), u(0, 64)};
        matches.push_back({p, project(p, t)});
    }
    Rng rng(3);
    const auto res = ransac(matches, 3.0, 2000, rng);
    REQUIRE(res.has_value());
    CHECK(res->inliers.size() == 100);
    CHECK(mean_corner_error(res->t, t, 64, 64) <= 1e-6);

    // Post-hoc inlier verification at the exact threshold.
    for (const auto& pr : res->inliers) {
        const Point q = project(pr.first, res->t);
        CHECK(std::hypot(q.x - pr.second.x, q.y - pr.second.y) <= 3.0);
    }

    MatchSet three(matches.begin(), matches.begin() + 3);
    Rng r2(3);
    CHECK_FALSE(ransac(three, 3.0, 2000, r2).has_value());

    Rng ra(17), rb(17);
    const auto resA = ransac(matches, 3.0, 2000, ra);
    const auto resB = ransac(matches, 3.0, 2000, rb);
    REQUIRE(resA.has_value());
    REQUIRE(resB.has_value());
    CHECK(resA->t.m == resB->t.m);
    CHECK(resA->inliers.size() == resB->inliers.size());
}

TEST_CASE("ransac: recovery under noise and outliers (smoke trials)") {
    int good = 0;
    const int trials = 15;
    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 eng(1000 + trial);
        auto u = [&](double lo, double hi) {
            return lo + (hi - lo) * (static_cast<double>(eng() >> 11) * 0x1.0p-53);
        };
        std::normal_distribution<double> noise(0.0, 0.5);
        const Homography t =
            planted_similarity(u(-15, 15), u(0.9, 1.1), u(-20, 20), u(-20, 20));

        MatchSet matches;
        for (int i = 0; i < 140; ++i) {
            const Point p{u(0, 64), u(0, 64)};
            Point q = project(p, t);
            q.x += noise(eng);
            q.y += noise(eng);
            matches.push_back({p, q});
        }
        for (int i = 0; i < 60; ++i)
            matches.push_back({{u(0, 64), u(0, 64)}, {u(0, 64), u(0, 64)}});

        Rng rng(2000 + trial);
        const auto res = ransac(matches, 3.0, 2000, rng);
        if (res && mean_corner_error(res->t, t, 64, 64) < 0.5) ++good;
    }
    CHECK(good >= trials - 1);
}
