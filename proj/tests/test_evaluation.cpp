#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "smt/evaluation.hpp"

using namespace smt;
using namespace smt::eval;
namespace fs = std::filesystem;

TEST_CASE("mma") {
    CHECK(*mma(100, 100) == doctest::Approx(1.0));
    CHECK(*mma(0, 50) == doctest::Approx(0.0));
    CHECK_FALSE(mma(0, 0).has_value());
    CHECK_THROWS_AS(mma(5, 3), std::invalid_argument);
}

TEST_CASE("ace: identity, translation, rotation oracle, scale invariance") {
    const auto id = match::Homography::identity();
    CHECK(ace(id, id, 100, 100) == 0.0);

    CHECK(ace(match::Homography::translation(3, 4), id, 64, 48) ==
          doctest::Approx(5.0).epsilon(1e-12));

    // Rotation by 90 degrees about the center of a 100x100 frame moves every
    // corner to an adjacent corner, distance 100.
    match::Homography rot;
    {
        const double cx = 50.0, cy = 50.0;
        rot.m = {0.0, -1.0, cx + cy, 1.0, 0.0, cy - cx, 0.0, 0.0, 1.0};
    }
    CHECK(std::abs(ace(id, rot, 100, 100) - 100.0) <= 1e-9);

    // Common rescaling of all nine entries does not change the metric.
    match::Homography scaled = rot;
    for (double& v : scaled.m) v *= -2.5;
    CHECK(ace(id, scaled, 100, 100) == doctest::Approx(ace(id, rot, 100, 100)));

    match::Homography toInfinity;
    toInfinity.m = {1, 0, 0, 0, 1, 0, -1.0 / 100.0, 0, 1}; // corner x=100 hits Z=0
    CHECK(std::isinf(ace(toInfinity, id, 100, 100)));
}

TEST_CASE("success and sr") {
    CHECK(success(0.0));
    CHECK(success(39.9));
    CHECK_FALSE(success(40.0));
    CHECK_FALSE(success(std::numeric_limits<double>::infinity()));
    CHECK(sr({10.0, 50.0, std::numeric_limits<double>::infinity(), 39.9}) ==
          doctest::Approx(0.5));
    CHECK_THROWS_AS(sr({}), std::invalid_argument);
}

TEST_CASE("delta_p and correct_metrics against loop oracles") {
    const auto id = match::Homography::identity();

    match::MatchSet exact;
    for (int i = 0; i < 5; ++i)
        exact.push_back({{double(i), double(i)}, {double(i), double(i)}});
    CHECK(*delta_p(exact, id) == doctest::Approx(0.0));

    match::MatchSet two = {{{0, 0}, {1, 0}}, {{0, 0}, {0, 3}}};
    CHECK(*delta_p(two, id) == doctest::Approx(2.0));

    CHECK_FALSE(delta_p({}, id).has_value());

    // Planted residuals {0.5, 1.5, 2.5, 10} at delta = 3.
    match::MatchSet planted = {{{0, 0}, {0.5, 0}},
                               {{0, 0}, {0, 1.5}},
                               {{0, 0}, {2.5, 0}},
                               {{0, 0}, {0, 10}}};
    const auto cm = correct_metrics(planted, id, 3.0);
    CHECK(cm.correctCount == 3);
    CHECK(*cm.cmr == doctest::Approx(0.75));
    CHECK(*cm.le == doctest::Approx(1.5));

    const auto cm0 = correct_metrics(exact, id, 0.0);
    CHECK(*cm0.cmr == doctest::Approx(1.0));
    CHECK(*cm0.le == doctest::Approx(0.0));

    const auto cmEmpty = correct_metrics({}, id, 3.0);
    CHECK(cmEmpty.correctCount == 0);
    CHECK_FALSE(cmEmpty.cmr.has_value());
    CHECK_FALSE(cmEmpty.le.has_value());

    // Random sets reproduce an independent loop bit-for-bit.
    std::mt19937_64 eng(3);
    auto u = [&] { return static_cast<double>(eng() >> 11) * 0x1.0p-53 * 64.0; };
    match::Homography t;
    t.m = {1.01, -0.02, 3.0, 0.015, 0.99, -1.5, 0.0, 0.0, 1.0};
    match::MatchSet rand;
    for (int i = 0; i < 40; ++i) rand.push_back({{u(), u()}, {u(), u()}});

    double sum = 0.0;
    for (const auto& pr : rand) {
        const match::Point q = match::project(pr.first, t);
        const double dx = q.x - pr.second.x;
        const double dy = q.y - pr.second.y;
        sum += std::sqrt(dx * dx + dy * dy);
    }
    CHECK(*delta_p(rand, t) == sum / 40.0); // bit-equal

    const double delta = 25.0;
    long long cnt = 0;
    double leSum = 0.0;
    for (const auto& pr : rand) {
        const match::Point q = match::project(pr.first, t);
        const double dx = q.x - pr.second.x;
        const double dy = q.y - pr.second.y;
        const double r = std::sqrt(dx * dx + dy * dy);
        if (r <= delta) {
            ++cnt;
            leSum += r;
        }
    }
    const auto cmr = correct_metrics(rand, t, delta);
    CHECK(cmr.correctCount == cnt);
    CHECK(*cmr.cmr == static_cast<double>(cnt) / 40.0);
    CHECK(*cmr.le == leSum / cnt);
}

TEST_CASE("cmr and le are non-decreasing in delta") {
    std::mt19937_64 eng(17);
    const auto id = match::Homography::identity();
    for (int trial = 0; trial < 10; ++trial) {
        match::MatchSet matches;
        for (int i = 0; i < 30; ++i) {
            const double r = static_cast<double>(eng() >> 11) * 0x1.0p-53 * 8.0;
            matches.push_back({{0, 0}, {r, 0}});
        }
        std::optional<double> lastCmr, lastLe;
        for (double delta = 0.5; delta <= 8.0; delta += 0.5) {
            const auto cm = correct_metrics(matches, id, delta);
            if (lastCmr && cm.cmr) CHECK(*cm.cmr >= *lastCmr);
            if (lastLe && cm.le) CHECK(*cm.le >= *lastLe);
            if (cm.cmr) lastCmr = cm.cmr;
            if (cm.le) lastLe = cm.le;
        }
    }
}

TEST_CASE("similarity_table") {
    sim::SsimConfig ssimCfg;
    const ImageTensor a = oracle::random_image(3, 8, 8, 5);
    const ImageTensor b = oracle::random_image(3, 8, 8, 6);

    const auto identical = similarity_table({{a, a}, {b, b}}, ssimCfg);
    CHECK(identical.meanRmse == doctest::Approx(0.0));
    CHECK(identical.meanSsim == doctest::Approx(1.0));
    CHECK(identical.psnrExcluded == 2);

    const auto mixed = similarity_table({{a, b}, {a, a}}, ssimCfg);
    CHECK(mixed.psnrExcluded == 1);
    CHECK(mixed.meanPsnr == doctest::Approx(sim::psnr(a, b)));
    CHECK(mixed.meanRmse ==
          doctest::Approx((sim::rmse(a, b) + 0.0) / 2.0).epsilon(1e-12));
    CHECK(mixed.meanSsim ==
          doctest::Approx((sim::ssim(a, b, ssimCfg) + 1.0) / 2.0).epsilon(1e-12));

    CHECK_THROWS_AS(similarity_table({}, ssimCfg), std::invalid_argument);
}

namespace {

// Co-registered pair whose SAR gray and optical RGB gray coincide, so the
// baseline matcher sees identical structure on both sides.
synth::PairSample structured_pair(std::uint64_t seed) {
    const ImageTensor pattern = oracle::random_image(1, 64, 64, seed);
    synth::PairSample pair;
    pair.x = ImageTensor(2, 64, 64);
    pair.y = ImageTensor(10, 64, 64);
    for (int c = 0; c < 2; ++c)
        std::copy(pattern.data.begin(), pattern.data.end(),
                  pair.x.data.begin() + c * pattern.plane());
    for (int c = 0; c < 10; ++c)
        std::copy(pattern.data.begin(), pattern.data.end(),
                  pair.y.data.begin() + c * pattern.plane());
    pair.sceneSeed = seed;
    return pair;
}

} // namespace

TEST_CASE("evaluate_dataset recovers planted integer translations") {
    std::vector<synth::WarpedPair> pairs;
    for (int i = 0; i < 4; ++i) {
        synth::WarpedPair wp;
        wp.base = structured_pair(40 + i);
        const double tx = 2.0 + i, ty = 1.0 + i;
        const auto warp = match::Homography::translation(tx, ty);
        wp.warpedX = synth::warp_image(wp.base.x, warp, 0.0);
        wp.trueT = warp.inverse();
        pairs.push_back(std::move(wp));
    }

    Pipeline pipeline; // none
    MatcherConfig matcher;
    const std::vector<double> grid{0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4, 4.5, 5};
    const DatasetReport report = evaluate_dataset(pairs, pipeline, matcher, grid);

    CHECK(report.sr == doctest::Approx(1.0));
    REQUIRE(report.meanAce.has_value());
    CHECK(*report.meanAce <= 0.1);
    REQUIRE(report.meanDeltaP.has_value());
    // A handful of mutual-NN mismatches keep the mean residual above the
    // inlier level; the bulk of the matches are exact.
    CHECK(*report.meanDeltaP <= 2.0);
    REQUIRE(report.meanMma.has_value());
    CHECK(*report.meanMma >= 0.9);
    for (const PairEvaluation& row : report.rows) {
        CHECK(row.success);
        CHECK(row.numMatches >= 8);
        CHECK(row.numInliers >= 8);
    }
    // CMR climbs to ~1 far below the largest delta.
    REQUIRE(report.perDelta.back().cmr.has_value());
    CHECK(*report.perDelta.back().cmr >= 0.95);
    CHECK(report.similarity.has_value());
    CHECK(report.similarity->meanSsim == doctest::Approx(1.0));

    // Determinism.
    const DatasetReport again = evaluate_dataset(pairs, pipeline, matcher, grid);
    CHECK(again.sr == report.sr);
    CHECK(*again.meanAce == *report.meanAce);
    for (int i = 0; i < 4; ++i)
        CHECK(again.rows[i].numInliers == report.rows[i].numInliers);
}

TEST_CASE("aggregates equal a brute-force recomputation from the rows") {
    std::vector<synth::WarpedPair> pairs;
    for (int i = 0; i < 3; ++i) {
        synth::WarpedPair wp;
        wp.base = structured_pair(80 + i);
        const auto warp = match::Homography::translation(3.0, -2.0);
        wp.warpedX = synth::warp_image(wp.base.x, warp, 0.0);
        wp.trueT = warp.inverse();
        pairs.push_back(std::move(wp));
    }
    Pipeline pipeline;
    MatcherConfig matcher;
    const std::vector<double> grid{1, 3, 5};
    const DatasetReport report = evaluate_dataset(pairs, pipeline, matcher, grid);

    long long successes = 0;
    double aceSum = 0, mmaSum = 0, dpSum = 0, mSum = 0, iSum = 0;
    long long dpCount = 0;
    for (const auto& row : report.rows) {
        mSum += static_cast<double>(row.numMatches);
        iSum += static_cast<double>(row.numInliers);
        if (row.success) {
            ++successes;
            aceSum += row.ace;
            mmaSum += *row.mma;
        }
        if (row.deltaP) {
            dpSum += *row.deltaP;
            ++dpCount;
        }
    }
    const double n = static_cast<double>(report.rows.size());
    CHECK(report.sr == static_cast<double>(successes) / n);
    if (successes > 0) {
        CHECK(*report.meanAce == aceSum / static_cast<double>(successes));
        CHECK(*report.meanMma == mmaSum / static_cast<double>(successes));
    }
    if (dpCount > 0) CHECK(*report.meanDeltaP == dpSum / static_cast<double>(dpCount));
    CHECK(report.meanNumMatches == mSum / n);
    CHECK(report.meanNumInliers == iSum / n);

    for (std::size_t d = 0; d < grid.size(); ++d) {
        double cmrSum = 0, leSum = 0, cSum = 0;
        long long cmrCount = 0, leCount = 0;
        for (const auto& row : report.rows) {
            if (row.perDelta[d].cmr) {
                cmrSum += *row.perDelta[d].cmr;
                cSum += static_cast<double>(row.perDelta[d].correctCount);
                ++cmrCount;
            }
            if (row.perDelta[d].le) {
                leSum += *row.perDelta[d].le;
                ++leCount;
            }
        }
        if (cmrCount > 0) {
            CHECK(*report.perDelta[d].cmr == cmrSum / static_cast<double>(cmrCount));
            CHECK(*report.perDelta[d].meanCorrect == cSum / static_cast<double>(cmrCount));
        }
        if (leCount > 0)
            CHECK(*report.perDelta[d].le == leSum / static_cast<double>(leCount));
    }
}

TEST_CASE("report files are written deterministically") {
    std::vector<synth::WarpedPair> pairs;
    synth::WarpedPair wp;
    wp.base = structured_pair(90);
    const auto warp = match::Homography::translation(2.0, 2.0);
    wp.warpedX = synth::warp_image(wp.base.x, warp, 0.0);
    wp.trueT = warp.inverse();
    pairs.push_back(std::move(wp));

    Pipeline pipeline;
    MatcherConfig matcher;
    const DatasetReport report = evaluate_dataset(pairs, pipeline, matcher, {3, 5});

    const auto dir = (fs::temp_directory_path() / "smt_reports_test").string();
    fs::remove_all(dir);
    write_reports(dir, "none", report);
    for (const char* name : {"none_pairs.csv", "none_summary.txt", "none_sweep.csv"})
        CHECK(fs::exists(fs::path(dir) / name));

    std::ifstream pairsCsv(fs::path(dir) / "none_pairs.csv");
    std::string header;
    std::getline(pairsCsv, header);
    CHECK(header == "pairId,success,ace,mma,deltaP,numMatches,numInliers,cmr@3,cmr@5,le@3,le@5");

    auto slurp = [&](const char* name) {
        std::ifstream in(fs::path(dir) / name, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), {});
    };
    const std::string first = slurp("none_pairs.csv") + slurp("none_summary.txt") +
                              slurp("none_sweep.csv");
    write_reports(dir, "none", report);
    const std::string second = slurp("none_pairs.csv") + slurp("none_summary.txt") +
                               slurp("none_sweep.csv");
    CHECK(first == second);
    fs::remove_all(dir);
}
