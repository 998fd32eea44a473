#include "smt/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "smt/errors.hpp"

namespace fs = std::filesystem;

namespace smt::eval {

std::optional<double> mma(long long numInliers, long long numMatches) {
    if (numMatches < 0 || numInliers < 0 || numInliers > numMatches)
        throw std::invalid_argument("mma: inlier count exceeds match count");
    if (numMatches == 0) return std::nullopt;
    return static_cast<double>(numInliers) / static_cast<double>(numMatches);
}

double ace(const match::Homography& estimated, const match::Homography& truth,
           double width, double height) {
    const match::Point corners[4] = {
        {0.0, 0.0}, {0.0, height}, {width, 0.0}, {width, height}};
    double sum = 0.0;
    for (const match::Point& c : corners) {
        try {
            const match::Point a = match::project(c, estimated);
            const match::Point b = match::project(c, truth);
            const double dx = a.x - b.x;
            const double dy = a.y - b.y;
            sum += std::sqrt(dx * dx + dy * dy);
        } catch (const ProjectionError&) {
            return std::numeric_limits<double>::infinity();
        }
    }
    return sum / 4.0;
}

bool success(double aceValue) { return aceValue < 40.0; }

double sr(const std::vector<double>& aces) {
    if (aces.empty()) throw std::invalid_argument("sr: empty list");
    long long ok = 0;
    for (double a : aces)
        if (success(a)) ++ok;
    return static_cast<double>(ok) / static_cast<double>(aces.size());
}

namespace {

double true_residual(const std::pair<match::Point, match::Point>& pr,
                     const match::Homography& trueT) {
    try {
        const match::Point q = match::project(pr.first, trueT);
        const double dx = q.x - pr.second.x;
        const double dy = q.y - pr.second.y;
        return std::sqrt(dx * dx + dy * dy);
    } catch (const ProjectionError&) {
        return std::numeric_limits<double>::infinity();
    }
}

} // namespace

std::optional<double> delta_p(const match::MatchSet& matches,
                              const match::Homography& trueT) {
    if (matches.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& pr : matches) sum += true_residual(pr, trueT);
    return sum / static_cast<double>(matches.size());
}

CorrectMetrics correct_metrics(const match::MatchSet& matches,
                               const match::Homography& trueT, double delta) {
    if (delta < 0.0) throw std::invalid_argument("correct_metrics: delta must be >= 0");
    CorrectMetrics out;
    if (matches.empty()) return out;
    double sum = 0.0;
    for (const auto& pr : matches) {
        const double r = true_residual(pr, trueT);
        if (r <= delta) {
            ++out.correctCount;
            sum += r;
        }
    }
    out.cmr = static_cast<double>(out.correctCount) / static_cast<double>(matches.size());
    if (out.correctCount > 0) out.le = sum / static_cast<double>(out.correctCount);
    return out;
}

SimilarityReport similarity_table(
    const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
    const sim::SsimConfig& ssimCfg) {
    if (pairs.empty()) throw std::invalid_argument("similarity_table: empty input");
    SimilarityReport out;
    out.count = static_cast<int>(pairs.size());
    double rmseSum = 0.0, psnrSum = 0.0, ssimSum = 0.0;
    int psnrCount = 0;
    for (const auto& [a, b] : pairs) {
        rmseSum += sim::rmse(a, b);
        const double p = sim::psnr(a, b);
        if (std::isinf(p)) {
            ++out.psnrExcluded;
        } else {
            psnrSum += p;
            ++psnrCount;
        }
        ssimSum += sim::ssim(a, b, ssimCfg);
    }
    out.meanRmse = rmseSum / out.count;
    out.meanPsnr = psnrCount > 0 ? psnrSum / psnrCount : 0.0;
    out.meanSsim = ssimSum / out.count;
    return out;
}

// -----------------------------------------------------------------------------
// Dataset evaluation
// -----------------------------------------------------------------------------

DatasetReport evaluate_dataset(const std::vector<synth::WarpedPair>& pairs,
                               const Pipeline& pipeline, const MatcherConfig& matcher,
                               const std::vector<double>& deltaGrid) {
    if (pairs.empty()) throw std::invalid_argument("evaluate_dataset: empty pair list");
    for (std::size_t i = 1; i < deltaGrid.size(); ++i)
        if (deltaGrid[i] < deltaGrid[i - 1])
            throw std::invalid_argument("evaluate_dataset: delta grid must be ascending");

    const int n = static_cast<int>(pairs.size());
    const shared::SharedModel* model = pipeline.model;

    // Matching sides and aligned similarity pairs per input pair. V1 outputs
    // are low contrast and get pooled percentile re-normalization per branch
    // before any scoring.
    std::vector<ImageTensor> sideA(n), sideB(n);
    std::vector<std::pair<ImageTensor, ImageTensor>> simPairs;
    if (model == nullptr) {
        for (int i = 0; i < n; ++i) {
            sideA[i] = gray_average(pairs[i].warpedX);
            sideB[i] = gray_average(select_channels(pairs[i].base.y, pipeline.rgbIndices));
            if (pairs[i].base.x.channels > 0)
                simPairs.emplace_back(replicate_channel(pairs[i].base.x, 0,
                                                        static_cast<int>(pipeline.rgbIndices.size())),
                                      select_channels(pairs[i].base.y, pipeline.rgbIndices));
        }
    } else {
        std::vector<ImageTensor> xtWarped(n), yt(n), xtBase;
        std::vector<int> simIndex(n, -1);
        for (int i = 0; i < n; ++i) {
            xtWarped[i] = net::forward(model->specX, model->paramsX, pairs[i].warpedX);
            yt[i] = net::forward(model->specY, model->paramsY, pairs[i].base.y);
            if (pairs[i].base.x.channels > 0) {
                simIndex[i] = static_cast<int>(xtBase.size());
                xtBase.push_back(net::forward(model->specX, model->paramsX, pairs[i].base.x));
            }
        }
        if (model->variant == shared::Variant::V1) {
            std::vector<ImageTensor> xBranch = xtWarped;
            xBranch.insert(xBranch.end(), xtBase.begin(), xtBase.end());
            shared::renormalize_branch(xBranch);
            shared::renormalize_branch(yt);
            for (int i = 0; i < n; ++i) xtWarped[i] = std::move(xBranch[i]);
            for (std::size_t k = 0; k < xtBase.size(); ++k)
                xtBase[k] = std::move(xBranch[n + k]);
        }
        for (int i = 0; i < n; ++i) {
            sideA[i] = gray_average(xtWarped[i]);
            sideB[i] = gray_average(yt[i]);
            if (simIndex[i] >= 0)
                simPairs.emplace_back(xtBase[simIndex[i]], yt[i]);
        }
    }

    DatasetReport report;
    report.deltaGrid = deltaGrid;
    report.rows.resize(n);
    for (int i = 0; i < n; ++i) {
        PairEvaluation& row = report.rows[i];
        row.pairId = i;
        row.ace = std::numeric_limits<double>::infinity();

        const auto kpsA = match::detect(sideA[i], matcher.maxKeypoints, matcher.patchSize / 2);
        const auto kpsB = match::detect(sideB[i], matcher.maxKeypoints, matcher.patchSize / 2);
        match::MatchSet matches;
        if (!kpsA.empty() && !kpsB.empty()) {
            std::vector<match::Descriptor> descA, descB;
            descA.reserve(kpsA.size());
            descB.reserve(kpsB.size());
            for (const auto& kp : kpsA)
                descA.push_back(match::describe(sideA[i], kp, matcher.patchSize));
            for (const auto& kp : kpsB)
                descB.push_back(match::describe(sideB[i], kp, matcher.patchSize));
            matches = match::to_match_set(match::match_mutual_nn(descA, descB), kpsA, kpsB);
        }
        row.numMatches = static_cast<long long>(matches.size());
        row.deltaP = delta_p(matches, pairs[i].trueT);
        row.perDelta.reserve(deltaGrid.size());
        for (double d : deltaGrid)
            row.perDelta.push_back(correct_metrics(matches, pairs[i].trueT, d));

        Rng ransacRng(mix_seed(matcher.seed, static_cast<std::uint64_t>(i)));
        const auto result = match::ransac(matches, matcher.inlierThreshold,
                                          matcher.ransacIterations, ransacRng);
        if (result) {
            row.numInliers = static_cast<long long>(result->inliers.size());
            row.ace = ace(result->t, pairs[i].trueT, sideA[i].width, sideA[i].height);
        }
        row.mma = mma(row.numInliers, row.numMatches);
        row.success = success(row.ace);
    }

    // Aggregates, ordered over pair index so they reproduce exactly.
    long long successCount = 0;
    double aceSum = 0.0, mmaSum = 0.0;
    double deltaPSum = 0.0;
    long long deltaPCount = 0;
    double matchSum = 0.0, inlierSum = 0.0;
    for (const PairEvaluation& row : report.rows) {
        matchSum += static_cast<double>(row.numMatches);
        inlierSum += static_cast<double>(row.numInliers);
        if (row.success) {
            ++successCount;
            aceSum += row.ace;
            mmaSum += *row.mma;
        }
        if (row.deltaP) {
            deltaPSum += *row.deltaP;
            ++deltaPCount;
        }
    }
    report.sr = static_cast<double>(successCount) / static_cast<double>(n);
    if (successCount > 0) {
        report.meanAce = aceSum / static_cast<double>(successCount);
        report.meanMma = mmaSum / static_cast<double>(successCount);
    }
    if (deltaPCount > 0) report.meanDeltaP = deltaPSum / static_cast<double>(deltaPCount);
    report.meanNumMatches = matchSum / static_cast<double>(n);
    report.meanNumInliers = inlierSum / static_cast<double>(n);

    report.perDelta.resize(deltaGrid.size());
    for (std::size_t d = 0; d < deltaGrid.size(); ++d) {
        DeltaAggregate& agg = report.perDelta[d];
        agg.delta = deltaGrid[d];
        double cmrSum = 0.0, leSum = 0.0, correctSum = 0.0;
        long long cmrCount = 0, leCount = 0;
        for (const PairEvaluation& row : report.rows) {
            const CorrectMetrics& cm = row.perDelta[d];
            if (cm.cmr) {
                cmrSum += *cm.cmr;
                correctSum += static_cast<double>(cm.correctCount);
                ++cmrCount;
            }
            if (cm.le) {
                leSum += *cm.le;
                ++leCount;
            }
        }
        if (cmrCount > 0) {
            agg.cmr = cmrSum / static_cast<double>(cmrCount);
            agg.meanCorrect = correctSum / static_cast<double>(cmrCount);
        }
        if (leCount > 0) agg.le = leSum / static_cast<double>(leCount);
    }

    if (!simPairs.empty())
        report.similarity = similarity_table(simPairs, pipeline.ssimCfg);
    return report;
}

// -----------------------------------------------------------------------------
// Report files
// -----------------------------------------------------------------------------

std::string format_metric(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

namespace {

std::string opt_str(const std::optional<double>& v) {
    return v ? format_metric(*v) : std::string();
}

} // namespace

void write_reports(const std::string& dir, const std::string& condition,
                   const DatasetReport& report) {
    std::error_code ec;
    fs::create_directories(dir, ec);

    {
        std::ofstream out(fs::path(dir) / (condition + "_pairs.csv"), std::ios::trunc);
        if (!out) throw IoError("write_reports: cannot open pairs csv");
        out << "pairId,success,ace,mma,deltaP,numMatches,numInliers";
        for (double d : report.deltaGrid)
            out << ",cmr@" << format_metric(d);
        for (double d : report.deltaGrid)
            out << ",le@" << format_metric(d);
        out << '\n';
        for (const PairEvaluation& row : report.rows) {
            out << row.pairId << ',' << (row.success ? 1 : 0) << ','
                << format_metric(row.ace) << ',' << opt_str(row.mma) << ','
                << opt_str(row.deltaP) << ',' << row.numMatches << ',' << row.numInliers;
            for (const CorrectMetrics& cm : row.perDelta) out << ',' << opt_str(cm.cmr);
            for (const CorrectMetrics& cm : row.perDelta) out << ',' << opt_str(cm.le);
            out << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / (condition + "_summary.txt"), std::ios::trunc);
        if (!out) throw IoError("write_reports: cannot open summary");
        out << "condition=" << condition << '\n';
        out << "pairs=" << report.rows.size() << '\n';
        out << "sr=" << format_metric(report.sr) << '\n';
        out << "mean_ace_success=" << opt_str(report.meanAce) << '\n';
        out << "mean_mma_success=" << opt_str(report.meanMma) << '\n';
        out << "mean_delta_p=" << opt_str(report.meanDeltaP) << '\n';
        out << "mean_num_matches=" << format_metric(report.meanNumMatches) << '\n';
        out << "mean_num_inliers=" << format_metric(report.meanNumInliers) << '\n';
        for (const DeltaAggregate& agg : report.perDelta) {
            const std::string d = format_metric(agg.delta);
            out << "cmr@" << d << '=' << opt_str(agg.cmr) << '\n';
            out << "le@" << d << '=' << opt_str(agg.le) << '\n';
            out << "mean_correct@" << d << '=' << opt_str(agg.meanCorrect) << '\n';
        }
        if (report.similarity) {
            out << "sim_pairs=" << report.similarity->count << '\n';
            out << "sim_mean_rmse=" << format_metric(report.similarity->meanRmse) << '\n';
            out << "sim_mean_psnr=" << format_metric(report.similarity->meanPsnr) << '\n';
            out << "sim_psnr_excluded=" << report.similarity->psnrExcluded << '\n';
            out << "sim_mean_ssim=" << format_metric(report.similarity->meanSsim) << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / (condition + "_sweep.csv"), std::ios::trunc);
        if (!out) throw IoError("write_reports: cannot open sweep csv");
        out << "delta,cmr,le\n";
        for (const DeltaAggregate& agg : report.perDelta)
            out << format_metric(agg.delta) << ',' << opt_str(agg.cmr) << ','
                << opt_str(agg.le) << '\n';
    }
}

} // namespace smt::eval
