#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smt/image.hpp"
#include "smt/matchreg.hpp"
#include "smt/shared.hpp"
#include "smt/similarity.hpp"
#include "smt/synthgen.hpp"

namespace smt::eval {

// |P+| / |P|; undefined when there are no matches.
std::optional<double> mma(long long numInliers, long long numMatches);

// Mean displacement of the four frame corners {(0,0),(0,H),(W,0),(W,H)} under
// the estimated vs. the true transformation. +inf when a corner projects to
// infinity.
double ace(const match::Homography& estimated, const match::Homography& truth,
           double width, double height);

bool success(double aceValue); // ACE < 40
double sr(const std::vector<double>& aces);

// Mean distance over P of t(p1, trueT) to p2; undefined for an empty set.
std::optional<double> delta_p(const match::MatchSet& matches,
                              const match::Homography& trueT);

struct CorrectMetrics {
    long long correctCount = 0;
    std::optional<double> cmr;
    std::optional<double> le;
};

// Pairs with true residual <= delta: their count, rate and mean residual.
CorrectMetrics correct_metrics(const match::MatchSet& matches,
                               const match::Homography& trueT, double delta);

struct SimilarityReport {
    int count = 0;
    double meanRmse = 0.0;
    double meanPsnr = 0.0; // over finite entries
    int psnrExcluded = 0;  // +inf entries left out of the mean
    double meanSsim = 0.0;
};

SimilarityReport similarity_table(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs,
                                  const sim::SsimConfig& ssimCfg);

struct PairEvaluation {
    int pairId = 0;
    bool success = false;
    double ace = 0.0; // +inf on match failure
    std::optional<double> mma;
    std::optional<double> deltaP;
    long long numMatches = 0;
    long long numInliers = 0;
    std::vector<CorrectMetrics> perDelta;
};

struct DeltaAggregate {
    double delta = 0.0;
    std::optional<double> cmr;
    std::optional<double> le;
    std::optional<double> meanCorrect;
};

struct DatasetReport {
    double sr = 0.0;
    std::optional<double> meanAce;    // over successes
    std::optional<double> meanMma;    // over successes
    std::optional<double> meanDeltaP; // over pairs with matches
    double meanNumMatches = 0.0;
    double meanNumInliers = 0.0;
    std::vector<double> deltaGrid;
    std::vector<DeltaAggregate> perDelta;
    std::optional<SimilarityReport> similarity;
    std::vector<PairEvaluation> rows;
};

struct MatcherConfig {
    int maxKeypoints = 4096;
    int patchSize = 16;
    double inlierThreshold = 3.0;
    int ransacIterations = 2000;
    std::uint64_t seed = 7;
};

// model == nullptr runs the raw-modality baseline: gray SAR against gray
// optical RGB. With a model, both sides are transformed first (V1 outputs are
// percentile-renormalized per branch).
struct Pipeline {
    const shared::SharedModel* model = nullptr;
    std::vector<int> rgbIndices{0, 1, 2};
    sim::SsimConfig ssimCfg;
};

DatasetReport evaluate_dataset(const std::vector<synth::WarpedPair>& pairs,
                               const Pipeline& pipeline, const MatcherConfig& matcher,
                               const std::vector<double>& deltaGrid);

// Writes <condition>_pairs.csv, <condition>_summary.txt and
// <condition>_sweep.csv into dir.
void write_reports(const std::string& dir, const std::string& condition,
                   const DatasetReport& report);

std::string format_metric(double v);

} // namespace smt::eval
