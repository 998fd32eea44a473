#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "smt/image.hpp"
#include "smt/rng.hpp"

namespace smt::match {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// 3x3 projective transform, row-major. Normalized so m[8] == 1 whenever its
// magnitude allows.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return {}; }
    static Homography translation(double tx, double ty);

    double det() const;
    bool invertible() const { return std::abs(det()) > 1e-12; }
    Homography inverse() const; // throws EstimationError when singular
    Homography composed_with(const Homography& first) const; // this * first
    void normalize();
};

// t(p, T): homogeneous projection with perspective divide.
// Throws ProjectionError on zero depth.
Point project(const Point& p, const Homography& t);

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;
};

struct Descriptor {
    std::vector<double> v;
    bool flat = false; // patch had no contrast; excluded from matching
};

using MatchSet = std::vector<std::pair<Point, Point>>;

// Harris corners (Sobel gradients, 3x3 Gaussian-weighted structure tensor,
// k = 0.04) with 3x3 non-maximum suppression, a border margin, and a score
// cap. Ties break on (row, col) order.
std::vector<Keypoint> detect(const ImageTensor& gray, int maxKeypoints = 4096,
                             int borderMargin = 8);

// Bilinearly sampled patchSize^2 window per channel, concatenated,
// zero-meaned, L2-normalized.
Descriptor describe(const ImageTensor& img, const Keypoint& kp, int patchSize = 16);

// Mutual nearest neighbors under Euclidean distance; ties break on lowest
// index; flat descriptors never match.
std::vector<std::pair<int, int>> match_mutual_nn(const std::vector<Descriptor>& a,
                                                 const std::vector<Descriptor>& b);

MatchSet to_match_set(const std::vector<std::pair<int, int>>& indexPairs,
                      const std::vector<Keypoint>& a, const std::vector<Keypoint>& b);

// Hartley-normalized DLT over >= 4 correspondences.
Homography estimate_homography(const MatchSet& pairs);

struct RansacResult {
    Homography t;
    MatchSet inliers;
};

// Hypothesize-and-verify with uniform 4-subsets; best inlier count wins, ties
// go to lower reprojection RMS; the winner is refit on its inlier set. Returns
// nullopt when no hypothesis reaches 4 inliers.
std::optional<RansacResult> ransac(const MatchSet& matches, double inlierThreshold,
                                   int maxIterations, Rng& rng);

} // namespace smt::match
