#include "smt/matchreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "smt/errors.hpp"

namespace smt::match {

// -----------------------------------------------------------------------------
// Homography
// -----------------------------------------------------------------------------

Homography Homography::translation(double tx, double ty) {
    Homography t;
    t.m = {1, 0, tx, 0, 1, ty, 0, 0, 1};
    return t;
}

double Homography::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const double d = det();
    if (std::abs(d) <= 1e-12)
        throw EstimationError("Homography::inverse: singular matrix");
    const double inv = 1.0 / d;
    Homography r;
    r.m[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
    r.m[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
    r.m[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
    r.m[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
    r.m[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
    r.m[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
    r.m[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
    r.m[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
    r.m[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
    r.normalize();
    return r;
}

Homography Homography::composed_with(const Homography& first) const {
    Homography r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * first.m[k * 3 + j];
            r.m[i * 3 + j] = s;
        }
    return r;
}

void Homography::normalize() {
    if (std::abs(m[8]) > 1e-12) {
        const double inv = 1.0 / m[8];
        for (double& v : m) v *= inv;
    }
}

Point project(const Point& p, const Homography& t) {
    const double X = t.m[0] * p.x + t.m[1] * p.y + t.m[2];
    const double Y = t.m[3] * p.x + t.m[4] * p.y + t.m[5];
    const double Z = t.m[6] * p.x + t.m[7] * p.y + t.m[8];
    if (std::abs(Z) < 1e-15)
        throw ProjectionError("project: point maps to infinity");
    return {X / Z, Y / Z};
}

// -----------------------------------------------------------------------------
// Harris detection
// -----------------------------------------------------------------------------

std::vector<Keypoint> detect(const ImageTensor& gray, int maxKeypoints,
                             int borderMargin) {
    if (gray.channels != 1)
        throw std::invalid_argument("detect: expected a single-channel image");
    if (gray.height < 16 || gray.width < 16)
        throw std::invalid_argument("detect: image too small");
    if (maxKeypoints < 1) throw std::invalid_argument("detect: maxKeypoints < 1");

    const int H = gray.height, W = gray.width;
    const double* img = gray.channel(0);

    std::vector<double> ix(static_cast<std::size_t>(H) * W, 0.0);
    std::vector<double> iy(ix.size(), 0.0);
    for (int r = 1; r < H - 1; ++r)
        for (int c = 1; c < W - 1; ++c) {
            const double* t = img + (r - 1) * W + c;
            const double* m = img + r * W + c;
            const double* b = img + (r + 1) * W + c;
            ix[r * W + c] = (t[1] - t[-1]) + 2.0 * (m[1] - m[-1]) + (b[1] - b[-1]);
            iy[r * W + c] = (b[-1] - t[-1]) + 2.0 * (b[0] - t[0]) + (b[1] - t[1]);
        }

    // Gaussian-weighted structure tensor, [1 2 1] x [1 2 1] / 16.
    static const double kW[3] = {1.0 / 4, 2.0 / 4, 1.0 / 4};
    std::vector<double> response(ix.size(), 0.0);
    const double k = 0.04;
    for (int r = 2; r < H - 2; ++r)
        for (int c = 2; c < W - 2; ++c) {
            double sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const double wgt = kW[dr + 1] * kW[dc + 1];
                    const double gx = ix[(r + dr) * W + c + dc];
                    const double gy = iy[(r + dr) * W + c + dc];
                    sxx += wgt * gx * gx;
                    syy += wgt * gy * gy;
                    sxy += wgt * gx * gy;
                }
            const double tr = sxx + syy;
            response[r * W + c] = sxx * syy - sxy * sxy - k * tr * tr;
        }

    const int lo = std::max(borderMargin, 2);
    std::vector<Keypoint> kps;
    for (int r = lo; r < H - lo; ++r)
        for (int c = lo; c < W - lo; ++c) {
            const double v = response[r * W + c];
            if (!(v > 0.0)) continue;
            bool isMax = true;
            for (int dr = -1; dr <= 1 && isMax; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const double nv = response[(r + dr) * W + c + dc];
                    if (nv > v || (nv == v && (dr < 0 || (dr == 0 && dc < 0)))) {
                        isMax = false;
                        break;
                    }
                }
            if (isMax)
                kps.push_back({static_cast<double>(c), static_cast<double>(r), v});
        }

    std::stable_sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    if (static_cast<int>(kps.size()) > maxKeypoints) kps.resize(maxKeypoints);
    return kps;
}

// -----------------------------------------------------------------------------
// Descriptors and matching
// -----------------------------------------------------------------------------

namespace {

double bilinear(const double* plane, int H, int W, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, W - 1);
    const int y1 = std::min(y0 + 1, H - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = plane[y0 * W + x0];
    const double v01 = plane[y0 * W + x1];
    const double v10 = plane[y1 * W + x0];
    const double v11 = plane[y1 * W + x1];
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
           fy * ((1.0 - fx) * v10 + fx * v11);
}

} // namespace

Descriptor describe(const ImageTensor& img, const Keypoint& kp, int patchSize) {
    if (patchSize < 2) throw std::invalid_argument("describe: patchSize < 2");
    const double half = (patchSize - 1) / 2.0;
    if (kp.x - half < 0.0 || kp.y - half < 0.0 || kp.x + half > img.width - 1 ||
        kp.y + half > img.height - 1)
        throw std::invalid_argument("describe: patch out of bounds");

    Descriptor d;
    d.v.reserve(static_cast<std::size_t>(img.channels) * patchSize * patchSize);
    for (int c = 0; c < img.channels; ++c) {
        const double* plane = img.channel(c);
        for (int py = 0; py < patchSize; ++py)
            for (int px = 0; px < patchSize; ++px)
                d.v.push_back(bilinear(plane, img.height, img.width, kp.x - half + px,
                                       kp.y - half + py));
    }

    double mean = 0.0;
    for (double v : d.v) mean += v;
    mean /= static_cast<double>(d.v.size());
    double norm2 = 0.0;
    for (double& v : d.v) {
        v -= mean;
        norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    if (norm < 1e-9) {
        std::fill(d.v.begin(), d.v.end(), 0.0);
        d.flat = true;
        return d;
    }
    for (double& v : d.v) v /= norm;
    return d;
}

std::vector<std::pair<int, int>> match_mutual_nn(const std::vector<Descriptor>& a,
                                                 const std::vector<Descriptor>& b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("match_mutual_nn: empty descriptor list");

    auto dist2 = [](const Descriptor& p, const Descriptor& q) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            const double d = p.v[i] - q.v[i];
            s += d * d;
        }
        return s;
    };

    const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
    std::vector<int> nnA(na, -1), nnB(nb, -1);
    std::vector<double> bestA(na, std::numeric_limits<double>::infinity());
    std::vector<double> bestB(nb, std::numeric_limits<double>::infinity());
    for (int i = 0; i < na; ++i) {
        if (a[i].flat) continue;
        for (int j = 0; j < nb; ++j) {
            if (b[j].flat) continue;
            const double d = dist2(a[i], b[j]);
            if (d < bestA[i]) {
                bestA[i] = d;
                nnA[i] = j;
            }
            if (d < bestB[j]) {
                bestB[j] = d;
                nnB[j] = i;
            }
        }
    }

    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < na; ++i)
        if (nnA[i] >= 0 && nnB[nnA[i]] == i) out.emplace_back(i, nnA[i]);
    return out;
}

MatchSet to_match_set(const std::vector<std::pair<int, int>>& indexPairs,
                      const std::vector<Keypoint>& a, const std::vector<Keypoint>& b) {
    MatchSet out;
    out.reserve(indexPairs.size());
    for (const auto& [i, j] : indexPairs)
        out.push_back({{a[i].x, a[i].y}, {b[j].x, b[j].y}});
    return out;
}

// -----------------------------------------------------------------------------
// Homography estimation
// -----------------------------------------------------------------------------

namespace {

struct Similarity {
    double scale, cx, cy;
};

// Translate centroid to the origin and scale RMS distance to sqrt(2).
Similarity normalizing_transform(const MatchSet& pairs, bool source) {
    double cx = 0.0, cy = 0.0;
    for (const auto& pr : pairs) {
        const Point& p = source ? pr.first : pr.second;
        cx += p.x;
        cy += p.y;
    }
    const double n = static_cast<double>(pairs.size());
    cx /= n;
    cy /= n;
    double rms = 0.0;
    for (const auto& pr : pairs) {
        const Point& p = source ? pr.first : pr.second;
        const double dx = p.x - cx, dy = p.y - cy;
        rms += dx * dx + dy * dy;
    }
    rms = std::sqrt(rms / n);
    if (rms < 1e-12)
        throw EstimationError("estimate_homography: coincident points");
    return {std::sqrt(2.0) / rms, cx, cy};
}

} // namespace

Homography estimate_homography(const MatchSet& pairs) {
    if (pairs.size() < 4)
        throw std::invalid_argument("estimate_homography: need at least 4 pairs");

    const Similarity ns = normalizing_transform(pairs, true);
    const Similarity nd = normalizing_transform(pairs, false);

    Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
    for (const auto& pr : pairs) {
        const double x = (pr.first.x - ns.cx) * ns.scale;
        const double y = (pr.first.y - ns.cy) * ns.scale;
        const double u = (pr.second.x - nd.cx) * nd.scale;
        const double v = (pr.second.y - nd.cy) * nd.scale;
        const double r1[9] = {-x, -y, -1, 0, 0, 0, u * x, u * y, u};
        const double r2[9] = {0, 0, 0, -x, -y, -1, v * x, v * y, v};
        for (int i = 0; i < 9; ++i)
            for (int j = i; j < 9; ++j) {
                ata(i, j) += r1[i] * r1[j] + r2[i] * r2[j];
            }
    }
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < i; ++j) ata(i, j) = ata(j, i);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> solver(ata);
    if (solver.info() != Eigen::Success)
        throw EstimationError("estimate_homography: eigen decomposition failed");
    const auto& evals = solver.eigenvalues();
    const double lmax = std::max(std::abs(evals(8)), 1.0);
    if (evals(1) < 1e-10 * lmax)
        throw EstimationError("estimate_homography: degenerate configuration");
    const Eigen::Matrix<double, 9, 1> h = solver.eigenvectors().col(0);

    // Denormalize: H = Td^-1 * Hn * Ts.
    Homography hn;
    for (int i = 0; i < 9; ++i) hn.m[i] = h(i);
    Homography ts; // source normalization
    ts.m = {ns.scale, 0, -ns.scale * ns.cx, 0, ns.scale, -ns.scale * ns.cy, 0, 0, 1};
    Homography tdInv; // inverse of destination normalization
    tdInv.m = {1.0 / nd.scale, 0, nd.cx, 0, 1.0 / nd.scale, nd.cy, 0, 0, 1};

    Homography out = tdInv.composed_with(hn.composed_with(ts));
    out.normalize();
    if (!out.invertible())
        throw EstimationError("estimate_homography: singular result");
    return out;
}

// -----------------------------------------------------------------------------
// RANSAC
// -----------------------------------------------------------------------------

namespace {

bool collinear(const Point& a, const Point& b, const Point& c) {
    const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    return std::abs(cross) < 1e-9;
}

bool degenerate_sample(const MatchSet& sample) {
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            for (int k = j + 1; k < 4; ++k)
                if (collinear(sample[i].first, sample[j].first, sample[k].first))
                    return true;
    return false;
}

double residual2(const std::pair<Point, Point>& pr, const Homography& t) {
    try {
        const Point q = project(pr.first, t);
        const double dx = q.x - pr.second.x;
        const double dy = q.y - pr.second.y;
        return dx * dx + dy * dy;
    } catch (const ProjectionError&) {
        return std::numeric_limits<double>::infinity();
    }
}

} // namespace

std::optional<RansacResult> ransac(const MatchSet& matches, double inlierThreshold,
                                   int maxIterations, Rng& rng) {
    const int n = static_cast<int>(matches.size());
    if (n < 4) return std::nullopt;
    const double thr2 = inlierThreshold * inlierThreshold;

    Homography bestT;
    int bestCount = 0;
    double bestRms = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < maxIterations; ++iter) {
        int idx[4];
        for (int k = 0; k < 4; ++k) {
            bool dup;
            do {
                idx[k] = rng.uniform_int(0, n - 1);
                dup = false;
                for (int j = 0; j < k; ++j) dup = dup || idx[j] == idx[k];
            } while (dup);
        }
        MatchSet sample = {matches[idx[0]], matches[idx[1]], matches[idx[2]],
                           matches[idx[3]]};
        if (degenerate_sample(sample)) continue;

        Homography t;
        try {
            t = estimate_homography(sample);
        } catch (const EstimationError&) {
            continue;
        }

        int count = 0;
        double sum2 = 0.0;
        for (const auto& pr : matches) {
            const double r2 = residual2(pr, t);
            if (r2 <= thr2) {
                ++count;
                sum2 += r2;
            }
        }
        if (count < 4) continue;
        const double rms = std::sqrt(sum2 / count);
        if (count > bestCount || (count == bestCount && rms < bestRms)) {
            bestCount = count;
            bestRms = rms;
            bestT = t;
        }
        if (bestCount >= static_cast<int>(std::ceil(0.95 * n))) break;
    }
    if (bestCount < 4) return std::nullopt;

    auto collect = [&](const Homography& t) {
        MatchSet inl;
        for (const auto& pr : matches)
            if (residual2(pr, t) <= thr2) inl.push_back(pr);
        return inl;
    };

    RansacResult result;
    result.t = bestT;
    result.inliers = collect(bestT);
    try {
        const Homography refit = estimate_homography(result.inliers);
        result.t = refit;
        result.inliers = collect(refit);
    } catch (const EstimationError&) {
        // Keep the raw hypothesis when the refit is degenerate.
    }
    return result;
}

} // namespace smt::match
