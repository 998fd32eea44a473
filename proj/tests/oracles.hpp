// Test-side reference implementations. These stay independent of the library
// code paths they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "smt/image.hpp"

namespace oracle {

inline smt::ImageTensor random_image(int c, int h, int w, std::uint64_t seed,
                                     double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 eng(seed);
    smt::ImageTensor img(c, h, w);
    for (double& v : img.data) {
        const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
        v = lo + (hi - lo) * u;
    }
    return img;
}

// Direct per-window SSIM from the definition: plain means, population
// variances and covariance, one window at a time.
inline double naive_ssim(const smt::ImageTensor& a, const smt::ImageTensor& b, int w,
                         double c1, double c2, int stride = 1) {
    double total = 0.0;
    long long count = 0;
    for (int ch = 0; ch < a.channels; ++ch)
        for (int r0 = 0; r0 + w <= a.height; r0 += stride)
            for (int c0 = 0; c0 + w <= a.width; c0 += stride) {
                const double n = static_cast<double>(w) * w;
                double ma = 0.0, mb = 0.0;
                for (int r = 0; r < w; ++r)
                    for (int c = 0; c < w; ++c) {
                        ma += a.at(ch, r0 + r, c0 + c);
                        mb += b.at(ch, r0 + r, c0 + c);
                    }
                ma /= n;
                mb /= n;
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (int r = 0; r < w; ++r)
                    for (int c = 0; c < w; ++c) {
                        const double da = a.at(ch, r0 + r, c0 + c) - ma;
                        const double db = b.at(ch, r0 + r, c0 + c) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va /= n;
                vb /= n;
                cov /= n;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

// Central finite differences of a scalar function of a flat vector.
inline std::vector<double> fd_gradient(const std::function<double()>& f,
                                       std::vector<double*> params, double eps) {
    std::vector<double> grad(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = *params[i];
        *params[i] = orig + eps;
        const double fp = f();
        *params[i] = orig - eps;
        const double fm = f();
        *params[i] = orig;
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, rel_err(a[i], b[i], floor));
    return worst;
}

} // namespace oracle
