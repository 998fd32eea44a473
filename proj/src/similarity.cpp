#include "smt/similarity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace smt::sim {

namespace {

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

struct WindowMoments {
    double muA, muB, varA, varB, cov;
};

// Two-pass moments of one w x w window; rowStride is the distance between
// consecutive rows in the underlying plane.
WindowMoments window_moments(const double* a, const double* b, int w, int rowStride) {
    const double n = static_cast<double>(w) * w;
    double sumA = 0.0, sumB = 0.0;
    for (int r = 0; r < w; ++r) {
        const double* ar = a + r * rowStride;
        const double* br = b + r * rowStride;
        for (int c = 0; c < w; ++c) {
            sumA += ar[c];
            sumB += br[c];
        }
    }
    WindowMoments m{};
    m.muA = sumA / n;
    m.muB = sumB / n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int r = 0; r < w; ++r) {
        const double* ar = a + r * rowStride;
        const double* br = b + r * rowStride;
        for (int c = 0; c < w; ++c) {
            const double da = ar[c] - m.muA;
            const double db = br[c] - m.muB;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
    }
    m.varA = va / n;
    m.varB = vb / n;
    m.cov = cov / n;
    return m;
}

double ssim_from_moments(const WindowMoments& m, const SsimConfig& cfg) {
    const double n1 = 2.0 * m.muA * m.muB + cfg.c1;
    const double n2 = 2.0 * m.cov + cfg.c2;
    const double d1 = m.muA * m.muA + m.muB * m.muB + cfg.c1;
    const double d2 = m.varA + m.varB + cfg.c2;
    return (n1 * n2) / (d1 * d2);
}

void check_window_operands(const ImageTensor& a, const ImageTensor& b,
                           const SsimConfig& cfg) {
    if (cfg.window < 1 || cfg.stride < 1)
        throw std::invalid_argument("ssim: window and stride must be positive");
    require_same_shape(a, b, "ssim");
    if (a.height < cfg.window || a.width < cfg.window)
        throw std::invalid_argument("ssim: image smaller than window");
}

} // namespace

double mse(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

double rmse(const ImageTensor& a, const ImageTensor& b) { return std::sqrt(mse(a, b)); }

double psnr(const ImageTensor& a, const ImageTensor& b, double maxValue) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(maxValue * maxValue / m);
}

double ssim_window(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg) {
    if (a.channels != 1 || b.channels != 1 || a.height != cfg.window ||
        a.width != cfg.window || !a.same_shape(b))
        throw std::invalid_argument("ssim_window: operands must be 1 x w x w patches");
    return ssim_from_moments(window_moments(a.data.data(), b.data.data(), cfg.window,
                                            cfg.window),
                             cfg);
}

double ssim(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg) {
    check_window_operands(a, b, cfg);
    const int w = cfg.window;
    double sum = 0.0;
    long long count = 0;
    for (int ch = 0; ch < a.channels; ++ch) {
        const double* pa = a.channel(ch);
        const double* pb = b.channel(ch);
        for (int r = 0; r + w <= a.height; r += cfg.stride)
            for (int c = 0; c + w <= a.width; c += cfg.stride) {
                sum += ssim_from_moments(
                    window_moments(pa + r * a.width + c, pb + r * a.width + c, w, a.width),
                    cfg);
                ++count;
            }
    }
    return sum / static_cast<double>(count);
}

double dissim(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg) {
    return 1.0 - ssim(a, b, cfg);
}

ImageTensor mse_grad(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "mse_grad");
    ImageTensor g(a.channels, a.height, a.width);
    const double scale = 2.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        g.data[i] = scale * (a.data[i] - b.data[i]);
    return g;
}

SsimWithGrads ssim_value_and_grads(const ImageTensor& a, const ImageTensor& b,
                                   const SsimConfig& cfg) {
    check_window_operands(a, b, cfg);
    const int w = cfg.window;
    const double n = static_cast<double>(w) * w;

    SsimWithGrads out;
    out.gradA = ImageTensor(a.channels, a.height, a.width);
    out.gradB = ImageTensor(a.channels, a.height, a.width);

    double sum = 0.0;
    long long count = 0;
    for (int ch = 0; ch < a.channels; ++ch) {
        const double* pa = a.channel(ch);
        const double* pb = b.channel(ch);
        double* ga = out.gradA.channel(ch);
        double* gb = out.gradB.channel(ch);
        for (int r = 0; r + w <= a.height; r += cfg.stride)
            for (int c = 0; c + w <= a.width; c += cfg.stride) {
                const int base = r * a.width + c;
                const WindowMoments m = window_moments(pa + base, pb + base, w, a.width);
                const double n1 = 2.0 * m.muA * m.muB + cfg.c1;
                const double n2 = 2.0 * m.cov + cfg.c2;
                const double d1 = m.muA * m.muA + m.muB * m.muB + cfg.c1;
                const double d2 = m.varA + m.varB + cfg.c2;
                const double s = (n1 * n2) / (d1 * d2);
                sum += s;
                ++count;

                // Quotient rule per pixel; d mu / d a_i = 1/n,
                // d var / d a_i = 2 (a_i - mu) / n, d cov / d a_i = (b_i - mu_b) / n.
                const double invDD = 1.0 / (d1 * d2);
                const double dn1A = 2.0 * m.muB / n;
                const double dd1A = 2.0 * m.muA / n;
                const double dn1B = 2.0 * m.muA / n;
                const double dd1B = 2.0 * m.muB / n;
                for (int rr = 0; rr < w; ++rr) {
                    const double* ar = pa + base + rr * a.width;
                    const double* br = pb + base + rr * a.width;
                    double* gar = ga + base + rr * a.width;
                    double* gbr = gb + base + rr * a.width;
                    for (int cc = 0; cc < w; ++cc) {
                        const double da = ar[cc] - m.muA;
                        const double db = br[cc] - m.muB;
                        const double dn2A = 2.0 * db / n;
                        const double dd2A = 2.0 * da / n;
                        const double dn2B = 2.0 * da / n;
                        const double dd2B = 2.0 * db / n;
                        gar[cc] += ((dn1A * n2 + n1 * dn2A) - s * (dd1A * d2 + d1 * dd2A)) * invDD;
                        gbr[cc] += ((dn1B * n2 + n1 * dn2B) - s * (dd1B * d2 + d1 * dd2B)) * invDD;
                    }
                }
            }
    }
    out.value = sum / static_cast<double>(count);
    const double invCount = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < out.gradA.size(); ++i) {
        out.gradA.data[i] *= invCount;
        out.gradB.data[i] *= invCount;
    }
    return out;
}

ImageTensor ssim_grad(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg) {
    return ssim_value_and_grads(a, b, cfg).gradA;
}

} // namespace smt::sim
