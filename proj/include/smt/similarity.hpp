#pragma once

#include "smt/image.hpp"

namespace smt::sim {

struct SsimConfig {
    int window = 5;
    double c1 = 0.01 * 0.01; // regularization constants for MAX = 1.0
    double c2 = 0.03 * 0.03;
    int stride = 1;
};

double mse(const ImageTensor& a, const ImageTensor& b);
double rmse(const ImageTensor& a, const ImageTensor& b);
// 10 * lg(MAX^2 / MSE); +inf when MSE == 0.
double psnr(const ImageTensor& a, const ImageTensor& b, double maxValue = 1.0);

// SSIM of two w x w single-channel patches. Means, population variances
// (divide by w^2) and covariance enter the standard two-factor formula.
double ssim_window(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg);

// Mean of ssim_window over every fully interior window at the configured
// stride, over every channel.
double ssim(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg);

double dissim(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg);

// d mse(a, b) / d a = 2 (a - b) / N
ImageTensor mse_grad(const ImageTensor& a, const ImageTensor& b);

struct SsimWithGrads {
    double value = 0.0;
    ImageTensor gradA;
    ImageTensor gradB;
};

// SSIM plus exact analytic gradients with respect to both operands.
SsimWithGrads ssim_value_and_grads(const ImageTensor& a, const ImageTensor& b,
                                   const SsimConfig& cfg);

// d ssim(a, b) / d a
ImageTensor ssim_grad(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg);

} // namespace smt::sim
