#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smt/image.hpp"
#include "smt/matchreg.hpp"
#include "smt/rng.hpp"

namespace smt::synth {

struct SceneSpec {
    int size = 64; // H = W
    int regionCount = 12;
    double opticalNoiseSigma = 0.02;
    int speckleLooks = 4;
    // Weight of the per-region latent shared by both renders. Paired sensors
    // see correlated radiometry of the same scene; with zero correlation the
    // SAR image carries no information about optical gray structure and
    // grayscale-anchored training degenerates to constant outputs.
    double crossModalCorrelation = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;          // row-major, values in [0, regionCount)
    std::vector<double> regionLatent; // one shared brightness latent per region
};

// Voronoi partition of regionCount uniformly drawn sites; Euclidean distance,
// ties to the lowest site index. Redraws until every label occurs, then draws
// one shared latent per region.
LabelMap gen_scene(const SceneSpec& spec, Rng& rng);

// 10-channel optical-like render: per-region reflectance in [0.1, 0.9]
// (shared-latent blend per channel), a smooth multiplicative illumination
// field in [0.8, 1.2], additive Gaussian noise, clamp to [0, 1.2]. Linear
// scale.
ImageTensor render_optical(const LabelMap& labels, const SceneSpec& spec, Rng& rng);

// 2-channel SAR-like render: per-region backscatter spanning [0.01, 1] on a
// log scale (shared-latent blend per channel), multiplied by unit-mean
// Gamma(L) intensity speckle. Linear scale.
ImageTensor render_sar(const LabelMap& labels, const SceneSpec& spec, Rng& rng);

struct PairSample {
    ImageTensor x; // SAR-like, 2 channels, normalized [0, 1]
    ImageTensor y; // optical-like, 10 channels, normalized [0, 1]
    std::uint64_t sceneSeed = 0;
};

// count scenes with per-sample seeds mix_seed(spec.seed, index). SAR goes
// through dB conversion, then both branches are normalized with pooled
// dataset-global percentiles (p0.5, p99.5).
std::vector<PairSample> gen_dataset(const SceneSpec& spec, int count);

// Inverse-mapping bilinear resampling: out(p) = img(t(p, T^-1)), out-of-bounds
// positions get defaultValue. Pixel centers sit at integer coordinates.
ImageTensor warp_image(const ImageTensor& img, const match::Homography& t,
                       double defaultValue = 0.0);

struct WarpedPair {
    PairSample base;
    ImageTensor warpedX;
    match::Homography trueT; // maps warpedX coordinates into base/y coordinates
};

struct WarpRanges {
    double maxShift = 32.0;      // px
    double maxRotationDeg = 15.0;
    double scaleMin = 0.9;
    double scaleMax = 1.1;
};

// Draws a similarity transform about the image center within the ranges and
// warps pair.x with its inverse, so trueT maps warped points back onto y.
WarpedPair make_eval_pair(const PairSample& pair, Rng& rng,
                          const WarpRanges& ranges = {});

// --- dataset directory layout -------------------------------------------------
// train_manifest.csv: xPath,yPath,seed
// eval_manifest.csv:  xPath,yPath,seed,t00..t22 (trueT row-major); the
// unwarped SAR image sits next to each warped one with an "_xbase" suffix.
void write_dataset(const std::string& dir, const std::vector<PairSample>& train,
                   const std::vector<WarpedPair>& eval);
std::vector<PairSample> read_train_dataset(const std::string& dir);
std::vector<WarpedPair> read_eval_dataset(const std::string& dir);

} // namespace smt::synth
