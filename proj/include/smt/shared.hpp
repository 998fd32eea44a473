#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smt/diffnet.hpp"
#include "smt/image.hpp"
#include "smt/similarity.hpp"

namespace smt::shared {

enum class Variant { V1 = 1, V2 = 2 };

struct LossWeights {
    double alpha = 16.0;
    double beta = 1.0;
    double gamma = 1.0;
    double eta = 1.0;

    static LossWeights v1_defaults() { return {1.0, 3.0, 16.0, 1.0}; }
    static LossWeights v2_defaults() { return {16.0, 1.0, 1.0, 1.0}; }
    void validate() const;
};

struct TrainConfig {
    Variant variant = Variant::V2;
    int sharedChannels = 3;
    int kX = 2;
    int kY = 10;
    int epochs = 30;
    int batchSize = 4;
    int batchesPerEpoch = 32;
    net::LrSchedule schedule;
    std::uint64_t seed = 1;
    LossWeights weights = LossWeights::v2_defaults();
    std::vector<int> rgbIndices{0, 1, 2};
    int depth = 3;
    int baseWidth = 16;
    sim::SsimConfig ssimCfg;
    int threads = 0; // 0 = one per batch element, capped by hardware

    void validate() const;
};

struct SharedModel {
    Variant variant = Variant::V2;
    int sharedChannels = 3;
    net::ModelSpec specX, specY;
    net::ModelParams paramsX, paramsY;
    std::optional<net::ModelSpec> specXInv, specYInv;
    std::optional<net::ModelParams> paramsXInv, paramsYInv;

    bool has_inverses() const { return paramsXInv && paramsYInv; }
};

// Freshly initialized model for the config (deterministic in cfg.seed).
SharedModel make_model(const TrainConfig& cfg);

struct XyPair {
    ImageTensor x;
    ImageTensor y;
};

// --- loss terms ----------------------------------------------------------------

struct SimilarityLossResult {
    double value = 0.0;
    ImageTensor gradXt, gradYt;
};

// beta * MSE(xt, yt) + gamma * DiSSIM(xt, yt) with exact gradients.
SimilarityLossResult similarity_loss(const ImageTensor& xt, const ImageTensor& yt,
                                     const LossWeights& weights,
                                     const sim::SsimConfig& ssimCfg);

struct DegeneracyV1Result {
    double value = 0.0;
    ImageTensor gradXt, gradYt;
    net::Grads gradParamsXInv, gradParamsYInv;
    ImageTensor xHat, yHat;
};

// Reconstruction degeneracy: L_D(x, fXinv(xt)) + eta * L_D(y, fYinv(yt)) with
// L_D(a, b) = MSE(a, b) + DiSSIM(a, b). Gradients flow through both inverse
// networks and into xt, yt.
DegeneracyV1Result degeneracy_v1(const ImageTensor& x, const ImageTensor& xt,
                                 const ImageTensor& y, const ImageTensor& yt,
                                 const SharedModel& model, const LossWeights& weights,
                                 const sim::SsimConfig& ssimCfg);

struct DegeneracyV2Result {
    double value = 0.0;
    ImageTensor gradXt;
};

// Grayscale-structure degeneracy: DiSSIM(g(xt), g(y|rgb)). The optical branch
// receives no gradient from this term.
DegeneracyV2Result degeneracy_v2(const ImageTensor& xt, const ImageTensor& y,
                                 const std::vector<int>& rgbIndices,
                                 const sim::SsimConfig& ssimCfg);

struct BatchResult {
    double value = 0.0;
    net::Grads gradsX, gradsY;
    std::optional<net::Grads> gradsXInv, gradsYInv;
};

// Mean over the batch of L + alpha * D with gradients for every trainable
// network of the variant. Throws DivergenceError on a non-finite sample loss.
BatchResult batch_objective(const std::vector<XyPair>& batch, const SharedModel& model,
                            const TrainConfig& cfg);

// --- training --------------------------------------------------------------------

struct TraceRow {
    int epoch = 0;
    double meanLoss = 0.0;
    double lr = 0.0;
};

using EpochCallback = std::function<void(int epoch, const SharedModel&)>;

struct TrainResult {
    SharedModel model;
    std::vector<TraceRow> trace;
};

TrainResult train(const std::vector<XyPair>& dataset, const TrainConfig& cfg,
                  const EpochCallback& onEpoch = {});

// xt = fX(x), yt = fY(y).
std::pair<ImageTensor, ImageTensor> transform_pair(const SharedModel& model,
                                                   const ImageTensor& x,
                                                   const ImageTensor& y);

// Percentile re-normalization (p0.5/p99.5 pooled over the set) applied to one
// branch of transformed outputs; the treatment V1 outputs get before scoring.
void renormalize_branch(std::vector<ImageTensor>& images);

// --- model and trace I/O -----------------------------------------------------------

void save_model(const std::string& path, const SharedModel& model);
SharedModel load_model(const std::string& path);

void write_loss_trace(const std::string& path, const std::vector<TraceRow>& trace);

} // namespace smt::shared
