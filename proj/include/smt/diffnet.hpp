#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "smt/image.hpp"
#include "smt/rng.hpp"

namespace smt::net {

struct ModelSpec {
    int inChannels = 1;
    int outChannels = 1;
    int depth = 3;      // encoder stages
    int baseWidth = 16; // doubled per stage
    bool finalSigmoid = true;

    int stage_width(int stage) const { return baseWidth << stage; }
    void validate() const;
    // Input H and W must be divisible by 2^depth.
    bool accepts(int h, int w) const;
};

struct ParamTensor {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<double> data;

    std::size_t size() const { return data.size(); }
};

struct ModelParams {
    std::vector<ParamTensor> tensors;
};

// Per-tensor gradient buffers, parallel to ModelParams::tensors.
using Grads = std::vector<std::vector<double>>;

Grads zero_grads(const ModelParams& params);
void accumulate_grads(Grads& into, const Grads& from, double scale = 1.0);

// Kernels uniform in +-sqrt(6 / fan_in), biases zero.
ModelParams init_params(const ModelSpec& spec, Rng& rng);

// Activations retained by forward for the matching backward call.
struct ForwardCache {
    std::vector<ImageTensor> encIn;   // input of enc conv, per stage
    std::vector<ImageTensor> encPre;  // pre-activation of enc conv
    std::vector<ImageTensor> skip;    // leaky-relu output (skip source / down input)
    std::vector<ImageTensor> decIn;   // concatenated decoder conv input
    std::vector<ImageTensor> decPre;  // pre-activation of dec conv
    ImageTensor headIn;
    ImageTensor sigmoidOut; // only when finalSigmoid
};

// Encoder: depth stages of [conv3x3 -> leaky-relu(0.1) -> stride-2 conv3x3].
// Decoder mirrors with nearest-neighbor 2x upsampling and skip concatenation,
// then a 1x1 head conv, sigmoid iff finalSigmoid. H and W are preserved.
ImageTensor forward(const ModelSpec& spec, const ModelParams& params,
                    const ImageTensor& input, ForwardCache* cache = nullptr);

struct BackwardResult {
    Grads paramGrads;
    ImageTensor inputGrad;
};

BackwardResult backward(const ModelSpec& spec, const ModelParams& params,
                        const ForwardCache& cache, const ImageTensor& outputGrad);

struct OptimizerState {
    long long step = 0;
    double mu = 0.9;   // first-moment decay
    double nu = 0.999; // second-moment decay
    double eps = 1e-8;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static OptimizerState init(const ModelParams& params);
};

// Nesterov-accelerated adaptive-moment update:
//   m <- mu m + (1-mu) g;  v <- nu v + (1-nu) g^2
//   theta <- theta - lr (mu m/(1-mu^(t+1)) + (1-mu) g/(1-mu^t)) / (sqrt(v/(1-nu^t)) + eps)
// Throws DivergenceError on non-finite gradients.
void nadam_step(ModelParams& params, const Grads& grads, OptimizerState& state, double lr);

struct LrSchedule {
    double baseLr = 2e-4;
    double warmupLr = 1e-8;
    int warmupEpochs = 4;
};

// Linear warmup from warmupLr to baseLr over warmupEpochs, then constant.
double lr_at(const LrSchedule& schedule, int epoch);

// --- SMCK checkpoint container ------------------------------------------------
// "SMCK" | u32 version | u8 variant tag | u32 shared channels | u32 net count |
// per network: u32 name length + name | ModelSpec | u32 tensor count |
// per tensor: u32 name length + name | u32 rank + u32 dims | binary32 LE payload.
// Tensor order is the deterministic construction order of init_params.

struct CheckpointEntry {
    std::string name;
    ModelSpec spec;
    ModelParams params;
};

struct Checkpoint {
    std::uint8_t variantTag = 0; // 0 plain container, 1/2 shared-model variants
    std::uint32_t sharedChannels = 0;
    std::vector<CheckpointEntry> entries;
};

void save_smck(const std::string& path, const Checkpoint& ck);
Checkpoint load_smck(const std::string& path);

// Single-network convenience wrappers.
void save_checkpoint(const std::string& path, const ModelSpec& spec,
                     const ModelParams& params);
std::pair<ModelSpec, ModelParams> load_checkpoint(const std::string& path);

} // namespace smt::net
