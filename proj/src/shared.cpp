#include "smt/shared.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "smt/errors.hpp"
#include "smt/rng.hpp"

namespace smt::shared {

void LossWeights::validate() const {
    for (double v : {alpha, beta, gamma, eta})
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
    if (!(beta + gamma > 0.0))
        throw std::invalid_argument("LossWeights: beta + gamma must be positive");
}

void TrainConfig::validate() const {
    if (sharedChannels < 1 || kX < 1 || kY < 1)
        throw std::invalid_argument("TrainConfig: channel counts must be positive");
    if (epochs < 1 || batchSize < 1 || batchesPerEpoch < 1)
        throw std::invalid_argument("TrainConfig: epochs/batch sizes must be positive");
    if (!(schedule.warmupLr > 0.0) || schedule.warmupLr > schedule.baseLr)
        throw std::invalid_argument("TrainConfig: need 0 < warmupLr <= baseLr");
    if (rgbIndices.empty())
        throw std::invalid_argument("TrainConfig: rgbIndices must be non-empty");
    for (int idx : rgbIndices)
        if (idx < 0 || idx >= kY)
            throw std::invalid_argument("TrainConfig: rgb index out of range");
    weights.validate();
}

SharedModel make_model(const TrainConfig& cfg) {
    cfg.validate();
    SharedModel m;
    m.variant = cfg.variant;
    m.sharedChannels = cfg.sharedChannels;
    m.specX = {cfg.kX, cfg.sharedChannels, cfg.depth, cfg.baseWidth, true};
    m.specY = {cfg.kY, cfg.sharedChannels, cfg.depth, cfg.baseWidth, true};
    Rng rx(mix_seed(cfg.seed, 0xF1));
    Rng ry(mix_seed(cfg.seed, 0xF2));
    m.paramsX = net::init_params(m.specX, rx);
    m.paramsY = net::init_params(m.specY, ry);
    if (cfg.variant == Variant::V1) {
        m.specXInv = net::ModelSpec{cfg.sharedChannels, cfg.kX, cfg.depth, cfg.baseWidth, false};
        m.specYInv = net::ModelSpec{cfg.sharedChannels, cfg.kY, cfg.depth, cfg.baseWidth, false};
        Rng rxi(mix_seed(cfg.seed, 0xF3));
        Rng ryi(mix_seed(cfg.seed, 0xF4));
        m.paramsXInv = net::init_params(*m.specXInv, rxi);
        m.paramsYInv = net::init_params(*m.specYInv, ryi);
    }
    return m;
}

// -----------------------------------------------------------------------------
// Loss terms
// -----------------------------------------------------------------------------

SimilarityLossResult similarity_loss(const ImageTensor& xt, const ImageTensor& yt,
                                     const LossWeights& weights,
                                     const sim::SsimConfig& ssimCfg) {
    if (!xt.same_shape(yt))
        throw std::invalid_argument("similarity_loss: shape mismatch");

    SimilarityLossResult out;
    out.gradXt = ImageTensor(xt.channels, xt.height, xt.width);
    out.gradYt = ImageTensor(xt.channels, xt.height, xt.width);

    const double m = sim::mse(xt, yt);
    const ImageTensor gm = sim::mse_grad(xt, yt);
    const sim::SsimWithGrads s = sim::ssim_value_and_grads(xt, yt, ssimCfg);

    out.value = weights.beta * m + weights.gamma * (1.0 - s.value);
    for (std::size_t i = 0; i < out.gradXt.size(); ++i) {
        out.gradXt.data[i] = weights.beta * gm.data[i] - weights.gamma * s.gradA.data[i];
        out.gradYt.data[i] = -weights.beta * gm.data[i] - weights.gamma * s.gradB.data[i];
    }
    return out;
}

namespace {

// L_D(a, b) = MSE(a, b) + DiSSIM(a, b); gradient w.r.t. the reconstruction b.
std::pair<double, ImageTensor> reconstruction_loss(const ImageTensor& original,
                                                   const ImageTensor& recon,
                                                   const sim::SsimConfig& ssimCfg) {
    const double m = sim::mse(original, recon);
    const sim::SsimWithGrads s = sim::ssim_value_and_grads(recon, original, ssimCfg);
    ImageTensor grad = sim::mse_grad(recon, original);
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] -= s.gradA.data[i];
    return {m + (1.0 - s.value), std::move(grad)};
}

} // namespace

DegeneracyV1Result degeneracy_v1(const ImageTensor& x, const ImageTensor& xt,
                                 const ImageTensor& y, const ImageTensor& yt,
                                 const SharedModel& model, const LossWeights& weights,
                                 const sim::SsimConfig& ssimCfg) {
    if (!model.has_inverses())
        throw ConfigError("degeneracy_v1: model has no inverse networks");

    net::ForwardCache cacheXI, cacheYI;
    DegeneracyV1Result out;
    out.xHat = net::forward(*model.specXInv, *model.paramsXInv, xt, &cacheXI);
    out.yHat = net::forward(*model.specYInv, *model.paramsYInv, yt, &cacheYI);

    auto [lossX, gradXHat] = reconstruction_loss(x, out.xHat, ssimCfg);
    auto [lossY, gradYHat] = reconstruction_loss(y, out.yHat, ssimCfg);
    out.value = lossX + weights.eta * lossY;

    net::BackwardResult bx =
        net::backward(*model.specXInv, *model.paramsXInv, cacheXI, gradXHat);
    for (double& v : gradYHat.data) v *= weights.eta;
    net::BackwardResult by =
        net::backward(*model.specYInv, *model.paramsYInv, cacheYI, gradYHat);

    out.gradXt = std::move(bx.inputGrad);
    out.gradYt = std::move(by.inputGrad);
    out.gradParamsXInv = std::move(bx.paramGrads);
    out.gradParamsYInv = std::move(by.paramGrads);
    return out;
}

DegeneracyV2Result degeneracy_v2(const ImageTensor& xt, const ImageTensor& y,
                                 const std::vector<int>& rgbIndices,
                                 const sim::SsimConfig& ssimCfg) {
    const ImageTensor gx = gray_average(xt);
    const ImageTensor gy = gray_average(select_channels(y, rgbIndices));
    const sim::SsimWithGrads s = sim::ssim_value_and_grads(gx, gy, ssimCfg);

    DegeneracyV2Result out;
    out.value = 1.0 - s.value;
    out.gradXt = ImageTensor(xt.channels, xt.height, xt.width);
    const double invK = 1.0 / xt.channels;
    const std::size_t plane = out.gradXt.plane();
    for (int c = 0; c < xt.channels; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out.gradXt.data[c * plane + i] = -s.gradA.data[i] * invK;
    return out;
}

// -----------------------------------------------------------------------------
// Batch objective
// -----------------------------------------------------------------------------

namespace {

struct SampleResult {
    double loss = 0.0;
    net::Grads gX, gY;
    net::Grads gXInv, gYInv; // empty unless V1
};

SampleResult sample_objective(const XyPair& sample, const SharedModel& model,
                              const TrainConfig& cfg) {
    net::ForwardCache cacheX, cacheY;
    const ImageTensor xt = net::forward(model.specX, model.paramsX, sample.x, &cacheX);
    const ImageTensor yt = net::forward(model.specY, model.paramsY, sample.y, &cacheY);

    SimilarityLossResult simL = similarity_loss(xt, yt, cfg.weights, cfg.ssimCfg);
    SampleResult out;
    out.loss = simL.value;
    ImageTensor gradXt = std::move(simL.gradXt);
    ImageTensor gradYt = std::move(simL.gradYt);
    const double alpha = cfg.weights.alpha;

    if (cfg.variant == Variant::V2) {
        DegeneracyV2Result deg = degeneracy_v2(xt, sample.y, cfg.rgbIndices, cfg.ssimCfg);
        out.loss += alpha * deg.value;
        for (std::size_t i = 0; i < gradXt.size(); ++i)
            gradXt.data[i] += alpha * deg.gradXt.data[i];
    } else {
        DegeneracyV1Result deg =
            degeneracy_v1(sample.x, xt, sample.y, yt, model, cfg.weights, cfg.ssimCfg);
        out.loss += alpha * deg.value;
        for (std::size_t i = 0; i < gradXt.size(); ++i) {
            gradXt.data[i] += alpha * deg.gradXt.data[i];
            gradYt.data[i] += alpha * deg.gradYt.data[i];
        }
        out.gXInv = std::move(deg.gradParamsXInv);
        out.gYInv = std::move(deg.gradParamsYInv);
        for (auto& t : out.gXInv)
            for (double& v : t) v *= alpha;
        for (auto& t : out.gYInv)
            for (double& v : t) v *= alpha;
    }

    out.gX = net::backward(model.specX, model.paramsX, cacheX, gradXt).paramGrads;
    out.gY = net::backward(model.specY, model.paramsY, cacheY, gradYt).paramGrads;
    return out;
}

} // namespace

BatchResult batch_objective(const std::vector<XyPair>& batch, const SharedModel& model,
                            const TrainConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("batch_objective: empty batch");

    const int n = static_cast<int>(batch.size());
    std::vector<SampleResult> results(n);

    int threads = cfg.threads;
    if (threads <= 0)
        threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), n));
    threads = std::min(threads, n);

    if (threads <= 1) {
        for (int i = 0; i < n; ++i) results[i] = sample_objective(batch[i], model, cfg);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (int i = t; i < n; i += threads)
                    results[i] = sample_objective(batch[i], model, cfg);
            });
        for (auto& th : pool) th.join();
    }

    // Ordered reduction over the batch keeps results bit-reproducible.
    BatchResult out;
    out.gradsX = net::zero_grads(model.paramsX);
    out.gradsY = net::zero_grads(model.paramsY);
    if (model.has_inverses()) {
        out.gradsXInv = net::zero_grads(*model.paramsXInv);
        out.gradsYInv = net::zero_grads(*model.paramsYInv);
    }
    const double invN = 1.0 / static_cast<double>(n);
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(results[i].loss))
            throw DivergenceError("batch_objective: non-finite loss at sample " +
                                  std::to_string(i));
        out.value += results[i].loss;
        net::accumulate_grads(out.gradsX, results[i].gX, invN);
        net::accumulate_grads(out.gradsY, results[i].gY, invN);
        if (out.gradsXInv) net::accumulate_grads(*out.gradsXInv, results[i].gXInv, invN);
        if (out.gradsYInv) net::accumulate_grads(*out.gradsYInv, results[i].gYInv, invN);
    }
    out.value *= invN;
    return out;
}

// -----------------------------------------------------------------------------
// Training
// -----------------------------------------------------------------------------

TrainResult train(const std::vector<XyPair>& dataset, const TrainConfig& cfg,
                  const EpochCallback& onEpoch) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    for (const XyPair& p : dataset) {
        if (p.x.channels != cfg.kX || p.y.channels != cfg.kY)
            throw std::invalid_argument("train: dataset channels do not match config");
        if (p.x.height != p.y.height || p.x.width != p.y.width)
            throw std::invalid_argument("train: pair shapes do not match");
    }

    TrainResult out;
    out.model = make_model(cfg);

    net::OptimizerState stateX = net::OptimizerState::init(out.model.paramsX);
    net::OptimizerState stateY = net::OptimizerState::init(out.model.paramsY);
    net::OptimizerState stateXI, stateYI;
    if (out.model.has_inverses()) {
        stateXI = net::OptimizerState::init(*out.model.paramsXInv);
        stateYI = net::OptimizerState::init(*out.model.paramsYInv);
    }

    Rng rng(mix_seed(cfg.seed, 0xB00));
    const int n = static_cast<int>(dataset.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = net::lr_at(cfg.schedule, epoch);
        double lossSum = 0.0;
        for (int b = 0; b < cfg.batchesPerEpoch; ++b) {
            std::vector<XyPair> batch(cfg.batchSize);
            for (int k = 0; k < cfg.batchSize; ++k) {
                const int idx = rng.uniform_int(0, n - 1);
                const auto op = static_cast<Dihedral>(rng.uniform_int(0, 7));
                batch[k].x = apply_dihedral(dataset[idx].x, op);
                batch[k].y = apply_dihedral(dataset[idx].y, op);
            }
            BatchResult res;
            try {
                res = batch_objective(batch, out.model, cfg);
            } catch (const DivergenceError& e) {
                throw DivergenceError("train: epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(b) + ": " + e.what());
            }
            net::nadam_step(out.model.paramsX, res.gradsX, stateX, lr);
            net::nadam_step(out.model.paramsY, res.gradsY, stateY, lr);
            if (out.model.has_inverses()) {
                net::nadam_step(*out.model.paramsXInv, *res.gradsXInv, stateXI, lr);
                net::nadam_step(*out.model.paramsYInv, *res.gradsYInv, stateYI, lr);
            }
            lossSum += res.value;
        }
        out.trace.push_back({epoch, lossSum / cfg.batchesPerEpoch, lr});
        if (onEpoch) onEpoch(epoch, out.model);
    }
    return out;
}

std::pair<ImageTensor, ImageTensor> transform_pair(const SharedModel& model,
                                                   const ImageTensor& x,
                                                   const ImageTensor& y) {
    return {net::forward(model.specX, model.paramsX, x),
            net::forward(model.specY, model.paramsY, y)};
}

void renormalize_branch(std::vector<ImageTensor>& images) {
    if (images.empty()) return;
    const NormalizationStats stats = compute_percentiles(images, 0.5, 99.5);
    for (ImageTensor& img : images) img = normalize(img, stats);
}

// -----------------------------------------------------------------------------
// Model and trace I/O
// -----------------------------------------------------------------------------

void save_model(const std::string& path, const SharedModel& model) {
    net::Checkpoint ck;
    ck.variantTag = model.variant == Variant::V1 ? 1 : 2;
    ck.sharedChannels = static_cast<std::uint32_t>(model.sharedChannels);
    ck.entries.push_back({"fx", model.specX, model.paramsX});
    ck.entries.push_back({"fy", model.specY, model.paramsY});
    if (model.has_inverses()) {
        ck.entries.push_back({"fxinv", *model.specXInv, *model.paramsXInv});
        ck.entries.push_back({"fyinv", *model.specYInv, *model.paramsYInv});
    }
    net::save_smck(path, ck);
}

SharedModel load_model(const std::string& path) {
    net::Checkpoint ck = net::load_smck(path);
    if (ck.variantTag != 1 && ck.variantTag != 2)
        throw FormatError("load_model: not a shared-model checkpoint: " + path);
    SharedModel m;
    m.variant = ck.variantTag == 1 ? Variant::V1 : Variant::V2;
    m.sharedChannels = static_cast<int>(ck.sharedChannels);

    bool haveFx = false, haveFy = false;
    for (auto& e : ck.entries) {
        if (e.name == "fx") {
            m.specX = e.spec;
            m.paramsX = std::move(e.params);
            haveFx = true;
        } else if (e.name == "fy") {
            m.specY = e.spec;
            m.paramsY = std::move(e.params);
            haveFy = true;
        } else if (e.name == "fxinv") {
            m.specXInv = e.spec;
            m.paramsXInv = std::move(e.params);
        } else if (e.name == "fyinv") {
            m.specYInv = e.spec;
            m.paramsYInv = std::move(e.params);
        } else {
            throw FormatError("load_model: unexpected network '" + e.name + "' in " + path);
        }
    }
    if (!haveFx || !haveFy)
        throw FormatError("load_model: checkpoint lacks fx/fy networks: " + path);
    if (m.variant == Variant::V1 && !m.has_inverses())
        throw FormatError("load_model: V1 checkpoint lacks inverse networks: " + path);
    return m;
}

void write_loss_trace(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_loss_trace: cannot open " + path);
    out << "epoch,meanLoss,lr\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, end);
    };
    for (const TraceRow& row : trace)
        out << row.epoch << ',' << fmt(row.meanLoss) << ',' << fmt(row.lr) << '\n';
    if (!out) throw IoError("write_loss_trace: write failed for " + path);
}

} // namespace smt::shared
