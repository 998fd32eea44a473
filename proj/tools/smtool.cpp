// smtool: generate synthetic paired datasets, train shared-modality
// transforms, apply them, and score co-registration quality.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "smt/errors.hpp"
#include "smt/evaluation.hpp"
#include "smt/image.hpp"
#include "smt/shared.hpp"
#include "smt/synthgen.hpp"

namespace fs = std::filesystem;
using namespace smt;

namespace {

// Exit codes: 0 ok, 1 usage, 2 I/O, 3 training divergence, 4 model/shape
// mismatch, 5 empty evaluation.
enum ExitCode {
    kOk = 0,
    kUsage = 1,
    kIo = 2,
    kDivergence = 3,
    kModelMismatch = 4,
    kEmptyEval = 5,
};

std::vector<double> parse_delta_grid(const std::string& text) {
    // start:stop:step, inclusive stop within a half-step tolerance.
    double parts[3];
    std::size_t begin = 0;
    for (int i = 0; i < 3; ++i) {
        const std::size_t end = i < 2 ? text.find(':', begin) : text.size();
        if (end == std::string::npos)
            throw std::invalid_argument("delta grid must be start:stop:step");
        const std::string piece = text.substr(begin, end - begin);
        const auto [p, ec] =
            std::from_chars(piece.data(), piece.data() + piece.size(), parts[i]);
        if (ec != std::errc() || p != piece.data() + piece.size())
            throw std::invalid_argument("bad number in delta grid: " + piece);
        begin = end + 1;
    }
    if (!(parts[2] > 0.0) || parts[1] < parts[0])
        throw std::invalid_argument("delta grid requires stop >= start and step > 0");
    std::vector<double> grid;
    for (double v = parts[0]; v <= parts[1] + parts[2] * 0.5; v += parts[2])
        grid.push_back(v);
    return grid;
}

std::string fmt(double v) { return eval::format_metric(v); }

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string("-");
}

// ----------------------------------------------------------------------------
// gen
// ----------------------------------------------------------------------------

struct GenOptions {
    std::string out;
    int count = 200;
    int evalCount = 50;
    std::uint64_t seed = 1;
    synth::SceneSpec scene;
    synth::WarpRanges warp;
};

int cmd_gen(const GenOptions& opt) {
    synth::SceneSpec scene = opt.scene;
    scene.seed = opt.seed;
    scene.validate();
    if (opt.count < 1 || opt.evalCount < 0)
        throw std::invalid_argument("gen: count must be >= 1 and eval-count >= 0");

    // One pooled dataset so train and eval pairs share normalization stats.
    const auto all = synth::gen_dataset(scene, opt.count + opt.evalCount);
    std::vector<synth::PairSample> train(all.begin(), all.begin() + opt.count);

    std::vector<synth::WarpedPair> eval;
    eval.reserve(opt.evalCount);
    for (int i = 0; i < opt.evalCount; ++i) {
        Rng rng(mix_seed(opt.seed, 0xE7A1000ULL + static_cast<std::uint64_t>(i)));
        eval.push_back(synth::make_eval_pair(all[opt.count + i], rng, opt.warp));
    }

    synth::write_dataset(opt.out, train, eval);
    std::printf("wrote %d train pairs and %d eval pairs to %s\n", opt.count,
                opt.evalCount, opt.out.c_str());
    return kOk;
}

// ----------------------------------------------------------------------------
// train
// ----------------------------------------------------------------------------

struct TrainOptions {
    std::string data;
    std::string checkpointOut = "model.smck";
    std::string lossCsv = "loss_trace.csv";
    std::string variant = "v2";
    shared::TrainConfig cfg;
    bool alphaSet = false, betaSet = false, gammaSet = false, etaSet = false;
    double alpha = 0, beta = 0, gamma = 0, eta = 0;
    int checkpointEvery = 0;
};

int cmd_train(const TrainOptions& opt) {
    shared::TrainConfig cfg = opt.cfg;
    if (opt.variant == "v1") {
        cfg.variant = shared::Variant::V1;
        cfg.weights = shared::LossWeights::v1_defaults();
    } else if (opt.variant == "v2") {
        cfg.variant = shared::Variant::V2;
        cfg.weights = shared::LossWeights::v2_defaults();
    } else {
        throw std::invalid_argument("train: variant must be v1 or v2");
    }
    if (opt.alphaSet) cfg.weights.alpha = opt.alpha;
    if (opt.betaSet) cfg.weights.beta = opt.beta;
    if (opt.gammaSet) cfg.weights.gamma = opt.gamma;
    if (opt.etaSet) cfg.weights.eta = opt.eta;
    cfg.validate();

    const auto samples = synth::read_train_dataset(opt.data);
    if (samples.empty()) throw IoError("train: dataset is empty: " + opt.data);
    std::vector<shared::XyPair> dataset;
    dataset.reserve(samples.size());
    for (const auto& s : samples) dataset.push_back({s.x, s.y});

    shared::EpochCallback onEpoch;
    if (opt.checkpointEvery > 0) {
        onEpoch = [&](int epoch, const shared::SharedModel& model) {
            if ((epoch + 1) % opt.checkpointEvery == 0)
                shared::save_model(opt.checkpointOut + ".epoch" + std::to_string(epoch),
                                   model);
        };
    }

    const auto result = shared::train(dataset, cfg, onEpoch);
    shared::save_model(opt.checkpointOut, result.model);
    shared::write_loss_trace(opt.lossCsv, result.trace);
    std::printf("trained %s for %d epochs; first-epoch loss %s, last-epoch loss %s\n",
                opt.variant.c_str(), cfg.epochs, fmt(result.trace.front().meanLoss).c_str(),
                fmt(result.trace.back().meanLoss).c_str());
    std::printf("checkpoint: %s\nloss trace: %s\n", opt.checkpointOut.c_str(),
                opt.lossCsv.c_str());
    return kOk;
}

// ----------------------------------------------------------------------------
// transform
// ----------------------------------------------------------------------------

struct TransformOptions {
    std::string checkpoint;
    std::string data;
    std::string out;
    int limit = 0; // 0 = all pairs
    sim::SsimConfig ssimCfg;
};

int cmd_transform(const TransformOptions& opt) {
    if (!fs::exists(opt.checkpoint))
        throw ConfigError("transform: missing checkpoint " + opt.checkpoint);
    const shared::SharedModel model = shared::load_model(opt.checkpoint);

    auto samples = synth::read_train_dataset(opt.data);
    if (samples.empty()) throw IoError("transform: dataset is empty: " + opt.data);
    if (opt.limit > 0 && static_cast<int>(samples.size()) > opt.limit)
        samples.resize(opt.limit);

    std::vector<ImageTensor> xts, yts;
    xts.reserve(samples.size());
    yts.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.x.channels != model.specX.inChannels ||
            s.y.channels != model.specY.inChannels)
            throw ConfigError("transform: dataset channels do not match the checkpoint");
        auto [xt, yt] = shared::transform_pair(model, s.x, s.y);
        xts.push_back(std::move(xt));
        yts.push_back(std::move(yt));
    }

    // Reconstruction-trained outputs are low contrast; re-normalize per branch.
    const bool renormalized = model.variant == shared::Variant::V1;
    if (renormalized) {
        shared::renormalize_branch(xts);
        shared::renormalize_branch(yts);
    }

    std::error_code ec;
    fs::create_directories(opt.out, ec);
    if (ec) throw IoError("transform: cannot create " + opt.out);

    std::ofstream manifest(fs::path(opt.out) / "transform_manifest.csv", std::ios::trunc);
    if (!manifest) throw IoError("transform: cannot write manifest");
    double ssimSum = 0.0;
    for (std::size_t i = 0; i < xts.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "pair_%06zu_xt.smt", i);
        const std::string xp = name;
        std::snprintf(name, sizeof(name), "pair_%06zu_yt.smt", i);
        const std::string yp = name;
        save_smt(xts[i], (fs::path(opt.out) / xp).string());
        save_smt(yts[i], (fs::path(opt.out) / yp).string());
        const double s = sim::ssim(xts[i], yts[i], opt.ssimCfg);
        ssimSum += s;
        manifest << xp << ',' << yp << ',' << fmt(s) << '\n';
        std::printf("pair %zu: ssim %s\n", i, fmt(s).c_str());
    }
    std::printf("transformed %zu pairs (renormalized: %s); mean ssim %s\n", xts.size(),
                renormalized ? "yes" : "no", fmt(ssimSum / xts.size()).c_str());
    return kOk;
}

// ----------------------------------------------------------------------------
// eval
// ----------------------------------------------------------------------------

struct EvalOptions {
    std::string data;
    std::string out = "reports";
    std::string pipeline = "auto"; // none | shared | both | auto
    std::string checkpoint;
    std::string deltaGrid = "0.5:5:0.5";
    eval::MatcherConfig matcher;
    std::vector<int> rgbIndices{0, 1, 2};
    sim::SsimConfig ssimCfg;
};

std::optional<double> grid_entry_cmr(const eval::DatasetReport& r, double delta) {
    for (const auto& agg : r.perDelta)
        if (agg.delta == delta) return agg.cmr;
    return std::nullopt;
}

void print_summary_row(const char* condition, const eval::DatasetReport& r) {
    std::printf("%-8s sr=%-8s ace=%-10s mma=%-8s dp=%-10s |P|=%-8s cmr@3=%-8s cmr@5=%-8s\n",
                condition, fmt(r.sr).c_str(), fmt_opt(r.meanAce).c_str(),
                fmt_opt(r.meanMma).c_str(), fmt_opt(r.meanDeltaP).c_str(),
                fmt(r.meanNumMatches).c_str(), fmt_opt(grid_entry_cmr(r, 3.0)).c_str(),
                fmt_opt(grid_entry_cmr(r, 5.0)).c_str());
    if (r.similarity)
        std::printf("         sim: rmse=%s psnr=%s ssim=%s (pairs=%d, inf psnr excluded=%d)\n",
                    fmt(r.similarity->meanRmse).c_str(), fmt(r.similarity->meanPsnr).c_str(),
                    fmt(r.similarity->meanSsim).c_str(), r.similarity->count,
                    r.similarity->psnrExcluded);
}

int cmd_eval(const EvalOptions& opt) {
    const std::vector<double> grid = parse_delta_grid(opt.deltaGrid);

    bool runNone = false, runShared = false;
    if (opt.pipeline == "none") {
        runNone = true;
    } else if (opt.pipeline == "shared") {
        runShared = true;
    } else if (opt.pipeline == "both") {
        runNone = runShared = true;
    } else if (opt.pipeline == "auto") {
        runNone = true;
        runShared = !opt.checkpoint.empty();
    } else {
        throw std::invalid_argument("eval: pipeline must be none, shared, both or auto");
    }
    if (runShared && opt.checkpoint.empty())
        throw ConfigError("eval: the shared pipeline needs --checkpoint");

    const auto pairs = synth::read_eval_dataset(opt.data);
    if (pairs.empty()) {
        std::fprintf(stderr, "eval: no eval pairs in %s\n", opt.data.c_str());
        return kEmptyEval;
    }

    shared::SharedModel model;
    if (runShared) {
        if (!fs::exists(opt.checkpoint))
            throw ConfigError("eval: missing checkpoint " + opt.checkpoint);
        model = shared::load_model(opt.checkpoint);
    }

    if (runNone) {
        eval::Pipeline pipeline;
        pipeline.rgbIndices = opt.rgbIndices;
        pipeline.ssimCfg = opt.ssimCfg;
        const auto report = eval::evaluate_dataset(pairs, pipeline, opt.matcher, grid);
        eval::write_reports(opt.out, "none", report);
        print_summary_row("none", report);
    }
    if (runShared) {
        eval::Pipeline pipeline;
        pipeline.model = &model;
        pipeline.rgbIndices = opt.rgbIndices;
        pipeline.ssimCfg = opt.ssimCfg;
        const auto report = eval::evaluate_dataset(pairs, pipeline, opt.matcher, grid);
        eval::write_reports(opt.out, "shared", report);
        print_summary_row("shared", report);
    }
    std::printf("reports written to %s\n", opt.out.c_str());
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"smtool: shared-modality transform training and co-registration scoring"};
    app.require_subcommand(1);

    GenOptions gen;
    TrainOptions train;
    TransformOptions transform;
    EvalOptions evalOpt;

    auto* g = app.add_subcommand("gen", "Generate a synthetic paired dataset");
    g->set_config("--config", "", "Read options from a key=value file");
    g->allow_config_extras(false);
    g->add_option("--out", gen.out, "Output dataset directory")->required()
        ->group("cli");
    g->add_option("--count", gen.count, "Number of co-registered training pairs")
        ->group("synthgen")->capture_default_str();
    g->add_option("--eval-count", gen.evalCount, "Number of warped evaluation pairs")
        ->group("synthgen")->capture_default_str();
    g->add_option("--seed", gen.seed, "Root seed for scenes and warps")
        ->group("synthgen")->capture_default_str();
    g->add_option("--size", gen.scene.size, "Image side length H = W")
        ->group("synthgen")->capture_default_str();
    g->add_option("--regions", gen.scene.regionCount, "Voronoi regions per scene")
        ->group("synthgen")->capture_default_str();
    g->add_option("--noise-sigma", gen.scene.opticalNoiseSigma,
                  "Additive optical noise sigma")
        ->group("synthgen")->capture_default_str();
    g->add_option("--looks", gen.scene.speckleLooks, "SAR speckle looks L")
        ->group("synthgen")->capture_default_str();
    g->add_option("--max-shift", gen.warp.maxShift, "Eval warp translation bound, px")
        ->group("synthgen")->capture_default_str();
    g->add_option("--max-rotation", gen.warp.maxRotationDeg,
                  "Eval warp rotation bound, degrees")
        ->group("synthgen")->capture_default_str();
    g->add_option("--scale-min", gen.warp.scaleMin, "Eval warp scale lower bound")
        ->group("synthgen")->capture_default_str();
    g->add_option("--scale-max", gen.warp.scaleMax, "Eval warp scale upper bound")
        ->group("synthgen")->capture_default_str();

    auto* t = app.add_subcommand("train", "Train the transformation to shared modality");
    t->set_config("--config", "", "Read options from a key=value file");
    t->allow_config_extras(false);
    t->add_option("--data", train.data, "Dataset directory from gen")->required()
        ->group("cli");
    t->add_option("--checkpoint-out", train.checkpointOut, "Checkpoint output path")
        ->group("cli")->capture_default_str();
    t->add_option("--loss-csv", train.lossCsv, "Loss trace CSV path")
        ->group("cli")->capture_default_str();
    t->add_option("--variant", train.variant,
                  "Degeneracy measure: v1 (reconstruction) or v2 (grayscale structure)")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--alpha", train.alpha, "Degeneracy weight (default: variant preset)")
        ->group("shared_modality")
        ->each([&train](const std::string&) { train.alphaSet = true; });
    t->add_option("--beta", train.beta, "MSE weight (default: variant preset)")
        ->group("shared_modality")
        ->each([&train](const std::string&) { train.betaSet = true; });
    t->add_option("--gamma", train.gamma, "DiSSIM weight (default: variant preset)")
        ->group("shared_modality")
        ->each([&train](const std::string&) { train.gammaSet = true; });
    t->add_option("--eta", train.eta, "V1 y-branch reconstruction weight")
        ->group("shared_modality")
        ->each([&train](const std::string&) { train.etaSet = true; });
    t->add_option("--shared-channels", train.cfg.sharedChannels,
                  "Shared-modality channels K")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--rgb-indices", train.cfg.rgbIndices,
                  "Optical channels treated as RGB for the V2 anchor")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--epochs", train.cfg.epochs, "Training epochs")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--batch-size", train.cfg.batchSize, "Samples per batch")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--batches-per-epoch", train.cfg.batchesPerEpoch, "Batches per epoch")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--seed", train.cfg.seed, "Training seed")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--threads", train.cfg.threads, "Worker threads (0 = auto)")
        ->group("shared_modality")->capture_default_str();
    t->add_option("--base-lr", train.cfg.schedule.baseLr, "Base learning rate")
        ->group("diffnet")->capture_default_str();
    t->add_option("--warmup-lr", train.cfg.schedule.warmupLr, "Warmup learning rate")
        ->group("diffnet")->capture_default_str();
    t->add_option("--warmup-epochs", train.cfg.schedule.warmupEpochs, "Warmup epochs")
        ->group("diffnet")->capture_default_str();
    t->add_option("--depth", train.cfg.depth, "Encoder stages")
        ->group("diffnet")->capture_default_str();
    t->add_option("--base-width", train.cfg.baseWidth, "Channels of the first stage")
        ->group("diffnet")->capture_default_str();
    t->add_option("--ssim-window", train.cfg.ssimCfg.window, "SSIM window size w")
        ->group("similarity")->capture_default_str();
    t->add_option("--checkpoint-every", train.checkpointEvery,
                  "Save a checkpoint every N epochs (0 = only final)")
        ->group("cli")->capture_default_str();

    auto* x = app.add_subcommand("transform", "Apply a trained model to dataset pairs");
    x->set_config("--config", "", "Read options from a key=value file");
    x->allow_config_extras(false);
    x->add_option("--checkpoint", transform.checkpoint, "Model checkpoint")->required()
        ->group("cli");
    x->add_option("--data", transform.data, "Dataset directory from gen")->required()
        ->group("cli");
    x->add_option("--out", transform.out, "Output directory for xt/yt tensors")
        ->required()->group("cli");
    x->add_option("--limit", transform.limit,
                  "Transform only the first N pairs (0 = all)")
        ->group("cli")->capture_default_str();
    x->add_option("--ssim-window", transform.ssimCfg.window, "SSIM window size w")
        ->group("similarity")->capture_default_str();

    auto* e = app.add_subcommand("eval", "Score co-registration on warped eval pairs");
    e->set_config("--config", "", "Read options from a key=value file");
    e->allow_config_extras(false);
    e->add_option("--data", evalOpt.data, "Dataset directory from gen")->required()
        ->group("cli");
    e->add_option("--out", evalOpt.out, "Report output directory")
        ->group("cli")->capture_default_str();
    e->add_option("--pipeline", evalOpt.pipeline,
                  "none, shared, both, or auto (none plus shared when a checkpoint is given)")
        ->group("evaluation")->capture_default_str();
    e->add_option("--checkpoint", evalOpt.checkpoint,
                  "Model checkpoint for the shared pipeline")
        ->group("cli");
    e->add_option("--delta-grid", evalOpt.deltaGrid,
                  "CMR/LE thresholds as start:stop:step")
        ->group("evaluation")->capture_default_str();
    e->add_option("--max-keypoints", evalOpt.matcher.maxKeypoints, "Keypoint cap per image")
        ->group("matchreg")->capture_default_str();
    e->add_option("--patch-size", evalOpt.matcher.patchSize, "Descriptor patch size")
        ->group("matchreg")->capture_default_str();
    e->add_option("--inlier-threshold", evalOpt.matcher.inlierThreshold,
                  "RANSAC inlier threshold, px")
        ->group("matchreg")->capture_default_str();
    e->add_option("--ransac-iterations", evalOpt.matcher.ransacIterations,
                  "RANSAC hypothesis budget")
        ->group("matchreg")->capture_default_str();
    e->add_option("--seed", evalOpt.matcher.seed, "RANSAC seed")
        ->group("matchreg")->capture_default_str();
    e->add_option("--rgb-indices", evalOpt.rgbIndices, "Optical channels treated as RGB")
        ->group("evaluation")->capture_default_str();
    e->add_option("--ssim-window", evalOpt.ssimCfg.window, "SSIM window size w")
        ->group("similarity")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (g->parsed()) return cmd_gen(gen);
        if (t->parsed()) return cmd_train(train);
        if (x->parsed()) return cmd_transform(transform);
        if (e->parsed()) return cmd_eval(evalOpt);
        return kUsage;
    } catch (const DivergenceError& err) {
        std::fprintf(stderr, "training diverged: %s\n", err.what());
        return kDivergence;
    } catch (const ConfigError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kModelMismatch;
    } catch (const FormatError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kModelMismatch;
    } catch (const CorruptFileError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kIo;
    } catch (const IoError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kIo;
    } catch (const std::invalid_argument& err) {
        std::fprintf(stderr, "invalid configuration: %s\n", err.what());
        return kUsage;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kModelMismatch;
    }
}
