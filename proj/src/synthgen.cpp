#include "smt/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "smt/errors.hpp"

namespace fs = std::filesystem;

namespace smt::synth {

void SceneSpec::validate() const {
    if (size < 8) throw std::invalid_argument("SceneSpec: size too small");
    if (regionCount < 2) throw std::invalid_argument("SceneSpec: regionCount must be >= 2");
    if (opticalNoiseSigma < 0.0)
        throw std::invalid_argument("SceneSpec: negative noise sigma");
    if (speckleLooks < 1) throw std::invalid_argument("SceneSpec: speckleLooks must be >= 1");
    if (crossModalCorrelation < 0.0 || crossModalCorrelation > 1.0)
        throw std::invalid_argument("SceneSpec: crossModalCorrelation must be in [0, 1]");
}

LabelMap gen_scene(const SceneSpec& spec, Rng& rng) {
    spec.validate();
    const int H = spec.size, W = spec.size;
    LabelMap map;
    map.height = H;
    map.width = W;
    map.labels.assign(static_cast<std::size_t>(H) * W, 0);

    for (;;) {
        std::vector<double> sx(spec.regionCount), sy(spec.regionCount);
        for (int i = 0; i < spec.regionCount; ++i) {
            sx[i] = rng.uniform() * W;
            sy[i] = rng.uniform() * H;
        }
        std::vector<bool> present(spec.regionCount, false);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                int best = 0;
                double bestD = std::numeric_limits<double>::infinity();
                for (int i = 0; i < spec.regionCount; ++i) {
                    const double dx = c - sx[i];
                    const double dy = r - sy[i];
                    const double d = dx * dx + dy * dy;
                    if (d < bestD) {
                        bestD = d;
                        best = i;
                    }
                }
                map.labels[r * W + c] = best;
                present[best] = true;
            }
        if (std::all_of(present.begin(), present.end(), [](bool b) { return b; })) {
            map.regionLatent.resize(spec.regionCount);
            for (double& u : map.regionLatent) u = rng.uniform();
            return map;
        }
    }
}

ImageTensor render_optical(const LabelMap& labels, const SceneSpec& spec, Rng& rng) {
    const int H = labels.height, W = labels.width, K = 10;
    const double lam = spec.crossModalCorrelation;
    std::vector<double> reflectance(static_cast<std::size_t>(spec.regionCount) * K);
    for (int region = 0; region < spec.regionCount; ++region) {
        const double u = labels.regionLatent.empty() ? rng.uniform()
                                                     : labels.regionLatent[region];
        for (int ch = 0; ch < K; ++ch)
            reflectance[static_cast<std::size_t>(region) * K + ch] =
                0.1 + 0.8 * (lam * u + (1.0 - lam) * rng.uniform());
    }

    // Low-order polynomial illumination in normalized [-1, 1] coordinates.
    const double a0 = rng.uniform(0.9, 1.1);
    const double a1 = rng.uniform(-0.05, 0.05);
    const double a2 = rng.uniform(-0.05, 0.05);
    const double a3 = rng.uniform(-0.02, 0.02);
    const double a4 = rng.uniform(-0.02, 0.02);
    const double a5 = rng.uniform(-0.02, 0.02);
    std::vector<double> illum(static_cast<std::size_t>(H) * W);
    for (int r = 0; r < H; ++r) {
        const double v = H > 1 ? 2.0 * r / (H - 1) - 1.0 : 0.0;
        for (int c = 0; c < W; ++c) {
            const double u = W > 1 ? 2.0 * c / (W - 1) - 1.0 : 0.0;
            illum[r * W + c] = std::clamp(
                a0 + a1 * u + a2 * v + a3 * u * v + a4 * u * u + a5 * v * v, 0.8, 1.2);
        }
    }

    ImageTensor out(K, H, W);
    for (int ch = 0; ch < K; ++ch) {
        double* plane = out.channel(ch);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                const int region = labels.labels[r * W + c];
                double v = reflectance[static_cast<std::size_t>(region) * K + ch] *
                           illum[r * W + c];
                v += rng.normal(0.0, spec.opticalNoiseSigma);
                plane[r * W + c] = std::clamp(v, 0.0, 1.2);
            }
    }
    return out;
}

ImageTensor render_sar(const LabelMap& labels, const SceneSpec& spec, Rng& rng) {
    const int H = labels.height, W = labels.width, K = 2;
    const double logLo = std::log(0.01), logHi = std::log(1.0);
    const double lam = spec.crossModalCorrelation;
    std::vector<double> backscatter(static_cast<std::size_t>(spec.regionCount) * K);
    for (int region = 0; region < spec.regionCount; ++region) {
        const double u = labels.regionLatent.empty() ? rng.uniform()
                                                     : labels.regionLatent[region];
        for (int ch = 0; ch < K; ++ch) {
            const double s = lam * u + (1.0 - lam) * rng.uniform();
            backscatter[static_cast<std::size_t>(region) * K + ch] =
                std::exp(logLo + (logHi - logLo) * s);
        }
    }

    const double looks = static_cast<double>(spec.speckleLooks);
    ImageTensor out(K, H, W);
    for (int ch = 0; ch < K; ++ch) {
        double* plane = out.channel(ch);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                const int region = labels.labels[r * W + c];
                const double speckle = rng.gamma(looks) / looks; // mean-1 intensity speckle
                plane[r * W + c] =
                    backscatter[static_cast<std::size_t>(region) * K + ch] * speckle;
            }
    }
    return out;
}

std::vector<PairSample> gen_dataset(const SceneSpec& spec, int count) {
    if (count < 1) throw std::invalid_argument("gen_dataset: count must be >= 1");
    spec.validate();

    std::vector<ImageTensor> sarDb(count), optical(count);
    std::vector<std::uint64_t> seeds(count);
    for (int i = 0; i < count; ++i) {
        seeds[i] = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
        Rng rng(seeds[i]);
        const LabelMap labels = gen_scene(spec, rng);
        optical[i] = render_optical(labels, spec, rng);
        sarDb[i] = to_db(render_sar(labels, spec, rng));
    }

    const NormalizationStats sarStats = compute_percentiles(sarDb, 0.5, 99.5, "sar");
    const NormalizationStats optStats = compute_percentiles(optical, 0.5, 99.5, "optical");

    std::vector<PairSample> out(count);
    for (int i = 0; i < count; ++i) {
        out[i].x = normalize(sarDb[i], sarStats);
        out[i].y = normalize(optical[i], optStats);
        out[i].sceneSeed = seeds[i];
    }
    return out;
}

ImageTensor warp_image(const ImageTensor& img, const match::Homography& t,
                       double defaultValue) {
    if (!t.invertible()) throw std::invalid_argument("warp_image: singular transform");
    const match::Homography inv = t.inverse();
    const int H = img.height, W = img.width;
    ImageTensor out(img.channels, H, W);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            match::Point src;
            try {
                src = match::project({static_cast<double>(c), static_cast<double>(r)}, inv);
            } catch (const ProjectionError&) {
                for (int ch = 0; ch < img.channels; ++ch)
                    out.at(ch, r, c) = defaultValue;
                continue;
            }
            if (src.x < 0.0 || src.y < 0.0 || src.x > W - 1 || src.y > H - 1) {
                for (int ch = 0; ch < img.channels; ++ch)
                    out.at(ch, r, c) = defaultValue;
                continue;
            }
            const int x0 = static_cast<int>(std::floor(src.x));
            const int y0 = static_cast<int>(std::floor(src.y));
            const int x1 = std::min(x0 + 1, W - 1);
            const int y1 = std::min(y0 + 1, H - 1);
            const double fx = src.x - x0;
            const double fy = src.y - y0;
            for (int ch = 0; ch < img.channels; ++ch) {
                const double* plane = img.channel(ch);
                const double v = (1.0 - fy) * ((1.0 - fx) * plane[y0 * W + x0] +
                                               fx * plane[y0 * W + x1]) +
                                 fy * ((1.0 - fx) * plane[y1 * W + x0] +
                                       fx * plane[y1 * W + x1]);
                out.at(ch, r, c) = v;
            }
        }
    return out;
}

WarpedPair make_eval_pair(const PairSample& pair, Rng& rng, const WarpRanges& ranges) {
    const double theta =
        rng.uniform(-ranges.maxRotationDeg, ranges.maxRotationDeg) * M_PI / 180.0;
    const double scale = rng.uniform(ranges.scaleMin, ranges.scaleMax);
    const double tx = rng.uniform(-ranges.maxShift, ranges.maxShift);
    const double ty = rng.uniform(-ranges.maxShift, ranges.maxShift);

    const double cx = (pair.x.width - 1) / 2.0;
    const double cy = (pair.x.height - 1) / 2.0;
    const double ca = scale * std::cos(theta);
    const double sa = scale * std::sin(theta);

    // p' = s R (p - c) + c + t
    match::Homography warp;
    warp.m = {ca, -sa, cx + tx - (ca * cx - sa * cy),
              sa, ca,  cy + ty - (sa * cx + ca * cy),
              0,  0,   1};

    WarpedPair out;
    out.base = pair;
    out.trueT = warp.inverse();
    out.warpedX = warp_image(pair.x, warp, 0.0);
    return out;
}

// -----------------------------------------------------------------------------
// Dataset directory I/O
// -----------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw CorruptFileError("dataset manifest: bad number in " + context);
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string pair_name(const char* prefix, int i, const char* role) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06d_%s.smt", prefix, i, role);
    return buf;
}

} // namespace

void write_dataset(const std::string& dir, const std::vector<PairSample>& train,
                   const std::vector<WarpedPair>& eval) {
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "train", ec);
    fs::create_directories(fs::path(dir) / "eval", ec);
    if (ec) throw IoError("write_dataset: cannot create " + dir);

    {
        std::ofstream m(fs::path(dir) / "train_manifest.csv", std::ios::trunc);
        if (!m) throw IoError("write_dataset: cannot write train manifest");
        for (std::size_t i = 0; i < train.size(); ++i) {
            const std::string xp = "train/" + pair_name("pair", static_cast<int>(i), "x");
            const std::string yp = "train/" + pair_name("pair", static_cast<int>(i), "y");
            save_smt(train[i].x, (fs::path(dir) / xp).string());
            save_smt(train[i].y, (fs::path(dir) / yp).string());
            m << xp << ',' << yp << ',' << train[i].sceneSeed << '\n';
        }
    }
    {
        std::ofstream m(fs::path(dir) / "eval_manifest.csv", std::ios::trunc);
        if (!m) throw IoError("write_dataset: cannot write eval manifest");
        for (std::size_t i = 0; i < eval.size(); ++i) {
            const std::string xp = "eval/" + pair_name("pair", static_cast<int>(i), "x");
            const std::string bp = "eval/" + pair_name("pair", static_cast<int>(i), "xbase");
            const std::string yp = "eval/" + pair_name("pair", static_cast<int>(i), "y");
            save_smt(eval[i].warpedX, (fs::path(dir) / xp).string());
            save_smt(eval[i].base.x, (fs::path(dir) / bp).string());
            save_smt(eval[i].base.y, (fs::path(dir) / yp).string());
            m << xp << ',' << yp << ',' << eval[i].base.sceneSeed;
            for (double v : eval[i].trueT.m) m << ',' << format_double(v);
            m << '\n';
        }
    }
}

std::vector<PairSample> read_train_dataset(const std::string& dir) {
    std::ifstream m(fs::path(dir) / "train_manifest.csv");
    if (!m) throw IoError("read_train_dataset: missing train manifest in " + dir);
    std::vector<PairSample> out;
    std::string line;
    while (std::getline(m, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 3)
            throw CorruptFileError("train manifest: expected 3 fields");
        PairSample s;
        s.x = load_smt((fs::path(dir) / fields[0]).string());
        s.y = load_smt((fs::path(dir) / fields[1]).string());
        s.sceneSeed = static_cast<std::uint64_t>(
            std::stoull(fields[2]));
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<WarpedPair> read_eval_dataset(const std::string& dir) {
    std::ifstream m(fs::path(dir) / "eval_manifest.csv");
    if (!m) throw IoError("read_eval_dataset: missing eval manifest in " + dir);
    std::vector<WarpedPair> out;
    std::string line;
    while (std::getline(m, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 12)
            throw CorruptFileError("eval manifest: expected 12 fields");
        WarpedPair p;
        p.warpedX = load_smt((fs::path(dir) / fields[0]).string());
        p.base.y = load_smt((fs::path(dir) / fields[1]).string());
        p.base.sceneSeed = static_cast<std::uint64_t>(std::stoull(fields[2]));
        for (int i = 0; i < 9; ++i)
            p.trueT.m[i] = parse_double(fields[3 + i], fields[0]);

        // The aligned SAR image is stored by naming convention next to the
        // warped one; similarity reporting uses it when present.
        std::string base = fields[0];
        const std::size_t pos = base.rfind("_x.smt");
        if (pos != std::string::npos) {
            base.replace(pos, std::string::npos, "_xbase.smt");
            const fs::path bp = fs::path(dir) / base;
            if (fs::exists(bp)) p.base.x = load_smt(bp.string());
        }
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace smt::synth
