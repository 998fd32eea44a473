#include "smt/diffnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "smt/errors.hpp"

namespace smt::net {

void ModelSpec::validate() const {
    if (inChannels < 1 || outChannels < 1 || depth < 1 || baseWidth < 1)
        throw std::invalid_argument("ModelSpec: all dimensions must be positive");
}

bool ModelSpec::accepts(int h, int w) const {
    const int div = 1 << depth;
    return h > 0 && w > 0 && h % div == 0 && w % div == 0;
}

// -----------------------------------------------------------------------------
// Parameter layout
// -----------------------------------------------------------------------------
// Tensor order: per stage i: enc{i}.weight/bias, down{i}.weight/bias; then
// dec{i}.weight/bias for i = depth-1 .. 0; then head.weight/bias.

namespace {

struct Plan {
    int depth;
    int enc_w(int i) const { return 4 * i; }
    int enc_b(int i) const { return 4 * i + 1; }
    int down_w(int i) const { return 4 * i + 2; }
    int down_b(int i) const { return 4 * i + 3; }
    int dec_w(int i) const { return 4 * depth + 2 * (depth - 1 - i); }
    int dec_b(int i) const { return dec_w(i) + 1; }
    int head_w() const { return 6 * depth; }
    int head_b() const { return 6 * depth + 1; }
    int count() const { return 6 * depth + 2; }
};

int enc_in_channels(const ModelSpec& spec, int stage) {
    return stage == 0 ? spec.inChannels : spec.stage_width(stage - 1);
}

// Channel count of the tensor the decoder upsamples at level i.
int up_channels(const ModelSpec& spec, int i) {
    return i == spec.depth - 1 ? spec.stage_width(spec.depth - 1) : spec.stage_width(i + 1);
}

ParamTensor make_tensor(std::string name, std::vector<std::uint32_t> shape) {
    ParamTensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    std::size_t n = 1;
    for (auto d : t.shape) n *= d;
    t.data.assign(n, 0.0);
    return t;
}

} // namespace

Grads zero_grads(const ModelParams& params) {
    Grads g(params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
        g[i].assign(params.tensors[i].size(), 0.0);
    return g;
}

void accumulate_grads(Grads& into, const Grads& from, double scale) {
    for (std::size_t t = 0; t < into.size(); ++t)
        for (std::size_t i = 0; i < into[t].size(); ++i)
            into[t][i] += scale * from[t][i];
}

ModelParams init_params(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    const Plan plan{spec.depth};
    ModelParams p;
    p.tensors.reserve(static_cast<std::size_t>(plan.count()));

    auto u32 = [](int v) { return static_cast<std::uint32_t>(v); };
    for (int i = 0; i < spec.depth; ++i) {
        const int w = spec.stage_width(i);
        const int cin = enc_in_channels(spec, i);
        p.tensors.push_back(make_tensor("enc" + std::to_string(i) + ".weight",
                                        {u32(w), u32(cin), 3, 3}));
        p.tensors.push_back(make_tensor("enc" + std::to_string(i) + ".bias", {u32(w)}));
        p.tensors.push_back(make_tensor("down" + std::to_string(i) + ".weight",
                                        {u32(w), u32(w), 3, 3}));
        p.tensors.push_back(make_tensor("down" + std::to_string(i) + ".bias", {u32(w)}));
    }
    for (int i = spec.depth - 1; i >= 0; --i) {
        const int w = spec.stage_width(i);
        const int cin = up_channels(spec, i) + w;
        p.tensors.push_back(make_tensor("dec" + std::to_string(i) + ".weight",
                                        {u32(w), u32(cin), 3, 3}));
        p.tensors.push_back(make_tensor("dec" + std::to_string(i) + ".bias", {u32(w)}));
    }
    p.tensors.push_back(
        make_tensor("head.weight", {u32(spec.outChannels), u32(spec.stage_width(0)), 1, 1}));
    p.tensors.push_back(make_tensor("head.bias", {u32(spec.outChannels)}));

    // He-style uniform bound from the kernel's receptive fan-in; biases stay 0.
    for (ParamTensor& t : p.tensors) {
        if (t.shape.size() != 4) continue;
        const double fanIn = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
        const double bound = std::sqrt(6.0 / fanIn);
        for (double& v : t.data) v = rng.uniform(-bound, bound);
    }
    return p;
}

// -----------------------------------------------------------------------------
// Layer kernels
// -----------------------------------------------------------------------------

namespace {

ImageTensor conv3x3(const ImageTensor& in, const ParamTensor& w, const ParamTensor& b) {
    const int H = in.height, W = in.width, IC = in.channels;
    const int OC = static_cast<int>(w.shape[0]);
    ImageTensor out(OC, H, W);
    for (int oc = 0; oc < OC; ++oc) {
        double* op = out.channel(oc);
        std::fill(op, op + out.plane(), b.data[oc]);
        for (int ic = 0; ic < IC; ++ic) {
            const double* ip = in.channel(ic);
            const double* wk = w.data.data() + (static_cast<std::size_t>(oc) * IC + ic) * 9;
            for (int dy = 0; dy < 3; ++dy) {
                const int yLo = std::max(0, 1 - dy);
                const int yHi = std::min(H, H + 1 - dy);
                for (int dx = 0; dx < 3; ++dx) {
                    const double wv = wk[dy * 3 + dx];
                    const int xLo = std::max(0, 1 - dx);
                    const int xHi = std::min(W, W + 1 - dx);
                    for (int y = yLo; y < yHi; ++y) {
                        const double* irow = ip + (y + dy - 1) * W + (dx - 1);
                        double* orow = op + y * W;
                        for (int x = xLo; x < xHi; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

void conv3x3_backward(const ImageTensor& in, const ParamTensor& w,
                      const ImageTensor& gout, std::vector<double>& gw,
                      std::vector<double>& gb, ImageTensor& gin) {
    const int H = in.height, W = in.width, IC = in.channels;
    const int OC = gout.channels;
    gin = ImageTensor(IC, H, W);
    for (int oc = 0; oc < OC; ++oc) {
        const double* gp = gout.channel(oc);
        double sum = 0.0;
        for (std::size_t i = 0; i < gout.plane(); ++i) sum += gp[i];
        gb[oc] += sum;
        for (int ic = 0; ic < IC; ++ic) {
            const double* ip = in.channel(ic);
            double* gq = gin.channel(ic);
            const std::size_t wbase = (static_cast<std::size_t>(oc) * IC + ic) * 9;
            const double* wk = w.data.data() + wbase;
            for (int dy = 0; dy < 3; ++dy) {
                const int yLo = std::max(0, 1 - dy);
                const int yHi = std::min(H, H + 1 - dy);
                for (int dx = 0; dx < 3; ++dx) {
                    const double wv = wk[dy * 3 + dx];
                    const int xLo = std::max(0, 1 - dx);
                    const int xHi = std::min(W, W + 1 - dx);
                    double wsum = 0.0;
                    for (int y = yLo; y < yHi; ++y) {
                        const double* irow = ip + (y + dy - 1) * W + (dx - 1);
                        double* grow = gq + (y + dy - 1) * W + (dx - 1);
                        const double* gorow = gp + y * W;
                        for (int x = xLo; x < xHi; ++x) {
                            wsum += gorow[x] * irow[x];
                            grow[x] += wv * gorow[x];
                        }
                    }
                    gw[wbase + dy * 3 + dx] += wsum;
                }
            }
        }
    }
}

ImageTensor conv3x3_s2(const ImageTensor& in, const ParamTensor& w, const ParamTensor& b) {
    const int H = in.height, W = in.width, IC = in.channels;
    const int OC = static_cast<int>(w.shape[0]);
    const int H2 = H / 2, W2 = W / 2;
    ImageTensor out(OC, H2, W2);
    for (int oc = 0; oc < OC; ++oc) {
        double* op = out.channel(oc);
        std::fill(op, op + out.plane(), b.data[oc]);
        for (int ic = 0; ic < IC; ++ic) {
            const double* ip = in.channel(ic);
            const double* wk = w.data.data() + (static_cast<std::size_t>(oc) * IC + ic) * 9;
            for (int dy = 0; dy < 3; ++dy) {
                const int yLo = (dy == 0) ? 1 : 0;
                for (int dx = 0; dx < 3; ++dx) {
                    const double wv = wk[dy * 3 + dx];
                    const int xLo = (dx == 0) ? 1 : 0;
                    for (int y = yLo; y < H2; ++y) {
                        const double* irow = ip + (2 * y + dy - 1) * W + (dx - 1);
                        double* orow = op + y * W2;
                        for (int x = xLo; x < W2; ++x) orow[x] += wv * irow[2 * x];
                    }
                }
            }
        }
    }
    return out;
}

void conv3x3_s2_backward(const ImageTensor& in, const ParamTensor& w,
                         const ImageTensor& gout, std::vector<double>& gw,
                         std::vector<double>& gb, ImageTensor& gin) {
    const int H = in.height, W = in.width, IC = in.channels;
    const int OC = gout.channels;
    const int H2 = gout.height, W2 = gout.width;
    gin = ImageTensor(IC, H, W);
    for (int oc = 0; oc < OC; ++oc) {
        const double* gp = gout.channel(oc);
        double sum = 0.0;
        for (std::size_t i = 0; i < gout.plane(); ++i) sum += gp[i];
        gb[oc] += sum;
        for (int ic = 0; ic < IC; ++ic) {
            const double* ip = in.channel(ic);
            double* gq = gin.channel(ic);
            const std::size_t wbase = (static_cast<std::size_t>(oc) * IC + ic) * 9;
            const double* wk = w.data.data() + wbase;
            for (int dy = 0; dy < 3; ++dy) {
                const int yLo = (dy == 0) ? 1 : 0;
                for (int dx = 0; dx < 3; ++dx) {
                    const double wv = wk[dy * 3 + dx];
                    const int xLo = (dx == 0) ? 1 : 0;
                    double wsum = 0.0;
                    for (int y = yLo; y < H2; ++y) {
                        const double* irow = ip + (2 * y + dy - 1) * W + (dx - 1);
                        double* grow = gq + (2 * y + dy - 1) * W + (dx - 1);
                        const double* gorow = gp + y * W2;
                        for (int x = xLo; x < W2; ++x) {
                            wsum += gorow[x] * irow[2 * x];
                            grow[2 * x] += wv * gorow[x];
                        }
                    }
                    gw[wbase + dy * 3 + dx] += wsum;
                }
            }
        }
    }
}

ImageTensor conv1x1(const ImageTensor& in, const ParamTensor& w, const ParamTensor& b) {
    const int IC = in.channels;
    const int OC = static_cast<int>(w.shape[0]);
    ImageTensor out(OC, in.height, in.width);
    const std::size_t plane = in.plane();
    for (int oc = 0; oc < OC; ++oc) {
        double* op = out.channel(oc);
        std::fill(op, op + plane, b.data[oc]);
        for (int ic = 0; ic < IC; ++ic) {
            const double wv = w.data[static_cast<std::size_t>(oc) * IC + ic];
            const double* ip = in.channel(ic);
            for (std::size_t i = 0; i < plane; ++i) op[i] += wv * ip[i];
        }
    }
    return out;
}

void conv1x1_backward(const ImageTensor& in, const ParamTensor& w,
                      const ImageTensor& gout, std::vector<double>& gw,
                      std::vector<double>& gb, ImageTensor& gin) {
    const int IC = in.channels, OC = gout.channels;
    const std::size_t plane = in.plane();
    gin = ImageTensor(IC, in.height, in.width);
    for (int oc = 0; oc < OC; ++oc) {
        const double* gp = gout.channel(oc);
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += gp[i];
        gb[oc] += sum;
        for (int ic = 0; ic < IC; ++ic) {
            const double* ip = in.channel(ic);
            double* gq = gin.channel(ic);
            const double wv = w.data[static_cast<std::size_t>(oc) * IC + ic];
            double wsum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                wsum += gp[i] * ip[i];
                gq[i] += wv * gp[i];
            }
            gw[static_cast<std::size_t>(oc) * IC + ic] += wsum;
        }
    }
}

ImageTensor leaky_relu(const ImageTensor& z) {
    ImageTensor out(z.channels, z.height, z.width);
    for (std::size_t i = 0; i < z.size(); ++i)
        out.data[i] = z.data[i] >= 0.0 ? z.data[i] : 0.1 * z.data[i];
    return out;
}

ImageTensor leaky_relu_backward(const ImageTensor& z, const ImageTensor& g) {
    ImageTensor out(g.channels, g.height, g.width);
    for (std::size_t i = 0; i < g.size(); ++i)
        out.data[i] = g.data[i] * (z.data[i] >= 0.0 ? 1.0 : 0.1);
    return out;
}

ImageTensor upsample2(const ImageTensor& in) {
    ImageTensor out(in.channels, in.height * 2, in.width * 2);
    for (int c = 0; c < in.channels; ++c) {
        const double* ip = in.channel(c);
        double* op = out.channel(c);
        for (int y = 0; y < out.height; ++y) {
            const double* irow = ip + (y / 2) * in.width;
            double* orow = op + y * out.width;
            for (int x = 0; x < out.width; ++x) orow[x] = irow[x / 2];
        }
    }
    return out;
}

ImageTensor upsample2_backward(const ImageTensor& g) {
    ImageTensor out(g.channels, g.height / 2, g.width / 2);
    for (int c = 0; c < g.channels; ++c) {
        const double* gp = g.channel(c);
        double* op = out.channel(c);
        for (int y = 0; y < g.height; ++y) {
            const double* grow = gp + y * g.width;
            double* orow = op + (y / 2) * out.width;
            for (int x = 0; x < g.width; ++x) orow[x / 2] += grow[x];
        }
    }
    return out;
}

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b) {
    ImageTensor out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

ImageTensor sigmoid(const ImageTensor& z) {
    ImageTensor out(z.channels, z.height, z.width);
    for (std::size_t i = 0; i < z.size(); ++i)
        out.data[i] = 1.0 / (1.0 + std::exp(-z.data[i]));
    return out;
}

} // namespace

// -----------------------------------------------------------------------------
// Forward / backward
// -----------------------------------------------------------------------------

ImageTensor forward(const ModelSpec& spec, const ModelParams& params,
                    const ImageTensor& input, ForwardCache* cache) {
    spec.validate();
    if (input.channels != spec.inChannels)
        throw std::invalid_argument("forward: input channel mismatch");
    if (!spec.accepts(input.height, input.width))
        throw std::invalid_argument("forward: H and W must be divisible by 2^depth");

    const Plan plan{spec.depth};
    if (static_cast<int>(params.tensors.size()) != plan.count())
        throw Error("forward: parameter count does not match spec");

    ForwardCache local;
    ForwardCache& C = cache ? *cache : local;
    C.encIn.resize(spec.depth);
    C.encPre.resize(spec.depth);
    C.skip.resize(spec.depth);
    C.decIn.resize(spec.depth);
    C.decPre.resize(spec.depth);

    ImageTensor cur = input;
    for (int i = 0; i < spec.depth; ++i) {
        C.encIn[i] = std::move(cur);
        C.encPre[i] = conv3x3(C.encIn[i], params.tensors[plan.enc_w(i)],
                              params.tensors[plan.enc_b(i)]);
        C.skip[i] = leaky_relu(C.encPre[i]);
        cur = conv3x3_s2(C.skip[i], params.tensors[plan.down_w(i)],
                         params.tensors[plan.down_b(i)]);
    }
    for (int i = spec.depth - 1; i >= 0; --i) {
        C.decIn[i] = concat_channels(upsample2(cur), C.skip[i]);
        C.decPre[i] = conv3x3(C.decIn[i], params.tensors[plan.dec_w(i)],
                              params.tensors[plan.dec_b(i)]);
        cur = leaky_relu(C.decPre[i]);
    }
    C.headIn = std::move(cur);
    ImageTensor out = conv1x1(C.headIn, params.tensors[plan.head_w()],
                              params.tensors[plan.head_b()]);
    if (spec.finalSigmoid) {
        out = sigmoid(out);
        C.sigmoidOut = out;
    }
    return out;
}

BackwardResult backward(const ModelSpec& spec, const ModelParams& params,
                        const ForwardCache& cache, const ImageTensor& outputGrad) {
    const Plan plan{spec.depth};
    if (static_cast<int>(cache.encIn.size()) != spec.depth)
        throw Error("backward: cache does not match spec");

    BackwardResult res;
    res.paramGrads = Grads(params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
        res.paramGrads[i].assign(params.tensors[i].size(), 0.0);

    ImageTensor g = outputGrad;
    if (spec.finalSigmoid) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = cache.sigmoidOut.data[i];
            g.data[i] *= s * (1.0 - s);
        }
    }

    ImageTensor gin;
    conv1x1_backward(cache.headIn, params.tensors[plan.head_w()], g,
                     res.paramGrads[plan.head_w()], res.paramGrads[plan.head_b()], gin);
    g = std::move(gin);

    std::vector<ImageTensor> gSkip(spec.depth);
    for (int i = 0; i < spec.depth; ++i) {
        g = leaky_relu_backward(cache.decPre[i], g);
        ImageTensor gcat;
        conv3x3_backward(cache.decIn[i], params.tensors[plan.dec_w(i)], g,
                         res.paramGrads[plan.dec_w(i)], res.paramGrads[plan.dec_b(i)],
                         gcat);
        const int upC = up_channels(spec, i);
        ImageTensor gUp(upC, gcat.height, gcat.width);
        std::copy_n(gcat.data.begin(), gUp.size(), gUp.data.begin());
        gSkip[i] = ImageTensor(gcat.channels - upC, gcat.height, gcat.width);
        std::copy_n(gcat.data.begin() + gUp.size(), gSkip[i].size(),
                    gSkip[i].data.begin());
        g = upsample2_backward(gUp);
    }

    for (int i = spec.depth - 1; i >= 0; --i) {
        ImageTensor ga;
        conv3x3_s2_backward(cache.skip[i], params.tensors[plan.down_w(i)], g,
                            res.paramGrads[plan.down_w(i)],
                            res.paramGrads[plan.down_b(i)], ga);
        for (std::size_t k = 0; k < ga.size(); ++k) ga.data[k] += gSkip[i].data[k];
        const ImageTensor gz = leaky_relu_backward(cache.encPre[i], ga);
        conv3x3_backward(cache.encIn[i], params.tensors[plan.enc_w(i)], gz,
                         res.paramGrads[plan.enc_w(i)], res.paramGrads[plan.enc_b(i)],
                         g);
    }
    res.inputGrad = std::move(g);
    return res;
}

// -----------------------------------------------------------------------------
// Optimizer and schedule
// -----------------------------------------------------------------------------

OptimizerState OptimizerState::init(const ModelParams& params) {
    OptimizerState st;
    st.m.resize(params.tensors.size());
    st.v.resize(params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        st.m[i].assign(params.tensors[i].size(), 0.0);
        st.v[i].assign(params.tensors[i].size(), 0.0);
    }
    return st;
}

void nadam_step(ModelParams& params, const Grads& grads, OptimizerState& state,
                double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("nadam_step: lr must be positive");
    if (grads.size() != params.tensors.size())
        throw Error("nadam_step: gradient/parameter mismatch");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double mu = state.mu, nu = state.nu;
    const double muT = std::pow(mu, t);
    const double muT1 = std::pow(mu, t + 1.0);
    const double nuT = std::pow(nu, t);

    for (std::size_t ti = 0; ti < grads.size(); ++ti) {
        auto& theta = params.tensors[ti].data;
        const auto& g = grads[ti];
        auto& m = state.m[ti];
        auto& v = state.v[ti];
        if (g.size() != theta.size())
            throw Error("nadam_step: gradient shape mismatch at tensor " +
                        params.tensors[ti].name);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw DivergenceError("nadam_step: non-finite gradient in tensor " +
                                      params.tensors[ti].name);
            m[i] = mu * m[i] + (1.0 - mu) * g[i];
            v[i] = nu * v[i] + (1.0 - nu) * g[i] * g[i];
            const double mHat = m[i] / (1.0 - muT1);
            const double vHat = v[i] / (1.0 - nuT);
            const double update =
                (mu * mHat + (1.0 - mu) * g[i] / (1.0 - muT)) / (std::sqrt(vHat) + state.eps);
            theta[i] -= lr * update;
        }
    }
}

double lr_at(const LrSchedule& schedule, int epoch) {
    if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
    if (epoch < schedule.warmupEpochs)
        return schedule.warmupLr + (schedule.baseLr - schedule.warmupLr) *
                                       static_cast<double>(epoch) / schedule.warmupEpochs;
    return schedule.baseLr;
}

// -----------------------------------------------------------------------------
// SMCK serialization
// -----------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kSmckVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

struct Reader {
    const unsigned char* p;
    std::size_t remaining;
    const std::string& path;

    void need(std::size_t n) const {
        if (remaining < n)
            throw CorruptFileError("load_smck: truncated file " + path);
    }
    std::uint32_t u32() {
        need(4);
        const std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                                (static_cast<std::uint32_t>(p[1]) << 8) |
                                (static_cast<std::uint32_t>(p[2]) << 16) |
                                (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        remaining -= 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        const std::uint8_t v = p[0];
        ++p;
        --remaining;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        remaining -= n;
        return s;
    }
};

void write_spec(std::string& buf, const ModelSpec& spec) {
    put_u32(buf, static_cast<std::uint32_t>(spec.inChannels));
    put_u32(buf, static_cast<std::uint32_t>(spec.outChannels));
    put_u32(buf, static_cast<std::uint32_t>(spec.depth));
    put_u32(buf, static_cast<std::uint32_t>(spec.baseWidth));
    buf.push_back(spec.finalSigmoid ? char(1) : char(0));
}

ModelSpec read_spec(Reader& r) {
    ModelSpec spec;
    spec.inChannels = static_cast<int>(r.u32());
    spec.outChannels = static_cast<int>(r.u32());
    spec.depth = static_cast<int>(r.u32());
    spec.baseWidth = static_cast<int>(r.u32());
    spec.finalSigmoid = r.u8() != 0;
    spec.validate();
    return spec;
}

} // namespace

void save_smck(const std::string& path, const Checkpoint& ck) {
    std::string buf;
    buf += "SMCK";
    put_u32(buf, kSmckVersion);
    buf.push_back(static_cast<char>(ck.variantTag));
    put_u32(buf, ck.sharedChannels);
    put_u32(buf, static_cast<std::uint32_t>(ck.entries.size()));
    for (const CheckpointEntry& e : ck.entries) {
        put_string(buf, e.name);
        write_spec(buf, e.spec);
        put_u32(buf, static_cast<std::uint32_t>(e.params.tensors.size()));
        for (const ParamTensor& t : e.params.tensors) {
            put_string(buf, t.name);
            put_u32(buf, static_cast<std::uint32_t>(t.shape.size()));
            for (std::uint32_t d : t.shape) put_u32(buf, d);
            for (double v : t.data) put_f32(buf, static_cast<float>(v));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_smck: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("save_smck: write failed for " + path);
}

Checkpoint load_smck(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_smck: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 8 || buf.compare(0, 4, "SMCK") != 0)
        throw FormatError("load_smck: bad magic in " + path);
    Reader r{reinterpret_cast<const unsigned char*>(buf.data()) + 4, buf.size() - 4, path};
    const std::uint32_t version = r.u32();
    if (version != kSmckVersion)
        throw FormatError("load_smck: unsupported version in " + path);

    Checkpoint ck;
    ck.variantTag = r.u8();
    ck.sharedChannels = r.u32();
    const std::uint32_t netCount = r.u32();
    ck.entries.resize(netCount);
    for (CheckpointEntry& e : ck.entries) {
        e.name = r.str();
        e.spec = read_spec(r);
        const std::uint32_t tensorCount = r.u32();
        e.params.tensors.resize(tensorCount);
        for (ParamTensor& t : e.params.tensors) {
            t.name = r.str();
            const std::uint32_t rank = r.u32();
            t.shape.resize(rank);
            std::size_t n = 1;
            for (std::uint32_t& d : t.shape) {
                d = r.u32();
                n *= d;
            }
            t.data.resize(n);
            for (double& v : t.data) {
                const float f = r.f32();
                if (!std::isfinite(f))
                    throw ValidationError("load_smck: non-finite weight in " + path);
                v = static_cast<double>(f);
            }
        }
    }
    if (r.remaining != 0)
        throw CorruptFileError("load_smck: trailing bytes in " + path);
    return ck;
}

void save_checkpoint(const std::string& path, const ModelSpec& spec,
                     const ModelParams& params) {
    Checkpoint ck;
    ck.entries.push_back({"net", spec, params});
    save_smck(path, ck);
}

std::pair<ModelSpec, ModelParams> load_checkpoint(const std::string& path) {
    Checkpoint ck = load_smck(path);
    if (ck.entries.size() != 1)
        throw FormatError("load_checkpoint: expected a single network in " + path);
    return {ck.entries[0].spec, std::move(ck.entries[0].params)};
}

} // namespace smt::net
