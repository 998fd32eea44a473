#include "smt/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace smt {

void ImageTensor::validate() const {
    if (channels <= 0 || height <= 0 || width <= 0)
        throw ValidationError("ImageTensor: non-positive dimension");
    if (data.size() != static_cast<std::size_t>(channels) * height * width)
        throw ValidationError("ImageTensor: data length does not match dimensions");
    for (double v : data)
        if (!std::isfinite(v)) throw ValidationError("ImageTensor: non-finite value");
}

// -----------------------------------------------------------------------------
// SMT file I/O
// -----------------------------------------------------------------------------

namespace {

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

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) {
    const std::uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace

void save_smt(const ImageTensor& img, const std::string& path) {
    img.validate();
    std::string buf;
    buf.reserve(16 + img.size() * 4);
    buf += "SMT1";
    put_u32(buf, static_cast<std::uint32_t>(img.channels));
    put_u32(buf, static_cast<std::uint32_t>(img.height));
    put_u32(buf, static_cast<std::uint32_t>(img.width));
    for (double v : img.data) put_f32(buf, static_cast<float>(v));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_smt: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("save_smt: write failed for " + path);
}

ImageTensor load_smt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_smt: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 16) throw CorruptFileError("load_smt: truncated header in " + path);
    if (buf.compare(0, 4, "SMT1") != 0)
        throw FormatError("load_smt: bad magic in " + path);

    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const std::uint32_t c = get_u32(p + 4);
    const std::uint32_t h = get_u32(p + 8);
    const std::uint32_t w = get_u32(p + 12);
    if (c == 0 || h == 0 || w == 0)
        throw FormatError("load_smt: zero dimension in " + path);

    const std::size_t count = static_cast<std::size_t>(c) * h * w;
    if (buf.size() != 16 + count * 4)
        throw CorruptFileError("load_smt: payload size mismatch in " + path);

    ImageTensor img(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < count; ++i) {
        const float f = get_f32(p + 16 + i * 4);
        if (!std::isfinite(f))
            throw ValidationError("load_smt: non-finite value in " + path);
        img.data[i] = static_cast<double>(f);
    }
    return img;
}

// -----------------------------------------------------------------------------
// Preprocessing
// -----------------------------------------------------------------------------

namespace {

double interpolated_percentile(std::vector<double>& pool, double pct) {
    const std::size_t n = pool.size();
    const double rank = pct / 100.0 * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(lo), pool.end());
    const double vlo = pool[lo];
    if (hi == lo) return vlo;
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(hi), pool.end());
    const double vhi = pool[hi];
    return vlo + (rank - static_cast<double>(lo)) * (vhi - vlo);
}

} // namespace

NormalizationStats compute_percentiles(const std::vector<const ImageTensor*>& images,
                                       double lowPct, double highPct,
                                       std::string modality) {
    if (images.empty())
        throw std::invalid_argument("compute_percentiles: empty image collection");
    if (!(0.0 <= lowPct && lowPct <= highPct && highPct <= 100.0))
        throw std::invalid_argument("compute_percentiles: invalid percentile bounds");

    std::size_t total = 0;
    for (const ImageTensor* img : images) total += img->size();
    std::vector<double> pool;
    pool.reserve(total);
    for (const ImageTensor* img : images)
        pool.insert(pool.end(), img->data.begin(), img->data.end());

    NormalizationStats stats;
    stats.modality = std::move(modality);
    stats.lo = interpolated_percentile(pool, lowPct);
    stats.hi = interpolated_percentile(pool, highPct);
    return stats;
}

NormalizationStats compute_percentiles(const std::vector<ImageTensor>& images,
                                       double lowPct, double highPct,
                                       std::string modality) {
    std::vector<const ImageTensor*> ptrs;
    ptrs.reserve(images.size());
    for (const ImageTensor& img : images) ptrs.push_back(&img);
    return compute_percentiles(ptrs, lowPct, highPct, std::move(modality));
}

ImageTensor normalize(const ImageTensor& img, const NormalizationStats& stats,
                      bool* degenerate) {
    if (!std::isfinite(stats.lo) || !std::isfinite(stats.hi) || stats.lo > stats.hi)
        throw std::invalid_argument("normalize: invalid stats");

    ImageTensor out(img.channels, img.height, img.width);
    const double range = stats.hi - stats.lo;
    if (range < 1e-12) {
        if (degenerate) *degenerate = true;
        std::fill(out.data.begin(), out.data.end(), 0.5);
        return out;
    }
    if (degenerate) *degenerate = false;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img.data[i], stats.lo, stats.hi);
        out.data[i] = (v - stats.lo) / range;
    }
    return out;
}

ImageTensor to_db(const ImageTensor& img, double floor) {
    if (!(floor > 0.0)) throw std::invalid_argument("to_db: floor must be positive");
    ImageTensor out(img.channels, img.height, img.width);
    for (std::size_t i = 0; i < img.size(); ++i)
        out.data[i] = 10.0 * std::log10(std::max(img.data[i], floor));
    return out;
}

ImageTensor gray_average(const ImageTensor& img) {
    ImageTensor out(1, img.height, img.width);
    const std::size_t plane = img.plane();
    for (std::size_t i = 0; i < plane; ++i) {
        double sum = 0.0;
        for (int c = 0; c < img.channels; ++c) sum += img.data[c * plane + i];
        out.data[i] = sum / img.channels;
    }
    return out;
}

ImageTensor select_channels(const ImageTensor& img, const std::vector<int>& indices) {
    if (indices.empty())
        throw std::invalid_argument("select_channels: empty index list");
    for (int idx : indices)
        if (idx < 0 || idx >= img.channels)
            throw std::invalid_argument("select_channels: channel index out of range");

    ImageTensor out(static_cast<int>(indices.size()), img.height, img.width);
    const std::size_t plane = img.plane();
    for (std::size_t k = 0; k < indices.size(); ++k)
        std::copy_n(img.channel(indices[k]), plane, out.data.begin() + k * plane);
    return out;
}

ImageTensor replicate_channel(const ImageTensor& img, int channel, int copies) {
    if (channel < 0 || channel >= img.channels)
        throw std::invalid_argument("replicate_channel: channel index out of range");
    if (copies < 1) throw std::invalid_argument("replicate_channel: copies < 1");
    ImageTensor out(copies, img.height, img.width);
    const std::size_t plane = img.plane();
    for (int k = 0; k < copies; ++k)
        std::copy_n(img.channel(channel), plane, out.data.begin() + k * plane);
    return out;
}

// -----------------------------------------------------------------------------
// Dihedral transforms
// -----------------------------------------------------------------------------

namespace {

bool swaps_dims(Dihedral op) {
    switch (op) {
        case Dihedral::Rot90:
        case Dihedral::Rot270:
        case Dihedral::FlipHRot90:
        case Dihedral::FlipVRot90:
            return true;
        default:
            return false;
    }
}

// Source coordinates (r, c) for output position (ro, co) of an H x W input.
std::pair<int, int> source_coords(Dihedral op, int H, int W, int ro, int co) {
    switch (op) {
        case Dihedral::Identity: return {ro, co};
        case Dihedral::Rot90: return {H - 1 - co, ro};          // clockwise
        case Dihedral::Rot180: return {H - 1 - ro, W - 1 - co};
        case Dihedral::Rot270: return {co, W - 1 - ro};
        case Dihedral::FlipH: return {ro, W - 1 - co};
        case Dihedral::FlipV: return {H - 1 - ro, co};
        case Dihedral::FlipHRot90: return {H - 1 - co, W - 1 - ro}; // rot90 after fliph
        case Dihedral::FlipVRot90: return {co, ro};                 // rot90 after flipv
    }
    return {ro, co};
}

} // namespace

ImageTensor apply_dihedral(const ImageTensor& img, Dihedral op) {
    const int H = img.height, W = img.width;
    const bool swap = swaps_dims(op);
    ImageTensor out(img.channels, swap ? W : H, swap ? H : W);
    for (int c = 0; c < img.channels; ++c) {
        const double* src = img.channel(c);
        double* dst = out.channel(c);
        for (int ro = 0; ro < out.height; ++ro)
            for (int co = 0; co < out.width; ++co) {
                const auto [r, col] = source_coords(op, H, W, ro, co);
                dst[ro * out.width + co] = src[r * W + col];
            }
    }
    return out;
}

std::pair<ImageTensor, ImageTensor> augment_pair(const ImageTensor& a,
                                                 const ImageTensor& b, Rng& rng) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("augment_pair: images must share H and W");
    const auto op = static_cast<Dihedral>(rng.uniform_int(0, 7));
    return {apply_dihedral(a, op), apply_dihedral(b, op)};
}

} // namespace smt
