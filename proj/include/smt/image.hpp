#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "smt/errors.hpp"
#include "smt/rng.hpp"

namespace smt {

// Multi-channel raster, channel-major then row-major. The universal carrier
// for images, transformed images and image-shaped gradients. Values live in
// doubles in memory; the on-disk SMT format stores binary32.
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

    std::size_t index(int c, int r, int col) const {
        return (static_cast<std::size_t>(c) * height + r) * width + col;
    }
    double& at(int c, int r, int col) { return data[index(c, r, col)]; }
    double at(int c, int r, int col) const { return data[index(c, r, col)]; }

    double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
    const double* channel(int c) const {
        return data.data() + static_cast<std::size_t>(c) * plane();
    }

    bool same_shape(const ImageTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    // Throws ValidationError on inconsistent size or non-finite values.
    void validate() const;
};

struct NormalizationStats {
    double lo = 0.0; // value of the low percentile
    double hi = 1.0; // value of the high percentile
    std::string modality;
};

// --- SMT tensor file format -------------------------------------------------
// "SMT1" | u32 LE channels, height, width | binary32 LE payload, channel-major.
void save_smt(const ImageTensor& img, const std::string& path);
ImageTensor load_smt(const std::string& path);

// --- Preprocessing -----------------------------------------------------------

// Percentiles over the pooled values of all channels of all images, linear
// interpolation between order statistics (rank = pct/100 * (n-1)).
NormalizationStats compute_percentiles(const std::vector<const ImageTensor*>& images,
                                       double lowPct = 0.5, double highPct = 99.5,
                                       std::string modality = {});
NormalizationStats compute_percentiles(const std::vector<ImageTensor>& images,
                                       double lowPct = 0.5, double highPct = 99.5,
                                       std::string modality = {});

// clamp to [lo, hi] then map linearly to [0, 1]. A degenerate range
// (hi - lo < 1e-12) maps everything to 0.5 and sets *degenerate.
ImageTensor normalize(const ImageTensor& img, const NormalizationStats& stats,
                      bool* degenerate = nullptr);

// v -> 10 * log10(max(v, floor)), floor > 0.
ImageTensor to_db(const ImageTensor& img, double floor = 1e-6);

// Channel mean; implements the grayscale operator g.
ImageTensor gray_average(const ImageTensor& img);

ImageTensor select_channels(const ImageTensor& img, const std::vector<int>& indices);

ImageTensor replicate_channel(const ImageTensor& img, int channel, int copies);

// The eight symmetries of the square. Rotations are clockwise.
enum class Dihedral {
    Identity = 0,
    Rot90 = 1,
    Rot180 = 2,
    Rot270 = 3,
    FlipH = 4,
    FlipV = 5,
    FlipHRot90 = 6,
    FlipVRot90 = 7,
};

ImageTensor apply_dihedral(const ImageTensor& img, Dihedral op);

// Draws one of the 8 dihedral transforms uniformly and applies it to both
// images. Inputs must share H and W.
std::pair<ImageTensor, ImageTensor> augment_pair(const ImageTensor& a,
                                                 const ImageTensor& b, Rng& rng);

} // namespace smt
