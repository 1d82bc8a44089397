#pragma once

// Crack-mask geometry: connected components, exact Euclidean distance
// transform, Zhang-Suen thinning, and inscribed-disk width measurement.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "crackscope/geometry.hpp"

namespace crackscope {

struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    int maxval = 255;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w, bool fill = false) : height(h), width(w), bits(h * w, fill ? 1 : 0) {}

    bool at(std::size_t r, std::size_t c) const { return bits[r * width + c] != 0; }
    void set(std::size_t r, std::size_t c, bool v = true) { bits[r * width + c] = v ? 1 : 0; }
    std::size_t count() const;
    bool operator==(const BinaryMask&) const = default;
};

struct Pixel {
    int row = 0;
    int col = 0;
    auto operator<=>(const Pixel&) const = default;
};

struct CrackComponent {
    int id = 0;
    std::vector<Pixel> pixels;  // raster order
    BBox box;                   // pixel-aligned: pixel (r,c) covers [c,c+1) x [r,r+1)
};

struct ScaleConfig {
    std::optional<double> mm_per_px;
    void validate() const;
};

struct WidthReport {
    int component_id = 0;
    std::size_t area_px = 0;
    double max_width_px = 0.0;
    Pixel max_width_location;
    double min_width_px = 0.0;
    Pixel min_width_location;
    std::size_t skeleton_length_px = 0;
    std::optional<double> max_width_mm;
    std::optional<double> min_width_mm;
};

BinaryMask threshold_mask(const GrayImage& gray, int thresh = 128);

// 8-connected components, largest first; equal areas ordered by raster-first pixel. Ids start at 1.
std::vector<CrackComponent> connected_components(const BinaryMask& m);

struct DistanceField {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    double at(Pixel p) const { return at(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col)); }
};

struct EdtOptions {
    // Treat pixels beyond the frame as background.
    bool border_is_background = true;
};

// Exact Euclidean distance from each pixel center to the nearest background pixel center.
// Foreground with no reachable background (border disabled, no background at all) is +inf.
DistanceField distance_transform(const BinaryMask& m, const EdtOptions& options = {});

// Zhang-Suen thinning to a fixpoint, with the deepest pixel of every component
// (first in raster order on ties) held fixed. Every component keeps a skeleton.
BinaryMask skeletonize(const BinaryMask& m);

struct WidthSample {
    Pixel pixel;
    double width = 0.0;
};

// Width 2*edt(p) - 1 at every skeleton pixel of the component, raster order.
std::vector<WidthSample> width_profile(const CrackComponent& c, const DistanceField& edt, const BinaryMask& skeleton);

WidthReport analyze_component(const CrackComponent& c, const DistanceField& edt, const BinaryMask& skeleton,
                              const ScaleConfig& scale = {});

struct MaskAnalysis {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<WidthReport> reports;  // ordered by component id
};

// Full pipeline for one mask; components are analyzed on up to `threads` workers.
MaskAnalysis analyze_mask(const BinaryMask& m, const ScaleConfig& scale = {}, const EdtOptions& edt = {},
                          unsigned threads = 1);

}  // namespace crackscope
