#pragma once

// Ingestion of labels, masks and predictions, and the seeded dataset split.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crackscope/error.hpp"
#include "crackscope/mask.hpp"
#include "crackscope/metrics.hpp"

namespace crackscope {

// One polygon label line: `class x1 y1 x2 y2 ...`, coordinates normalized to [0,1].
struct LabelRecord {
    int class_id = 0;
    std::vector<Point2> polygon;
    bool operator==(const LabelRecord&) const = default;
};

std::vector<LabelRecord> parse_label_file(std::string_view text);
std::string format_label_file(std::span<const LabelRecord> labels);

DetectionRecord to_detection(const LabelRecord& label, std::string image);

struct Raster {
    BinaryMask mask;
    bool degenerate = false;  // zero-area polygon; mask is empty
};

// Even-odd fill; a pixel is foreground iff its center lies inside the polygon
// scaled to (x * width, y * height).
Raster polygon_to_mask(std::span<const Point2> polygon, std::size_t width, std::size_t height);
inline Raster polygon_to_mask(const LabelRecord& label, std::size_t width, std::size_t height) {
    return polygon_to_mask(label.polygon, width, height);
}

// --- split ---

struct SplitSpec {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    std::uint64_t seed = 0;
};

// SplitMix64 (Steele, Lea & Flood). Pinned so splits agree across platforms and languages.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

// Fisher-Yates from the back: for i = n-1 .. 1, swap(i, next() % (i + 1)).
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (std::size_t i = items.size(); i-- > 1;) {
        const auto j = static_cast<std::size_t>(rng.next() % (i + 1));
        using std::swap;
        swap(items[i], items[j]);
    }
}

template <typename T>
struct SplitResult {
    std::vector<T> train;
    std::vector<T> val;
    std::vector<T> test;
};

// Shuffle, then slice train | val | test from the front.
template <typename T>
SplitResult<T> split_dataset(std::vector<T> items, const SplitSpec& spec) {
    if (spec.train + spec.val + spec.test > items.size()) {
        fail(ErrorKind::InvalidSplit, "split: " + std::to_string(spec.train + spec.val + spec.test) +
                                          " requested from " + std::to_string(items.size()) + " items");
    }
    seeded_shuffle(items, spec.seed);
    SplitResult<T> out;
    auto it = items.begin();
    auto take = [&](std::size_t n, std::vector<T>& dst) {
        dst.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<std::ptrdiff_t>(n)));
        it += static_cast<std::ptrdiff_t>(n);
    };
    take(spec.train, out.train);
    take(spec.val, out.val);
    take(spec.test, out.test);
    return out;
}

// --- images ---

GrayImage read_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_pgm(const GrayImage& img);
GrayImage read_pgm_file(const std::filesystem::path& path);

// --- predictions ---

// One JSON object per line: {"image": str, "class": int, "score": [0,1], "polygon": [[x,y], ...]},
// optionally "bbox": [cx, cy, w, h]. Blank lines are skipped.
std::vector<DetectionRecord> read_predictions(std::string_view text);
std::string format_predictions(std::span<const DetectionRecord> records);

// --- dataset index ---

struct DatasetEntry {
    std::string image_id;
    std::filesystem::path image_path;  // empty when no .pgm sits next to the label
    std::filesystem::path label_path;
    std::size_t width = 0;
    std::size_t height = 0;
};

struct DatasetIndex {
    std::vector<DatasetEntry> entries;  // sorted by image id
};

// Every `<id>.txt` in dir is a label file; a sibling `<id>.pgm` supplies the
// extents, otherwise default_width x default_height is used.
DatasetIndex load_dataset_index(const std::filesystem::path& dir, std::size_t default_width = 640,
                                std::size_t default_height = 640);

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);

}  // namespace crackscope
