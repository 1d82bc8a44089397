#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crackscope/geometry.hpp"
#include "crackscope/mask.hpp"

namespace crackscope {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;  // pixel mode only

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    bool operator==(const ConfusionCounts&) const = default;
};

double recall(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double accuracy(const ConfusionCounts& c);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

// Polygon vertices and boxes are both in normalized [0,1] image coordinates.
struct DetectionRecord {
    std::string image;
    int class_id = 0;
    double score = 0.0;
    std::vector<Point2> polygon;
    std::optional<BBox> box;

    // Explicit box if present, otherwise the polygon's bounding box.
    BBox bounding_box() const;
    // Polygon if present, otherwise the box corners.
    std::vector<Point2> outline() const;
    void validate() const;
};

double mask_iou(const BinaryMask& a, const BinaryMask& b);
ConfusionCounts pixel_confusion(const BinaryMask& pred, const BinaryMask& gt);

enum class MatchMode { Box, Mask };

struct MatchOptions {
    double iou_threshold = 0.5;
    MatchMode mode = MatchMode::Box;
    // Raster extent used in mask mode.
    std::size_t raster_width = 640;
    std::size_t raster_height = 640;
};

struct MatchResult {
    std::vector<bool> is_tp;  // indexed like the input predictions
    std::vector<int> matched_gt;  // -1 when unmatched
    std::int64_t fn = 0;

    ConfusionCounts counts() const;
};

// Greedy matching for one image: predictions in descending score order (ties by
// input order) each take the unmatched ground truth of highest IoU >= threshold.
MatchResult match_instances(std::span<const DetectionRecord> preds, std::span<const DetectionRecord> gts,
                            const MatchOptions& options = {});

struct ScoredFlag {
    double score = 0.0;
    bool is_tp = false;
};

struct PRPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    bool precision_defined = true;
};

// One point per distinct score, thresholds strictly decreasing. With no
// predictions, a single point (threshold 1, recall 0) with precision undefined.
std::vector<PRPoint> pr_curve(std::span<const ScoredFlag> flagged, std::int64_t total_gt);

// All-points interpolation: area under p_interp(r) = max_{r' >= r} p(r').
double average_precision(std::span<const PRPoint> curve);

}  // namespace crackscope
