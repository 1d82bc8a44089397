#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crackscope/dataset.hpp"
#include "crackscope/mask.hpp"
#include "crackscope/metrics.hpp"

namespace crackscope {

enum class EvalMode { Instance, Pixel };

struct EvalOptions {
    EvalMode mode = EvalMode::Instance;
    MatchMode match = MatchMode::Box;
    double iou_threshold = 0.5;
    unsigned threads = 1;
};

// Undefined metrics are left empty and serialized as null.
struct EvalSummary {
    EvalMode mode = EvalMode::Instance;
    double iou_threshold = 0.5;
    ConfusionCounts counts;
    std::optional<std::int64_t> tn;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> accuracy;
    std::optional<double> ap;
    std::vector<PRPoint> curve;
};

// Prediction image ids that have no label file in the index, sorted and unique.
std::vector<std::string> unknown_image_ids(const DatasetIndex& index, std::span<const DetectionRecord> preds);

// Instance mode matches per image and sweeps a PR curve over all predictions;
// pixel mode rasterizes the union of polygons per image and counts pixels.
// Throws InvalidPrediction if any prediction names an image outside the index.
EvalSummary evaluate(const DatasetIndex& index, std::span<const DetectionRecord> preds, const EvalOptions& options);

std::string_view to_string(EvalMode mode);

// {"mask", "height", "width", "components": [WidthReport...]}, keys in fixed order.
std::string width_report_json(const MaskAnalysis& analysis, std::string_view source);

// Keys: mode, iou_threshold, tp, fp, fn, tn, precision, recall, accuracy, ap.
std::string metrics_json(const EvalSummary& summary);

// Header `threshold,precision,recall`, six decimals, one row per distinct threshold.
std::string pr_curve_csv(std::span<const PRPoint> curve);

// Write to a temporary sibling, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace crackscope
