#include "crackscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crackscope/dataset.hpp"
#include "crackscope/error.hpp"

namespace crackscope {

double recall(const ConfusionCounts& c) {
    if (c.tp + c.fn <= 0) fail(ErrorKind::UndefinedMetric, "recall: tp + fn = 0");
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double precision(const ConfusionCounts& c) {
    if (c.tp + c.fp <= 0) fail(ErrorKind::UndefinedMetric, "precision: tp + fp = 0");
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double accuracy(const ConfusionCounts& c) {
    const auto total = c.tp + c.tn + c.fp + c.fn;
    if (total <= 0) fail(ErrorKind::UndefinedMetric, "accuracy: empty confusion matrix");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

BBox DetectionRecord::bounding_box() const {
    if (box) return *box;
    if (polygon.empty()) fail(ErrorKind::InvalidPrediction, "detection has neither box nor polygon");
    double x0 = polygon.front().x, x1 = x0, y0 = polygon.front().y, y1 = y0;
    for (const auto& p : polygon) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

std::vector<Point2> DetectionRecord::outline() const {
    if (!polygon.empty()) return polygon;
    const auto b = bounding_box();
    return {{b.x1(), b.y1()}, {b.x2(), b.y1()}, {b.x2(), b.y2()}, {b.x1(), b.y2()}};
}

void DetectionRecord::validate() const {
    if (!(score >= 0.0 && score <= 1.0)) fail(ErrorKind::OutOfRange, "detection score outside [0,1]");
    if (!polygon.empty() && polygon.size() < 3) fail(ErrorKind::InvalidPrediction, "polygon needs at least 3 vertices");
    if (polygon.empty() && !box) fail(ErrorKind::InvalidPrediction, "detection has neither box nor polygon");
    if (box && !box->valid()) fail(ErrorKind::InvalidBox, "detection box must have w > 0 and h > 0");
}

namespace {

void require_same_extent(const BinaryMask& a, const BinaryMask& b, const char* op) {
    if (a.height != b.height || a.width != b.width) {
        fail(ErrorKind::InvalidShape, std::string(op) + ": mask extents differ");
    }
}

BinaryMask raster_of(const DetectionRecord& d, const MatchOptions& o) {
    return polygon_to_mask(d.outline(), o.raster_width, o.raster_height).mask;
}

// IoU that tolerates zero-extent boxes (a degenerate polygon simply never matches).
double box_iou(const BBox& a, const BBox& b) {
    if (!a.valid() || !b.valid()) return 0.0;
    return iou(a, b);
}

}  // namespace

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    require_same_extent(a, b, "mask_iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += (a.bits[i] && b.bits[i]);
        uni += (a.bits[i] || b.bits[i]);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ConfusionCounts pixel_confusion(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_extent(pred, gt, "pixel_confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

ConfusionCounts MatchResult::counts() const {
    ConfusionCounts c;
    c.tp = std::count(is_tp.begin(), is_tp.end(), true);
    c.fp = static_cast<std::int64_t>(is_tp.size()) - c.tp;
    c.fn = fn;
    return c;
}

MatchResult match_instances(std::span<const DetectionRecord> preds, std::span<const DetectionRecord> gts,
                            const MatchOptions& options) {
    if (!(options.iou_threshold > 0.0 && options.iou_threshold <= 1.0)) {
        fail(ErrorKind::OutOfRange, "match_instances: iou threshold must be in (0,1]");
    }
    const std::size_t np = preds.size(), ng = gts.size();

    std::vector<double> overlap(np * ng, 0.0);
    if (options.mode == MatchMode::Box) {
        for (std::size_t i = 0; i < np; ++i) {
            const auto pb = preds[i].bounding_box();
            for (std::size_t j = 0; j < ng; ++j) overlap[i * ng + j] = box_iou(pb, gts[j].bounding_box());
        }
    } else {
        std::vector<BinaryMask> gt_masks;
        gt_masks.reserve(ng);
        for (const auto& g : gts) gt_masks.push_back(raster_of(g, options));
        for (std::size_t i = 0; i < np; ++i) {
            const auto pm = raster_of(preds[i], options);
            for (std::size_t j = 0; j < ng; ++j) overlap[i * ng + j] = mask_iou(pm, gt_masks[j]);
        }
    }

    std::vector<std::size_t> order(np);
    std::iota(order.begin(), order.end(), 0);
    std::ranges::stable_sort(order, [&](auto a, auto b) { return preds[a].score > preds[b].score; });

    MatchResult r{std::vector<bool>(np, false), std::vector<int>(np, -1), 0};
    std::vector<bool> taken(ng, false);
    for (auto i : order) {
        int best = -1;
        double best_iou = options.iou_threshold;
        for (std::size_t j = 0; j < ng; ++j) {
            if (taken[j]) continue;
            const double v = overlap[i * ng + j];
            if (v >= best_iou && (best < 0 || v > best_iou)) {
                best = static_cast<int>(j);
                best_iou = v;
            }
        }
        if (best >= 0) {
            taken[static_cast<std::size_t>(best)] = true;
            r.is_tp[i] = true;
            r.matched_gt[i] = best;
        }
    }
    r.fn = std::count(taken.begin(), taken.end(), false);
    return r;
}

std::vector<PRPoint> pr_curve(std::span<const ScoredFlag> flagged, std::int64_t total_gt) {
    if (total_gt < 1) fail(ErrorKind::UndefinedMetric, "pr_curve: no ground truth instances");
    if (flagged.empty()) return {PRPoint{1.0, 0.0, 0.0, false}};

    std::vector<std::size_t> order(flagged.size());
    std::iota(order.begin(), order.end(), 0);
    std::ranges::stable_sort(order, [&](auto a, auto b) { return flagged[a].score > flagged[b].score; });

    std::vector<PRPoint> curve;
    std::int64_t tp = 0, seen = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& f = flagged[order[k]];
        tp += f.is_tp;
        ++seen;
        const bool last_of_score = k + 1 == order.size() || flagged[order[k + 1]].score != f.score;
        if (!last_of_score) continue;
        curve.push_back({f.score, static_cast<double>(tp) / static_cast<double>(seen),
                         static_cast<double>(tp) / static_cast<double>(total_gt), true});
    }
    return curve;
}

double average_precision(std::span<const PRPoint> curve) {
    if (curve.empty()) fail(ErrorKind::UndefinedMetric, "average_precision: empty curve");
    const std::size_t n = curve.size();
    std::vector<double> envelope(n);
    double running = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        if (curve[i].precision_defined) running = std::max(running, curve[i].precision);
        envelope[i] = running;
    }
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ap += (curve[i].recall - prev_recall) * envelope[i];
        prev_recall = curve[i].recall;
    }
    return std::clamp(ap, 0.0, 1.0);
}

}  // namespace crackscope
