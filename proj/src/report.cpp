#include "crackscope/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <system_error>

#include <json.hpp>

#include "crackscope/error.hpp"
#include "crackscope/parallel.hpp"

namespace crackscope {
namespace {

template <typename Fn>
std::optional<double> defined(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::UndefinedMetric) throw;
        return std::nullopt;
    }
}

BinaryMask union_raster(std::span<const DetectionRecord* const> records, std::size_t width, std::size_t height) {
    BinaryMask m(height, width);
    for (const auto* r : records) {
        const auto part = polygon_to_mask(r->outline(), width, height).mask;
        for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] |= part.bits[i];
    }
    return m;
}

}  // namespace

std::string_view to_string(EvalMode mode) { return mode == EvalMode::Instance ? "instance" : "pixel"; }

std::vector<std::string> unknown_image_ids(const DatasetIndex& index, std::span<const DetectionRecord> preds) {
    std::set<std::string> known;
    for (const auto& e : index.entries) known.insert(e.image_id);
    std::set<std::string> unknown;
    for (const auto& p : preds) {
        if (!known.contains(p.image)) unknown.insert(p.image);
    }
    return {unknown.begin(), unknown.end()};
}

EvalSummary evaluate(const DatasetIndex& index, std::span<const DetectionRecord> preds, const EvalOptions& options) {
    if (const auto unknown = unknown_image_ids(index, preds); !unknown.empty()) {
        std::string ids;
        for (const auto& id : unknown) ids += (ids.empty() ? "" : ", ") + id;
        fail(ErrorKind::InvalidPrediction, "predictions reference images without ground truth: " + ids);
    }

    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < index.entries.size(); ++i) slot[index.entries[i].image_id] = i;
    std::vector<std::vector<std::size_t>> per_image(index.entries.size());
    for (std::size_t i = 0; i < preds.size(); ++i) per_image[slot.at(preds[i].image)].push_back(i);

    EvalSummary s;
    s.mode = options.mode;
    s.iou_threshold = options.iou_threshold;

    if (options.mode == EvalMode::Instance) {
        std::vector<MatchResult> results(index.entries.size());
        std::vector<std::int64_t> gt_counts(index.entries.size(), 0);
        parallel_for(index.entries.size(), options.threads, [&](std::size_t k) {
            const auto& e = index.entries[k];
            std::vector<DetectionRecord> gts;
            for (const auto& l : parse_label_file(read_text_file(e.label_path))) gts.push_back(to_detection(l, e.image_id));
            std::vector<DetectionRecord> local;
            for (auto i : per_image[k]) local.push_back(preds[i]);
            MatchOptions mo;
            mo.iou_threshold = options.iou_threshold;
            mo.mode = options.match;
            mo.raster_width = e.width;
            mo.raster_height = e.height;
            results[k] = match_instances(local, gts, mo);
            gt_counts[k] = static_cast<std::int64_t>(gts.size());
        });

        std::vector<ScoredFlag> flags(preds.size());
        std::int64_t total_gt = 0;
        for (std::size_t k = 0; k < results.size(); ++k) {
            s.counts += results[k].counts();
            total_gt += gt_counts[k];
            for (std::size_t j = 0; j < per_image[k].size(); ++j) {
                const auto i = per_image[k][j];
                flags[i] = {preds[i].score, results[k].is_tp[j]};
            }
        }
        s.precision = defined([&] { return precision(s.counts); });
        s.recall = defined([&] { return recall(s.counts); });
        if (total_gt > 0) {
            s.curve = pr_curve(flags, total_gt);
            s.ap = average_precision(s.curve);
        }
        return s;
    }

    std::vector<ConfusionCounts> per(index.entries.size());
    parallel_for(index.entries.size(), options.threads, [&](std::size_t k) {
        const auto& e = index.entries[k];
        std::vector<DetectionRecord> gts;
        for (const auto& l : parse_label_file(read_text_file(e.label_path))) gts.push_back(to_detection(l, e.image_id));
        std::vector<const DetectionRecord*> gt_ptrs, pred_ptrs;
        for (const auto& g : gts) gt_ptrs.push_back(&g);
        for (auto i : per_image[k]) pred_ptrs.push_back(&preds[i]);
        per[k] = pixel_confusion(union_raster(pred_ptrs, e.width, e.height), union_raster(gt_ptrs, e.width, e.height));
    });
    for (const auto& c : per) s.counts += c;
    s.tn = s.counts.tn;
    s.precision = defined([&] { return precision(s.counts); });
    s.recall = defined([&] { return recall(s.counts); });
    s.accuracy = defined([&] { return accuracy(s.counts); });
    return s;
}

std::string width_report_json(const MaskAnalysis& analysis, std::string_view source) {
    using nlohmann::ordered_json;
    ordered_json doc;
    doc["mask"] = std::string(source);
    doc["height"] = analysis.height;
    doc["width"] = analysis.width;
    auto comps = ordered_json::array();
    for (const auto& r : analysis.reports) {
        ordered_json j;
        j["component_id"] = r.component_id;
        j["area_px"] = r.area_px;
        j["max_width_px"] = r.max_width_px;
        j["max_width_location"] = {r.max_width_location.row, r.max_width_location.col};
        j["min_width_px"] = r.min_width_px;
        j["min_width_location"] = {r.min_width_location.row, r.min_width_location.col};
        j["skeleton_length_px"] = r.skeleton_length_px;
        if (r.max_width_mm) j["max_width_mm"] = *r.max_width_mm;
        if (r.min_width_mm) j["min_width_mm"] = *r.min_width_mm;
        comps.push_back(std::move(j));
    }
    doc["components"] = std::move(comps);
    return doc.dump(2) + '\n';
}

std::string metrics_json(const EvalSummary& s) {
    using nlohmann::ordered_json;
    auto opt = [](const auto& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json j;
    j["mode"] = std::string(to_string(s.mode));
    j["iou_threshold"] = s.iou_threshold;
    j["tp"] = s.counts.tp;
    j["fp"] = s.counts.fp;
    j["fn"] = s.counts.fn;
    j["tn"] = opt(s.tn);
    j["precision"] = opt(s.precision);
    j["recall"] = opt(s.recall);
    j["accuracy"] = opt(s.accuracy);
    j["ap"] = opt(s.ap);
    return j.dump(2) + '\n';
}

std::string pr_curve_csv(std::span<const PRPoint> curve) {
    std::string out = "threshold,precision,recall\n";
    char buf[128];
    for (const auto& p : curve) {
        if (p.precision_defined) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", p.threshold, p.precision, p.recall);
        } else {
            std::snprintf(buf, sizeof buf, "%.6f,nan,%.6f\n", p.threshold, p.recall);
        }
        out += buf;
    }
    return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::InvalidParams, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) fail(ErrorKind::InvalidParams, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorKind::InvalidParams, "cannot rename onto " + path.string());
    }
}

}  // namespace crackscope
