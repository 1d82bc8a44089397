#include "crackscope/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crackscope/error.hpp"
#include "crackscope/ops.hpp"

namespace crackscope {
namespace {

void require_valid(const BBox& b, const char* what) {
    if (!b.valid()) fail(ErrorKind::InvalidBox, std::string(what) + ": box must be finite with w > 0 and h > 0");
}

constexpr double kAspectScale = 4.0 / (std::numbers::pi * std::numbers::pi);

double aspect_penalty(const BBox& pred, const BBox& gt) {
    const double d = std::atan(gt.w / gt.h) - std::atan(pred.w / pred.h);
    return kAspectScale * d * d;
}

double overlap(double lo_a, double hi_a, double lo_b, double hi_b) {
    return std::max(0.0, std::min(hi_a, hi_b) - std::max(lo_a, lo_b));
}

double center_term(const BBox& pred, const BBox& gt) {
    const double rho2 = (pred.cx - gt.cx) * (pred.cx - gt.cx) + (pred.cy - gt.cy) * (pred.cy - gt.cy);
    const double cw = std::max(pred.x2(), gt.x2()) - std::min(pred.x1(), gt.x1());
    const double ch = std::max(pred.y2(), gt.y2()) - std::min(pred.y1(), gt.y1());
    return rho2 / (cw * cw + ch * ch);
}

// Derivative of a box edge w.r.t. (center, size) along one axis.
struct EdgeGrad {
    double dc = 0.0;
    double ds = 0.0;
};

constexpr EdgeGrad kLowEdge{1.0, -0.5};
constexpr EdgeGrad kHighEdge{1.0, 0.5};
constexpr EdgeGrad kFixed{};

EdgeGrad operator-(EdgeGrad a, EdgeGrad b) { return {a.dc - b.dc, a.ds - b.ds}; }

struct AxisGrad {
    double overlap = 0.0;
    EdgeGrad d_overlap;
    double enclose = 0.0;
    EdgeGrad d_enclose;
    bool kink = false;
};

// Ties resolve to pred's edge, which gives the one-sided derivative in the direction pred moves.
AxisGrad axis_grad(double p_lo, double p_hi, double g_lo, double g_hi) {
    AxisGrad a;
    a.kink = (p_lo == g_lo) || (p_hi == g_hi);
    const double hi = std::min(p_hi, g_hi);
    const double lo = std::max(p_lo, g_lo);
    const EdgeGrad d_hi = p_hi <= g_hi ? kHighEdge : kFixed;
    const EdgeGrad d_lo = p_lo >= g_lo ? kLowEdge : kFixed;
    const double raw = hi - lo;
    if (raw > 0.0) {
        a.overlap = raw;
        a.d_overlap = d_hi - d_lo;
    } else if (raw == 0.0) {
        a.kink = true;
    }
    a.enclose = std::max(p_hi, g_hi) - std::min(p_lo, g_lo);
    a.d_enclose = (p_hi >= g_hi ? kHighEdge : kFixed) - (p_lo <= g_lo ? kLowEdge : kFixed);
    return a;
}

}  // namespace

bool BBox::valid() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) && w > 0.0 && h > 0.0;
}

double iou(const BBox& a, const BBox& b) {
    require_valid(a, "iou");
    require_valid(b, "iou");
    const double inter = overlap(a.x1(), a.x2(), b.x1(), b.x2()) * overlap(a.y1(), a.y2(), b.y1(), b.y2());
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double ciou_alpha(const BBox& pred, const BBox& gt) {
    const double v = aspect_penalty(pred, gt);
    const double denom = (1.0 - iou(pred, gt)) + v;
    return denom > 0.0 ? v / denom : 0.0;
}

double ciou_loss_fixed_alpha(const BBox& pred, const BBox& gt, double alpha) {
    require_valid(pred, "ciou_loss");
    require_valid(gt, "ciou_loss");
    return 1.0 - iou(pred, gt) + center_term(pred, gt) + alpha * aspect_penalty(pred, gt);
}

double ciou_loss(const BBox& pred, const BBox& gt) {
    require_valid(pred, "ciou_loss");
    require_valid(gt, "ciou_loss");
    if (pred.cx == gt.cx && pred.cy == gt.cy && pred.w == gt.w && pred.h == gt.h) return 0.0;
    const double loss = ciou_loss_fixed_alpha(pred, gt, ciou_alpha(pred, gt));
    return std::max(loss, 0.0);
}

CiouGrad ciou_grad(const BBox& pred, const BBox& gt) {
    require_valid(pred, "ciou_grad");
    require_valid(gt, "ciou_grad");
    const auto ax = axis_grad(pred.x1(), pred.x2(), gt.x1(), gt.x2());
    const auto ay = axis_grad(pred.y1(), pred.y2(), gt.y1(), gt.y2());

    // Parameter order: cx, cy, w, h.
    std::array<double, 4> d_inter{};
    d_inter[0] = ax.d_overlap.dc * ay.overlap;
    d_inter[2] = ax.d_overlap.ds * ay.overlap;
    d_inter[1] = ay.d_overlap.dc * ax.overlap;
    d_inter[3] = ay.d_overlap.ds * ax.overlap;
    const std::array<double, 4> d_area{0.0, 0.0, pred.h, pred.w};

    const double inter = ax.overlap * ay.overlap;
    const double uni = pred.area() + gt.area() - inter;

    const double dx = pred.cx - gt.cx, dy = pred.cy - gt.cy;
    const double rho2 = dx * dx + dy * dy;
    const double c2 = ax.enclose * ax.enclose + ay.enclose * ay.enclose;
    const std::array<double, 4> d_rho2{2.0 * dx, 2.0 * dy, 0.0, 0.0};
    const std::array<double, 4> d_c2{2.0 * ax.enclose * ax.d_enclose.dc, 2.0 * ay.enclose * ay.d_enclose.dc,
                                     2.0 * ax.enclose * ax.d_enclose.ds, 2.0 * ay.enclose * ay.d_enclose.ds};

    const double alpha = ciou_alpha(pred, gt);
    const double diff = std::atan(gt.w / gt.h) - std::atan(pred.w / pred.h);
    const double r2 = pred.w * pred.w + pred.h * pred.h;
    // d atan(w/h) = (h dw - w dh) / (w^2 + h^2)
    const double dv_dw = -2.0 * kAspectScale * diff * (pred.h / r2);
    const double dv_dh = 2.0 * kAspectScale * diff * (pred.w / r2);
    const std::array<double, 4> d_v{0.0, 0.0, dv_dw, dv_dh};

    CiouGrad g;
    g.at_kink = ax.kink || ay.kink;
    for (std::size_t i = 0; i < 4; ++i) {
        const double d_uni = d_area[i] - d_inter[i];
        const double d_iou = (d_inter[i] * uni - inter * d_uni) / (uni * uni);
        const double d_center = (d_rho2[i] * c2 - rho2 * d_c2[i]) / (c2 * c2);
        g.d[i] = -d_iou + d_center + alpha * d_v[i];
    }
    return g;
}

BBox decode_anchor_free(const GridCellPred& p) {
    for (double v : p.raw) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidPrediction, "decode_anchor_free: non-finite raw value");
    }
    if (!(p.stride > 0.0) || !std::isfinite(p.stride)) fail(ErrorKind::InvalidPrediction, "decode_anchor_free: stride must be > 0");
    if (p.gx < 0 || p.gy < 0) fail(ErrorKind::InvalidPrediction, "decode_anchor_free: negative cell index");
    BBox b{(p.gx + sigmoid(p.raw[0])) * p.stride, (p.gy + sigmoid(p.raw[1])) * p.stride,
           std::exp(p.raw[2]) * p.stride, std::exp(p.raw[3]) * p.stride};
    if (!b.valid()) fail(ErrorKind::InvalidPrediction, "decode_anchor_free: decoded box out of range");
    return b;
}

}  // namespace crackscope
