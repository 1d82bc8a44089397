#pragma once

#include <array>

namespace crackscope {

// Axis-aligned box in center format, continuous pixel coordinates.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    double x1() const { return cx - 0.5 * w; }
    double x2() const { return cx + 0.5 * w; }
    double y1() const { return cy - 0.5 * h; }
    double y2() const { return cy + 0.5 * h; }
    double area() const { return w * h; }
    bool valid() const;
};

double iou(const BBox& a, const BBox& b);

// Complete-IoU loss: 1 - IoU + rho^2/c^2 + alpha*v.
double ciou_loss(const BBox& pred, const BBox& gt);

// Trade-off weight alpha = v / ((1 - IoU) + v), zero when both terms vanish.
double ciou_alpha(const BBox& pred, const BBox& gt);

// Same loss with alpha frozen at a given value; the function ciou_grad differentiates.
double ciou_loss_fixed_alpha(const BBox& pred, const BBox& gt, double alpha);

struct CiouGrad {
    std::array<double, 4> d{};  // d/d(cx, cy, w, h) of pred
    // Set when an edge of pred coincides with an edge of gt, or the boxes touch
    // with zero overlap; d is then the one-sided derivative that moves pred's edge.
    bool at_kink = false;
};

// Analytic gradient w.r.t. pred; alpha is held constant.
CiouGrad ciou_grad(const BBox& pred, const BBox& gt);

struct GridCellPred {
    int gx = 0;
    int gy = 0;
    double stride = 1.0;
    std::array<double, 4> raw{};  // dx, dy, dw, dh
};

// cx = (gx + sigmoid(dx)) * stride, w = exp(dw) * stride, likewise for y/h.
BBox decode_anchor_free(const GridCellPred& p);

}  // namespace crackscope
