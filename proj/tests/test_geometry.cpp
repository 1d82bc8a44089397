#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "crackscope/error.hpp"
#include "crackscope/geometry.hpp"

using namespace crackscope;

TEST_CASE("iou") {
    const BBox a{0, 0, 2, 2};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, BBox{1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(iou(BBox{0, 0, 1, 1}, BBox{10, 0, 1, 1}) == 0.0);
    CHECK_THROWS_AS(iou(a, BBox{0, 0, 0, 1}), Error);
}

TEST_CASE("ciou hand cases") {
    const BBox a{3, 4, 2, 5};
    CHECK(ciou_loss(a, a) == 0.0);
    CHECK(ciou_loss(BBox{0, 0, 2, 2}, BBox{2, 0, 2, 2}) == doctest::Approx(1.2).epsilon(1e-12));

    // Same centers, pred 2x2 against gt 2x4, evaluated term by term.
    const double iou_v = 4.0 / 8.0;
    const double v = 4.0 / (std::numbers::pi * std::numbers::pi) * std::pow(std::atan(2.0 / 4.0) - std::atan(1.0), 2);
    const double alpha = v / ((1.0 - iou_v) + v);
    CHECK(ciou_alpha(BBox{1, 2, 2, 2}, BBox{1, 2, 2, 4}) == doctest::Approx(alpha).epsilon(1e-14));
    CHECK(ciou_loss(BBox{1, 2, 2, 2}, BBox{1, 2, 2, 4}) == doctest::Approx(1.0 - iou_v + alpha * v).epsilon(1e-14));

    CHECK_THROWS_AS(ciou_loss(BBox{0, 0, -1, 2}, a), Error);
    CHECK_THROWS_AS(ciou_loss(a, BBox{0, 0, 1, 0}), Error);
}

TEST_CASE("ciou invariances") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(-20, 20), size(0.1, 10), shift(-100, 100), scale(0.01, 50);
    for (int k = 0; k < 2000; ++k) {
        const BBox a{pos(rng), pos(rng), size(rng), size(rng)}, b{pos(rng), pos(rng), size(rng), size(rng)};
        const double l = ciou_loss(a, b);
        CHECK(l >= 0.0);
        CHECK(l <= 3.0);
        CHECK(std::abs(l - ciou_loss(b, a)) <= 1e-9);
        const double dx = shift(rng), dy = shift(rng), s = scale(rng);
        CHECK(std::abs(l - ciou_loss({a.cx + dx, a.cy + dy, a.w, a.h}, {b.cx + dx, b.cy + dy, b.w, b.h})) <= 1e-9);
        CHECK(std::abs(l - ciou_loss({a.cx * s, a.cy * s, a.w * s, a.h * s}, {b.cx * s, b.cy * s, b.w * s, b.h * s})) <=
              1e-9);
    }
}

TEST_CASE("ciou gradient") {
    const BBox g{5, 5, 3, 2};
    const auto at_min = ciou_grad(g, g);
    CHECK(std::abs(at_min.d[0]) <= 1e-12);
    CHECK(std::abs(at_min.d[1]) <= 1e-12);
    CHECK(at_min.at_kink);

    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> j(-0.4, 0.4), s(0.6, 1.6);
    int checked = 0;
    while (checked < 200) {
        const BBox p{g.cx + j(rng) * g.w, g.cy + j(rng) * g.h, g.w * s(rng), g.h * s(rng)};
        const auto gr = ciou_grad(p, g);
        if (gr.at_kink) continue;
        ++checked;
        const double alpha = ciou_alpha(p, g);
        const double eps = 1e-6;
        for (int i = 0; i < 4; ++i) {
            double hi[4] = {p.cx, p.cy, p.w, p.h}, lo[4] = {p.cx, p.cy, p.w, p.h};
            hi[i] += eps;
            lo[i] -= eps;
            const double fd = (ciou_loss_fixed_alpha({hi[0], hi[1], hi[2], hi[3]}, g, alpha) -
                               ciou_loss_fixed_alpha({lo[0], lo[1], lo[2], lo[3]}, g, alpha)) /
                              (2 * eps);
            CHECK(gr.d[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("anchor-free decode") {
    const auto a = decode_anchor_free({0, 0, 8, {0, 0, 0, 0}});
    CHECK(a.cx == 4);
    CHECK(a.cy == 4);
    CHECK(a.w == 8);
    CHECK(a.h == 8);
    CHECK(decode_anchor_free({0, 0, 8, {0, 0, std::log(2.0), 0}}).w == doctest::Approx(16).epsilon(1e-15));
    const auto b = decode_anchor_free({3, 2, 16, {0, 0, 0, 0}});
    CHECK(b.cx == 56);
    CHECK(b.cy == 40);
    CHECK(b.w == 16);
    CHECK(b.h == 16);
    CHECK_THROWS_AS(decode_anchor_free({0, 0, 0, {0, 0, 0, 0}}), Error);
    CHECK_THROWS_AS(decode_anchor_free({0, 0, 8, {0, 0, 1000, 0}}), Error);
}
