#pragma once

// Independent reference implementations used as test oracles. They favour
// obviousness over speed and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "crackscope/mask.hpp"
#include "crackscope/metrics.hpp"
#include "crackscope/tensor.hpp"

namespace oracle {

using crackscope::BinaryMask;
using crackscope::Tensor;

inline double naive_conv2d_at(const Tensor& x, const Tensor& k, double bias, std::size_t pad, std::size_t n,
                              std::size_t co, std::size_t oy, std::size_t ox) {
    double s = bias;
    for (std::size_t ci = 0; ci < x.c(); ++ci) {
        for (std::size_t ky = 0; ky < k.h(); ++ky) {
            for (std::size_t kx = 0; kx < k.w(); ++kx) {
                const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h()) || ix >= static_cast<long>(x.w())) continue;
                s += k.at(co, ci, ky, kx) * x.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
        }
    }
    return s;
}

inline double naive_pool_at(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad, std::size_t n,
                            std::size_t c, std::size_t oy, std::size_t ox) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t dy = 0; dy < k; ++dy) {
        for (std::size_t dx = 0; dx < k; ++dx) {
            const long iy = static_cast<long>(oy * stride + dy) - static_cast<long>(pad);
            const long ix = static_cast<long>(ox * stride + dx) - static_cast<long>(pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h()) || ix >= static_cast<long>(x.w())) continue;
            best = std::max(best, x.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)));
        }
    }
    return best;
}

// Squared distance from every pixel to the nearest background pixel, scanning
// all of them. With border_bg the one-pixel ring outside the frame counts as background.
inline std::vector<std::int64_t> brute_sq_edt(const BinaryMask& m, bool border_bg = true) {
    const long H = static_cast<long>(m.height), W = static_cast<long>(m.width);
    std::vector<std::pair<long, long>> bg;
    for (long r = 0; r < H; ++r)
        for (long c = 0; c < W; ++c)
            if (!m.at(r, c)) bg.emplace_back(r, c);
    if (border_bg) {
        for (long r = -1; r <= H; ++r) {
            bg.emplace_back(r, -1);
            bg.emplace_back(r, W);
        }
        for (long c = 0; c < W; ++c) {
            bg.emplace_back(-1, c);
            bg.emplace_back(H, c);
        }
    }
    std::vector<std::int64_t> out(m.bits.size(), 0);
    for (long r = 0; r < H; ++r) {
        for (long c = 0; c < W; ++c) {
            if (!m.at(r, c)) continue;
            std::int64_t best = std::numeric_limits<std::int64_t>::max();
            for (auto [br, bc] : bg) best = std::min<std::int64_t>(best, (r - br) * (r - br) + (c - bc) * (c - bc));
            out[static_cast<std::size_t>(r * W + c)] = best;
        }
    }
    return out;
}

// Largest inscribed disk diameter over the whole foreground, in the 2d-1 pixel-count convention.
inline double max_inscribed_width(const BinaryMask& m) {
    double best = 0.0;
    for (auto d2 : brute_sq_edt(m)) best = std::max(best, 2.0 * std::sqrt(static_cast<double>(d2)) - 1.0);
    return best;
}

// 8-connected labels by BFS in raster discovery order (0 = background).
inline std::vector<int> flood_labels(const BinaryMask& m, int& count) {
    const int H = static_cast<int>(m.height), W = static_cast<int>(m.width);
    std::vector<int> lab(m.bits.size(), 0);
    count = 0;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            if (!m.at(r, c) || lab[r * W + c]) continue;
            ++count;
            std::deque<std::pair<int, int>> q{{r, c}};
            lab[r * W + c] = count;
            while (!q.empty()) {
                auto [y, x] = q.front();
                q.pop_front();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || nx < 0 || ny >= H || nx >= W) continue;
                        if (!m.at(ny, nx) || lab[ny * W + nx]) continue;
                        lab[ny * W + nx] = count;
                        q.emplace_back(ny, nx);
                    }
            }
        }
    }
    return lab;
}

// Textbook Zhang-Suen, written from the neighbourhood definition P2..P9.
// Pixels flagged in `keep` are never deleted.
inline BinaryMask zhang_suen(const BinaryMask& in, const std::vector<bool>& keep = {}) {
    BinaryMask img = in;
    const int H = static_cast<int>(img.height), W = static_cast<int>(img.width);
    auto px = [&](int r, int c) { return (r < 0 || c < 0 || r >= H || c >= W) ? 0 : (img.at(r, c) ? 1 : 0); };
    for (bool changed = true; changed;) {
        changed = false;
        for (int step = 0; step < 2; ++step) {
            std::vector<std::pair<int, int>> kill;
            for (int r = 0; r < H; ++r) {
                for (int c = 0; c < W; ++c) {
                    if (!px(r, c)) continue;
                    if (!keep.empty() && keep[static_cast<std::size_t>(r * W + c)]) continue;
                    const int p2 = px(r - 1, c), p3 = px(r - 1, c + 1), p4 = px(r, c + 1), p5 = px(r + 1, c + 1);
                    const int p6 = px(r + 1, c), p7 = px(r + 1, c - 1), p8 = px(r, c - 1), p9 = px(r - 1, c - 1);
                    const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    const int seq[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
                    int a = 0;
                    for (int i = 0; i < 8; ++i) a += (seq[i] == 0 && seq[i + 1] == 1);
                    if (b < 2 || b > 6 || a != 1) continue;
                    if (step == 0 && (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0)) continue;
                    if (step == 1 && (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0)) continue;
                    kill.emplace_back(r, c);
                }
            }
            for (auto [r, c] : kill) img.set(static_cast<std::size_t>(r), static_cast<std::size_t>(c), false);
            changed = changed || !kill.empty();
        }
    }
    return img;
}

// Per component, the first raster pixel of maximal brute-force EDT.
inline std::vector<bool> deepest_pixels(const BinaryMask& m) {
    int count = 0;
    const auto lab = flood_labels(m, count);
    const auto d2 = brute_sq_edt(m);
    std::vector<std::int64_t> best(static_cast<std::size_t>(count) + 1, -1);
    std::vector<std::size_t> where(best.size(), 0);
    for (std::size_t i = 0; i < lab.size(); ++i) {
        if (lab[i] && d2[i] > best[lab[i]]) {
            best[lab[i]] = d2[i];
            where[lab[i]] = i;
        }
    }
    std::vector<bool> keep(m.bits.size(), false);
    for (int l = 1; l <= count; ++l) keep[where[l]] = true;
    return keep;
}

// PNPOLY crossing test on pixel centers after scaling to the raster.
inline bool pnpoly(const std::vector<crackscope::Point2>& poly, double x, double y) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const double xi = poly[i].x, yi = poly[i].y, xj = poly[j].x, yj = poly[j].y;
        if (((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi)) inside = !inside;
    }
    return inside;
}

// AP by enumerating every distinct score as a threshold and integrating the
// interpolated precision p(r) = max{P_t : R_t >= r} over the distinct recall levels.
inline double brute_ap(const std::vector<crackscope::ScoredFlag>& flags, std::int64_t total_gt) {
    std::set<double, std::greater<>> thresholds;
    for (const auto& f : flags) thresholds.insert(f.score);
    std::vector<std::pair<double, double>> pr;  // (recall, precision)
    for (double t : thresholds) {
        std::int64_t tp = 0, n = 0;
        for (const auto& f : flags) {
            if (f.score >= t) {
                ++n;
                tp += f.is_tp;
            }
        }
        pr.emplace_back(static_cast<double>(tp) / static_cast<double>(total_gt),
                        static_cast<double>(tp) / static_cast<double>(n));
    }
    std::set<double> levels;
    for (auto [r, p] : pr) levels.insert(r);
    double ap = 0.0, prev = 0.0;
    for (double r : levels) {
        double best = 0.0;
        for (auto [rj, pj] : pr)
            if (rj >= r) best = std::max(best, pj);
        ap += (r - prev) * best;
        prev = r;
    }
    return ap;
}

// --- synthetic shapes ---

inline BinaryMask bar(std::size_t H, std::size_t W, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) {
    BinaryMask m(H, W);
    for (std::size_t r = r0; r < r0 + h; ++r)
        for (std::size_t c = c0; c < c0 + w; ++c) m.set(r, c);
    return m;
}

inline BinaryMask disk(std::size_t size, double cy, double cx, double radius) {
    BinaryMask m(size, size);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
            if (dy * dy + dx * dx <= radius * radius) m.set(r, c);
        }
    return m;
}

// Band of perpendicular thickness t around the main diagonal, clipped to a margin.
inline BinaryMask diagonal_bar(std::size_t size, double t, std::size_t margin) {
    BinaryMask m(size, size);
    for (std::size_t r = margin; r + margin < size; ++r)
        for (std::size_t c = margin; c + margin < size; ++c) {
            const double d = std::abs(static_cast<double>(r) - static_cast<double>(c)) / std::sqrt(2.0);
            if (d <= 0.5 * t) m.set(r, c);
        }
    return m;
}

// Horizontal wedge opening to the right: half-height grows linearly from tip to base.
inline BinaryMask wedge(std::size_t H, std::size_t W, std::size_t c0, std::size_t c1, double base_half) {
    BinaryMask m(H, W);
    const double mid = 0.5 * static_cast<double>(H - 1);
    for (std::size_t c = c0; c <= c1; ++c) {
        const double half = base_half * static_cast<double>(c - c0) / static_cast<double>(c1 - c0);
        for (std::size_t r = 0; r < H; ++r)
            if (std::abs(static_cast<double>(r) - mid) <= half) m.set(r, c);
    }
    return m;
}

inline BinaryMask l_shape(std::size_t size, std::size_t t, std::size_t arm) {
    BinaryMask m(size, size);
    const std::size_t o = 4;
    for (std::size_t r = o; r < o + arm; ++r)
        for (std::size_t c = o; c < o + t; ++c) m.set(r, c);
    for (std::size_t r = o + arm - t; r < o + arm; ++r)
        for (std::size_t c = o; c < o + arm; ++c) m.set(r, c);
    return m;
}

inline BinaryMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double p) {
    BinaryMask m(h, w);
    std::bernoulli_distribution on(p);
    for (auto& b : m.bits) b = on(rng) ? 1 : 0;
    return m;
}

}  // namespace oracle
