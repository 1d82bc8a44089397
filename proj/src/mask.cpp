#include "crackscope/mask.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "crackscope/error.hpp"
#include "crackscope/parallel.hpp"

namespace crackscope {

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

void ScaleConfig::validate() const {
    if (mm_per_px && !(*mm_per_px > 0.0 && std::isfinite(*mm_per_px))) {
        fail(ErrorKind::OutOfRange, "scale: mm_per_px must be a positive finite number");
    }
}

BinaryMask threshold_mask(const GrayImage& gray, int thresh) {
    if (gray.height == 0 || gray.width == 0 || gray.pixels.size() != gray.height * gray.width) {
        fail(ErrorKind::InvalidImage, "threshold_mask: empty or inconsistent image");
    }
    if (thresh < 0 || thresh > 255) fail(ErrorKind::OutOfRange, "threshold_mask: threshold must be in 0..255");
    BinaryMask m(gray.height, gray.width);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) m.bits[i] = gray.pixels[i] >= thresh ? 1 : 0;
    return m;
}

namespace {

constexpr std::array<std::pair<int, int>, 8> kNeighbors{
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

bool inside(const BinaryMask& m, int r, int c) {
    return r >= 0 && c >= 0 && r < static_cast<int>(m.height) && c < static_cast<int>(m.width);
}

bool fg(const BinaryMask& m, int r, int c) {
    return inside(m, r, c) && m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

}  // namespace

std::vector<CrackComponent> connected_components(const BinaryMask& m) {
    std::vector<int> label(m.bits.size(), 0);
    std::vector<CrackComponent> comps;
    std::vector<Pixel> stack;
    for (std::size_t start = 0; start < m.bits.size(); ++start) {
        if (!m.bits[start] || label[start]) continue;
        CrackComponent comp;
        const int tag = static_cast<int>(comps.size()) + 1;
        label[start] = tag;
        stack.push_back({static_cast<int>(start / m.width), static_cast<int>(start % m.width)});
        while (!stack.empty()) {
            const Pixel p = stack.back();
            stack.pop_back();
            comp.pixels.push_back(p);
            for (auto [dr, dc] : kNeighbors) {
                const int r = p.row + dr, c = p.col + dc;
                if (!fg(m, r, c)) continue;
                auto& l = label[static_cast<std::size_t>(r) * m.width + static_cast<std::size_t>(c)];
                if (l) continue;
                l = tag;
                stack.push_back({r, c});
            }
        }
        std::ranges::sort(comp.pixels);
        int r0 = comp.pixels.front().row, r1 = r0, c0 = comp.pixels.front().col, c1 = c0;
        for (const auto& p : comp.pixels) {
            r1 = std::max(r1, p.row);
            c0 = std::min(c0, p.col);
            c1 = std::max(c1, p.col);
        }
        comp.box = BBox{0.5 * (c0 + c1 + 1), 0.5 * (r0 + r1 + 1), static_cast<double>(c1 - c0 + 1),
                        static_cast<double>(r1 - r0 + 1)};
        comps.push_back(std::move(comp));
    }
    // Discovery order is raster order of each component's first pixel, so a
    // stable sort by area keeps the tie-break.
    std::ranges::stable_sort(comps, [](const auto& a, const auto& b) { return a.pixels.size() > b.pixels.size(); });
    for (std::size_t i = 0; i < comps.size(); ++i) comps[i].id = static_cast<int>(i) + 1;
    return comps;
}

// Meijster, Roerdink & Hesselink separable exact EDT on squared integer distances.
DistanceField distance_transform(const BinaryMask& m, const EdtOptions& options) {
    DistanceField out{m.height, m.width, std::vector<double>(m.bits.size(), 0.0)};
    if (m.bits.empty()) return out;

    const std::size_t pad = options.border_is_background ? 1 : 0;
    const std::size_t rows = m.height + 2 * pad;
    const std::size_t cols = m.width + 2 * pad;
    auto is_fg = [&](std::size_t r, std::size_t c) {
        if (r < pad || c < pad || r >= m.height + pad || c >= m.width + pad) return false;
        return m.at(r - pad, c - pad);
    };

    if (!options.border_is_background && m.count() == m.bits.size()) {
        std::ranges::fill(out.values, std::numeric_limits<double>::infinity());
        return out;
    }

    using i64 = std::int64_t;
    const i64 inf = static_cast<i64>(rows + cols);
    std::vector<i64> g(rows * cols);
    for (std::size_t c = 0; c < cols; ++c) {
        g[c] = is_fg(0, c) ? inf : 0;
        for (std::size_t r = 1; r < rows; ++r) {
            g[r * cols + c] = is_fg(r, c) ? std::min(inf, 1 + g[(r - 1) * cols + c]) : 0;
        }
        for (std::size_t r = rows - 1; r-- > 0;) {
            if (g[(r + 1) * cols + c] < g[r * cols + c]) g[r * cols + c] = 1 + g[(r + 1) * cols + c];
        }
    }

    std::vector<i64> s(cols), t(cols), d2(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const i64* gr = &g[r * cols];
        auto f = [&](i64 x, i64 i) { return (x - i) * (x - i) + gr[i] * gr[i]; };
        auto sep = [&](i64 i, i64 u) { return (u * u - i * i + gr[u] * gr[u] - gr[i] * gr[i]) / (2 * (u - i)); };
        i64 q = 0;
        s[0] = 0;
        t[0] = 0;
        const auto n = static_cast<i64>(cols);
        for (i64 u = 1; u < n; ++u) {
            while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
            if (q < 0) {
                q = 0;
                s[0] = u;
            } else {
                const i64 w = 1 + sep(s[q], u);
                if (w < n) {
                    ++q;
                    s[q] = u;
                    t[q] = w;
                }
            }
        }
        for (i64 u = n - 1; u >= 0; --u) {
            d2[u] = f(u, s[q]);
            if (u == t[q]) --q;
        }
        if (r < pad || r >= m.height + pad) continue;
        for (std::size_t c = pad; c < m.width + pad; ++c) {
            out.values[(r - pad) * m.width + (c - pad)] = std::sqrt(static_cast<double>(d2[c]));
        }
    }
    return out;
}

namespace {

// Neighbors P2..P9 clockwise starting north.
std::array<int, 8> ring(const BinaryMask& m, int r, int c) {
    return {fg(m, r - 1, c),     fg(m, r - 1, c + 1), fg(m, r, c + 1), fg(m, r + 1, c + 1),
            fg(m, r + 1, c),     fg(m, r + 1, c - 1), fg(m, r, c - 1), fg(m, r - 1, c - 1)};
}

bool thinning_candidate(const std::array<int, 8>& p, bool first_pass) {
    int b = 0, a = 0;
    for (int i = 0; i < 8; ++i) {
        b += p[i];
        a += (p[i] == 0 && p[(i + 1) % 8] == 1);
    }
    if (b < 2 || b > 6 || a != 1) return false;
    const int p2 = p[0], p4 = p[2], p6 = p[4], p8 = p[6];
    if (first_pass) return p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0;
    return p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0;
}

}  // namespace

BinaryMask skeletonize(const BinaryMask& m) {
    // The deepest pixel of each component is the center of its largest inscribed
    // disk and lies on the medial axis; pinning it keeps corner maxima that plain
    // thinning would cut, and keeps small blobs from vanishing.
    std::vector<std::uint8_t> pinned(m.bits.size(), 0);
    if (m.count() > 0) {
        const auto edt = distance_transform(m);
        for (const auto& comp : connected_components(m)) {
            Pixel best = comp.pixels.front();
            for (const auto& p : comp.pixels) {
                if (edt.at(p) > edt.at(best)) best = p;
            }
            pinned[static_cast<std::size_t>(best.row) * m.width + static_cast<std::size_t>(best.col)] = 1;
        }
    }

    BinaryMask skel = m;
    std::vector<std::size_t> doomed;
    bool changed = true;
    while (changed) {
        changed = false;
        for (bool first_pass : {true, false}) {
            doomed.clear();
            for (std::size_t r = 0; r < skel.height; ++r) {
                for (std::size_t c = 0; c < skel.width; ++c) {
                    if (!skel.at(r, c) || pinned[r * skel.width + c]) continue;
                    if (thinning_candidate(ring(skel, static_cast<int>(r), static_cast<int>(c)), first_pass)) {
                        doomed.push_back(r * skel.width + c);
                    }
                }
            }
            for (auto i : doomed) skel.bits[i] = 0;
            changed = changed || !doomed.empty();
        }
    }
    return skel;
}

std::vector<WidthSample> width_profile(const CrackComponent& c, const DistanceField& edt, const BinaryMask& skeleton) {
    std::vector<WidthSample> profile;
    for (const auto& p : c.pixels) {
        if (!skeleton.at(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col))) continue;
        profile.push_back({p, 2.0 * edt.at(p) - 1.0});
    }
    if (profile.empty()) {
        fail(ErrorKind::DegenerateComponent, "component " + std::to_string(c.id) + " has no skeleton pixels");
    }
    return profile;
}

WidthReport analyze_component(const CrackComponent& c, const DistanceField& edt, const BinaryMask& skeleton,
                              const ScaleConfig& scale) {
    scale.validate();
    if (c.pixels.empty()) fail(ErrorKind::DegenerateComponent, "analyze_component: empty component");
    const auto profile = width_profile(c, edt, skeleton);

    auto degree = [&](const Pixel& p) {
        int d = 0;
        for (auto [dr, dc] : kNeighbors) d += fg(skeleton, p.row + dr, p.col + dc);
        return d;
    };

    // profile is in raster order, so strict comparisons give the lexicographic tie-break.
    const WidthSample* widest = &profile.front();
    for (const auto& s : profile) {
        if (s.width > widest->width) widest = &s;
    }
    const bool has_interior = std::ranges::any_of(profile, [&](const auto& s) { return degree(s.pixel) >= 2; });
    const WidthSample* narrowest = nullptr;
    for (const auto& s : profile) {
        if (has_interior && degree(s.pixel) < 2) continue;
        if (narrowest == nullptr || s.width < narrowest->width) narrowest = &s;
    }

    WidthReport r;
    r.component_id = c.id;
    r.area_px = c.pixels.size();
    r.max_width_px = widest->width;
    r.max_width_location = widest->pixel;
    r.min_width_px = narrowest->width;
    r.min_width_location = narrowest->pixel;
    r.skeleton_length_px = profile.size();
    if (scale.mm_per_px) {
        r.max_width_mm = r.max_width_px * *scale.mm_per_px;
        r.min_width_mm = r.min_width_px * *scale.mm_per_px;
    }
    return r;
}

MaskAnalysis analyze_mask(const BinaryMask& m, const ScaleConfig& scale, const EdtOptions& edt_options,
                          unsigned threads) {
    scale.validate();
    MaskAnalysis out{m.height, m.width, {}};
    const auto comps = connected_components(m);
    const auto edt = distance_transform(m, edt_options);
    const auto skel = skeletonize(m);
    out.reports.resize(comps.size());
    parallel_for(comps.size(), threads,
                 [&](std::size_t i) { out.reports[i] = analyze_component(comps[i], edt, skel, scale); });
    return out;
}

}  // namespace crackscope
