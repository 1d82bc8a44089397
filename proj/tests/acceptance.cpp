// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "cli_runner.hpp"
#include "crackscope/attention.hpp"
#include "crackscope/dataset.hpp"
#include "crackscope/error.hpp"
#include "crackscope/geometry.hpp"
#include "crackscope/gradient_suite.hpp"
#include "crackscope/mask.hpp"
#include "crackscope/metrics.hpp"
#include "crackscope/ops.hpp"
#include "oracles.hpp"

using namespace crackscope;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Shape random_shape(std::mt19937_64& rng, std::size_t cmin = 1) {
    std::uniform_int_distribution<std::size_t> n(1, 3), c(cmin, 12), hw(1, 12);
    return {n(rng), c(rng), hw(rng), hw(rng)};
}

Tensor shuffle_spatial(const Tensor& x, std::mt19937_64& rng) {
    std::vector<std::size_t> perm(x.shape().plane());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor y(x.shape());
    for (std::size_t n = 0; n < x.n(); ++n)
        for (std::size_t c = 0; c < x.c(); ++c)
            for (std::size_t i = 0; i < perm.size(); ++i) y.plane(n, c)[i] = x.plane(n, c)[perm[i]];
    return y;
}

Tensor shuffle_channels(const Tensor& x, std::mt19937_64& rng) {
    std::vector<std::size_t> perm(x.c());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor y(x.shape());
    for (std::size_t n = 0; n < x.n(); ++n)
        for (std::size_t c = 0; c < x.c(); ++c) std::ranges::copy(x.plane(n, perm[c]), y.plane(n, c).begin());
    return y;
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    const auto entries = run_gradient_suite({42, 100, 1e-5, 1e-4});
    const double secs = seconds_since(t0);
    Outcome o;
    double worst = 0.0;
    std::size_t min_cases = SIZE_MAX;
    for (const auto& e : entries) {
        worst = std::max(worst, e.worst_error);
        min_cases = std::min(min_cases, e.cases);
        if (!e.pass()) {
            o.pass = false;
            o.detail += e.name + " failed; ";
        }
    }
    o.pass = o.pass && entries.size() == gradient_suite_members().size() && min_cases >= 100 && secs < 60.0;
    o.detail += fmt("%zu ops/blocks x %zu cases, worst rel err %.2e, %.2f s", entries.size(), min_cases, worst, secs);
    return o;
}

Outcome attention_identities() {
    std::mt19937_64 rng(1001);
    double worst_half = 0.0, worst_quarter = 0.0;
    for (int k = 0; k < 50; ++k) {
        std::uniform_int_distribution<std::size_t> red(1, 4);
        const auto x = Tensor::uniform(random_shape(rng), rng, -10.0, 10.0);
        std::size_t r = red(rng);
        while (x.c() % r) --r;
        worst_half = std::max({worst_half, max_abs_diff(eca_forward(x, EcaParams::zeros(x.c())), 0.5 * x),
                               max_abs_diff(cam_forward(x, CamParams::zeros(x.c(), r)), 0.5 * x),
                               max_abs_diff(sam_forward(x, SamParams::zeros()), 0.5 * x)});
        worst_quarter = std::max(
            worst_quarter, max_abs_diff(cbam_forward(x, CamParams::zeros(x.c(), r), SamParams::zeros()), 0.25 * x));
    }
    return {worst_half <= 1e-12 && worst_quarter <= 1e-12,
            fmt("50 tensors: ECA/CAM/SAM max err %.1e, CBAM max err %.1e", worst_half, worst_quarter)};
}

Outcome permutation_invariance() {
    std::mt19937_64 rng(1002);
    double eca = 0.0, cam = 0.0, sam = 0.0;
    for (int k = 0; k < 50; ++k) {
        const auto x = Tensor::uniform(random_shape(rng, 2), rng);
        const auto seed = static_cast<std::uint64_t>(k);
        const auto ep = EcaParams::random(x.c(), seed);
        std::size_t r = 2;
        while (x.c() % r) --r;
        const auto cp = CamParams::random(x.c(), r, seed);
        const auto sp = SamParams::random(seed);
        const auto xs = shuffle_spatial(x, rng);
        eca = std::max(eca, max_abs_diff(eca_weights(x, ep), eca_weights(xs, ep)));
        cam = std::max(cam, max_abs_diff(cam_weights(x, cp), cam_weights(xs, cp)));
        sam = std::max(sam, max_abs_diff(sam_map(x, sp), sam_map(shuffle_channels(x, rng), sp)));
    }
    return {eca <= 1e-12 && cam <= 1e-12 && sam <= 1e-12,
            fmt("50 cases each: ECA %.1e, CAM %.1e (spatial), SAM %.1e (channel)", eca, cam, sam)};
}

Outcome sppf_equivalence() {
    std::mt19937_64 rng(1003);
    std::size_t mismatches = 0;
    for (int k = 0; k < 50; ++k) {
        std::uniform_int_distribution<std::size_t> c(1, 4), hw(1, 20);
        const std::size_t ch = c(rng);
        const auto x = Tensor::uniform({1, ch, hw(rng), hw(rng)}, rng);
        SppfParams p = SppfParams::random(ch, ch, 2, static_cast<std::uint64_t>(k));
        p.reduce = Tensor({ch, ch, 1, 1});
        for (std::size_t i = 0; i < ch; ++i) p.reduce.at(i, i, 0, 0) = 1.0;
        p.reduce_bias.assign(ch, 0.0);
        const auto t = sppf_trace(x, p);
        mismatches += t.y0.values() != x.values();
        mismatches += t.y2.values() != maxpool2d(x, 9, 1, 4).values();
        mismatches += t.y3.values() != maxpool2d(x, 13, 1, 6).values();
    }
    return {mismatches == 0, fmt("50 tensors: %zu inexact matches of pool5^2 = pool9, pool5^3 = pool13", mismatches)};
}

Outcome ciou_properties() {
    std::mt19937_64 rng(1004);
    std::uniform_real_distribution<double> pos(-50, 50), size(0.05, 20), shift(-1000, 1000), scale(0.001, 100);
    double self = 0.0, sym = 0.0, trans = 0.0, scl = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const BBox a{pos(rng), pos(rng), size(rng), size(rng)};
        BBox b{pos(rng), pos(rng), size(rng), size(rng)};
        if (k % 2) b = {a.cx + 0.3 * b.cx / 50 * a.w, a.cy, a.w * (0.5 + b.w / 20), a.h};
        const double l = ciou_loss(a, b);
        self = std::max(self, std::abs(ciou_loss(a, a)));
        sym = std::max(sym, std::abs(l - ciou_loss(b, a)));
        const double dx = shift(rng), dy = shift(rng), s = scale(rng);
        trans = std::max(trans, std::abs(l - ciou_loss({a.cx + dx, a.cy + dy, a.w, a.h}, {b.cx + dx, b.cy + dy, b.w, b.h})));
        scl = std::max(scl, std::abs(l - ciou_loss({a.cx * s, a.cy * s, a.w * s, a.h * s},
                                                  {b.cx * s, b.cy * s, b.w * s, b.h * s})));
    }
    const double hand = ciou_loss({0, 0, 2, 2}, {2, 0, 2, 2});
    const bool ok = self <= 1e-12 && sym <= 1e-9 && trans <= 1e-9 && scl <= 1e-9 && std::abs(hand - 1.2) <= 1e-9;
    return {ok, fmt("self %.1e, symmetry %.1e, translation %.1e, scale %.1e over 1e4 pairs; hand case %.12f", self, sym,
                    trans, scl, hand)};
}

Outcome edt_exactness() {
    std::mt19937_64 rng(1005);
    std::uniform_real_distribution<double> density(0.3, 0.97);
    std::size_t wrong = 0;
    double lib_secs = 0.0;
    const auto t0 = Clock::now();
    for (int k = 0; k < 100; ++k) {
        const auto m = oracle::random_mask(rng, 64, 64, density(rng));
        const auto t1 = Clock::now();
        const auto d = distance_transform(m);
        lib_secs += seconds_since(t1);
        const auto ref = oracle::brute_sq_edt(m);
        for (std::size_t i = 0; i < ref.size(); ++i) wrong += d.values[i] != std::sqrt(static_cast<double>(ref[i]));
    }
    const double total = seconds_since(t0);
    return {wrong == 0 && total < 10.0,
            fmt("100 masks 64x64: %zu mismatched pixels; EDT %.3f s, with oracle %.2f s", wrong, lib_secs, total)};
}

Outcome width_metrology() {
    struct Shape2 {
        std::string name;
        BinaryMask mask;
        double tol;
    };
    std::vector<Shape2> shapes;
    for (std::size_t t : {3, 5, 7, 8, 11}) shapes.push_back({fmt("hbar%zu", t), oracle::bar(t + 12, 90, 6, 5, t, 80), 1.0});
    for (std::size_t t : {4, 7, 10}) shapes.push_back({fmt("vbar%zu", t), oracle::bar(90, t + 12, 5, 6, 80, t), 1.0});
    for (double t : {3.0, 5.0, 7.0, 9.0}) shapes.push_back({fmt("dbar%.0f", t), oracle::diagonal_bar(80, t, 6), 1.5});
    for (double r : {4.0, 9.0, 15.0, 20.0}) shapes.push_back({fmt("disk%.0f", r), oracle::disk(2 * static_cast<std::size_t>(r) + 9, r + 4, r + 4, r), 1.0});
    for (double h : {6.0, 10.0, 14.0}) shapes.push_back({fmt("wedge%.0f", h), oracle::wedge(static_cast<std::size_t>(2 * h) + 9, 100, 5, 94, h), 1.0});
    for (std::size_t t : {3, 6, 9}) shapes.push_back({fmt("L%zu", t), oracle::l_shape(70, t, 60), 1.0});

    std::size_t bad = 0;
    double worst = 0.0;
    std::string which;
    for (const auto& s : shapes) {
        const auto skel = skeletonize(s.mask);
        const auto a = analyze_mask(s.mask);
        const double ref = oracle::max_inscribed_width(s.mask);
        if (a.reports.size() != 1) {
            ++bad;
            which += s.name + " ";
            continue;
        }
        const auto& r = a.reports[0];
        const double err = std::abs(r.max_width_px - ref);
        worst = std::max(worst, err);
        auto on_skel = [&](Pixel p) {
            return skel.at(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col));
        };
        if (err > s.tol || r.min_width_px > r.max_width_px || !on_skel(r.max_width_location) ||
            !on_skel(r.min_width_location)) {
            ++bad;
            which += s.name + " ";
        }
    }
    return {bad == 0 && shapes.size() >= 20,
            fmt("%zu shapes, %zu out of tolerance %s(worst |max - oracle| = %.2f px)", shapes.size(), bad,
                which.c_str(), worst)};
}

Outcome metrics_equivalence() {
    std::mt19937_64 rng(1008);
    std::uniform_int_distribution<std::int64_t> cnt(0, 50);
    std::size_t wrong = 0;
    for (int k = 0; k < 10000; ++k) {
        const ConfusionCounts c{cnt(rng) * (k % 7 != 0), cnt(rng) * (k % 5 != 0), cnt(rng) * (k % 3 != 0), cnt(rng)};
        auto expect = [&](std::int64_t num, std::int64_t den, auto fn) {
            try {
                const double v = fn(c);
                wrong += den == 0 || v != static_cast<double>(num) / static_cast<double>(den);
            } catch (const Error& e) {
                wrong += den != 0 || e.kind() != ErrorKind::UndefinedMetric;
            }
        };
        expect(c.tp, c.tp + c.fn, [](const ConfusionCounts& x) { return recall(x); });
        expect(c.tp, c.tp + c.fp, [](const ConfusionCounts& x) { return precision(x); });
        expect(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn, [](const ConfusionCounts& x) { return accuracy(x); });
    }

    std::uniform_int_distribution<int> n(1, 15), lvl(0, 9);
    std::bernoulli_distribution hit(0.55);
    double ap_err = 0.0;
    for (int k = 0; k < 100; ++k) {
        std::vector<ScoredFlag> f(static_cast<std::size_t>(n(rng)));
        std::int64_t tps = 0;
        for (auto& x : f) {
            x = {lvl(rng) / 9.0, hit(rng)};
            tps += x.is_tp;
        }
        const std::int64_t gt = std::max<std::int64_t>(1, tps + lvl(rng) % 4);
        ap_err = std::max(ap_err, std::abs(average_precision(pr_curve(f, gt)) - oracle::brute_ap(f, gt)));
    }
    const std::vector<ScoredFlag> worked{{0.9, true}, {0.8, false}, {0.7, true}};
    const double ap = average_precision(pr_curve(worked, 2));
    const bool ok = wrong == 0 && ap_err <= 1e-9 && std::abs(ap - 5.0 / 6.0) <= 1e-12;
    return {ok, fmt("1e4 count sets: %zu formula mismatches; AP vs enumeration max err %.1e; worked example AP %.10f",
                    wrong, ap_err, ap)};
}

Outcome split_reproduction() {
    std::vector<int> items(4029);
    std::iota(items.begin(), items.end(), 0);
    const SplitSpec spec{3717, 200, 112, 42};
    const auto a = split_dataset(items, spec), b = split_dataset(items, spec);
    const bool sizes = a.train.size() == 3717 && a.val.size() == 200 && a.test.size() == 112;
    const bool same = a.train == b.train && a.val == b.val && a.test == b.test;
    // Frozen from an independent SplitMix64 + Fisher-Yates script (FNV-1a over little-endian u32 ids).
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* part : {&a.train, &a.val, &a.test})
        for (int v : *part)
            for (int byte = 0; byte < 4; ++byte) {
                h ^= static_cast<std::uint8_t>(static_cast<std::uint32_t>(v) >> (8 * byte));
                h *= 0x100000001b3ULL;
            }
    const bool pinned = h == 0x8b5ec0bf20bf3cb4ULL && a.train[0] == 412 && a.val[0] == 1197 && a.test[0] == 1650;
    return {sizes && same && pinned,
            fmt("sizes %zu/%zu/%zu, repeat-identical %s, digest %016llx %s", a.train.size(), a.val.size(),
                a.test.size(), same ? "yes" : "no", static_cast<unsigned long long>(h),
                pinned ? "matches reference" : "DIFFERS from reference")};
}

Outcome end_to_end_cli() {
    const fs::path dir = fs::temp_directory_path() / "crackscope_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir / "gt");

    // A 7 px crack on a mottled background that stays below the threshold.
    GrayImage img(48, 120);
    std::mt19937_64 rng(1010);
    std::uniform_int_distribution<int> dark(0, 90), bright(170, 255);
    for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c)
            img.at(r, c) = static_cast<std::uint8_t>(r >= 20 && r < 27 && c >= 8 && c < 112 ? bright(rng) : dark(rng));
    const auto enc = write_pgm(img);
    cli::spit(dir / "crack.pgm", std::string(enc.begin(), enc.end()));
    const auto an = cli::run("analyze --mask " + cli::q(dir / "crack.pgm") + " --out " + cli::q(dir / "report.json"));
    double width = -1.0;
    if (an.code == 0) width = nlohmann::json::parse(cli::slurp(dir / "report.json"))["components"][0]["max_width_px"];
    const bool analyze_ok = an.code == 0 && std::abs(width - 7.0) <= 1.0;

    // Two images, three GT cracks; predictions give 2 hits and 1 miss by hand count.
    cli::spit(dir / "gt" / "road1.txt", "0 0.10 0.10 0.30 0.10 0.30 0.50 0.10 0.50\n0 0.60 0.20 0.90 0.20 0.90 0.40 0.60 0.40\n");
    cli::spit(dir / "gt" / "road2.txt", "0 0.20 0.60 0.80 0.60 0.80 0.70 0.20 0.70\n");
    cli::spit(dir / "pred.jsonl",
              R"({"image":"road1","class":0,"score":0.95,"polygon":[[0.11,0.10],[0.30,0.10],[0.30,0.49],[0.11,0.49]]})" "\n"
              R"({"image":"road1","class":0,"score":0.40,"polygon":[[0.40,0.80],[0.50,0.80],[0.50,0.90]]})" "\n"
              R"({"image":"road2","class":0,"score":0.85,"polygon":[[0.20,0.61],[0.79,0.61],[0.79,0.70],[0.20,0.70]]})" "\n");
    const auto ev = cli::run("eval --gt " + cli::q(dir / "gt") + " --pred " + cli::q(dir / "pred.jsonl") + " --out " +
                             cli::q(dir / "metrics.json") + " --pr-out " + cli::q(dir / "pr.csv"));
    bool eval_ok = false;
    std::string counts = "n/a";
    if (ev.code == 0) {
        const auto j = nlohmann::json::parse(cli::slurp(dir / "metrics.json"));
        counts = fmt("tp %d fp %d fn %d", j["tp"].get<int>(), j["fp"].get<int>(), j["fn"].get<int>());
        eval_ok = j["tp"] == 2 && j["fp"] == 1 && j["fn"] == 1 &&
                  std::abs(j["precision"].get<double>() - 2.0 / 3.0) <= 1e-12 &&
                  std::abs(j["recall"].get<double>() - 2.0 / 3.0) <= 1e-12;
    }
    const auto gc = cli::run("gradcheck --seed 42 --tol 1e-4");
    fs::remove_all(dir);
    return {analyze_ok && eval_ok && gc.code == 0,
            fmt("analyze exit %d max_width_px %.1f; eval exit %d %s; gradcheck exit %d", an.code, width, ev.code,
                counts.c_str(), gc.code)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"attention identities", attention_identities},
        {"permutation invariances", permutation_invariance},
        {"SPPF pool equivalence", sppf_equivalence},
        {"CIoU properties", ciou_properties},
        {"EDT exactness", edt_exactness},
        {"width metrology", width_metrology},
        {"metrics equivalence", metrics_equivalence},
        {"split reproduction", split_reproduction},
        {"end-to-end CLI", end_to_end_cli},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("[%s] %2zu %-24s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
