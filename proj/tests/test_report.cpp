#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "crackscope/error.hpp"
#include "crackscope/parallel.hpp"
#include "crackscope/report.hpp"
#include "oracles.hpp"

using namespace crackscope;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

DetectionRecord pred(std::string image, double score, std::vector<Point2> poly) {
    DetectionRecord d;
    d.image = std::move(image);
    d.score = score;
    d.polygon = std::move(poly);
    return d;
}

const std::vector<Point2> kSquareA{{0.1, 0.1}, {0.4, 0.1}, {0.4, 0.4}, {0.1, 0.4}};
const std::vector<Point2> kSquareB{{0.6, 0.6}, {0.9, 0.6}, {0.9, 0.9}, {0.6, 0.9}};

}  // namespace

TEST_CASE("evaluate in both modes") {
    TempDir dir("crackscope_report_test");
    std::ofstream(dir.path / "x.txt") << "0 0.1 0.1 0.4 0.1 0.4 0.4 0.1 0.4\n0 0.6 0.6 0.9 0.6 0.9 0.9 0.6 0.9\n";
    std::ofstream(dir.path / "y.txt") << "0 0.1 0.1 0.4 0.1 0.4 0.4 0.1 0.4\n";
    const auto index = load_dataset_index(dir.path, 100, 100);

    const std::vector<DetectionRecord> preds{pred("x", 0.9, kSquareA), pred("y", 0.8, kSquareB),
                                             pred("y", 0.7, kSquareA)};
    const auto s = evaluate(index, preds, {});
    CHECK(s.counts.tp == 2);
    CHECK(s.counts.fp == 1);
    CHECK(s.counts.fn == 1);
    CHECK(s.precision == doctest::Approx(2.0 / 3.0));
    CHECK(s.recall == doctest::Approx(2.0 / 3.0));
    CHECK_FALSE(s.accuracy.has_value());
    CHECK_FALSE(s.tn.has_value());
    REQUIRE(s.curve.size() == 3);
    // Pipeline consistency: last curve point equals the matched totals.
    CHECK(s.curve.back().recall == *s.recall);
    CHECK(s.curve.back().precision == *s.precision);
    CHECK(*s.ap == doctest::Approx(1.0 / 3.0 + (1.0 / 3.0) * (2.0 / 3.0)));

    EvalOptions px;
    px.mode = EvalMode::Pixel;
    const auto p = evaluate(index, preds, px);
    CHECK(p.counts.tp == 900 + 900);
    CHECK(p.counts.fn == 900);
    CHECK(p.counts.fp == 900);
    CHECK(p.counts.tn == 20000 - 3600);
    CHECK(*p.tn == p.counts.tn);
    CHECK(p.accuracy.has_value());
    CHECK_FALSE(p.ap.has_value());

    EvalOptions threaded;
    threaded.threads = 3;
    CHECK(evaluate(index, preds, threaded).counts == s.counts);

    const std::vector<DetectionRecord> bad{pred("x", 0.5, kSquareA), pred("zz", 0.5, kSquareA), pred("q", 0.1, kSquareA)};
    try {
        evaluate(index, bad, {});
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidPrediction);
        CHECK(std::string(e.what()).find("q, zz") != std::string::npos);
    }
}

TEST_CASE("metrics json layout") {
    EvalSummary s;
    s.counts = {3, 1, 2, 0};
    s.precision = 0.75;
    s.recall = 0.6;
    s.ap = 0.5;
    CHECK(metrics_json(s) ==
          "{\n  \"mode\": \"instance\",\n  \"iou_threshold\": 0.5,\n  \"tp\": 3,\n  \"fp\": 1,\n  \"fn\": 2,\n"
          "  \"tn\": null,\n  \"precision\": 0.75,\n  \"recall\": 0.6,\n  \"accuracy\": null,\n  \"ap\": 0.5\n}\n");
}

TEST_CASE("pr csv layout") {
    const std::vector<PRPoint> c{{0.9, 1.0, 0.5, true}, {0.25, 2.0 / 3.0, 1.0, true}};
    CHECK(pr_curve_csv(c) == "threshold,precision,recall\n0.900000,1.000000,0.500000\n0.250000,0.666667,1.000000\n");
    CHECK(pr_curve_csv(std::vector<PRPoint>{{1.0, 0.0, 0.0, false}}) == "threshold,precision,recall\n1.000000,nan,0.000000\n");
}

TEST_CASE("width report json") {
    const auto a = analyze_mask(oracle::bar(15, 40, 5, 3, 5, 30), ScaleConfig{0.1});
    const auto text = width_report_json(a, "bar.pgm");
    CHECK(text.starts_with("{\n  \"mask\": \"bar.pgm\",\n  \"height\": 15,\n  \"width\": 40,\n  \"components\": [\n"));
    CHECK(text.find("\"max_width_px\": 5.0") != std::string::npos);
    CHECK(text.find("\"max_width_mm\": 0.5") != std::string::npos);
    CHECK(text.back() == '\n');
    CHECK(text.find("max_width_mm") > text.find("skeleton_length_px"));
    CHECK(width_report_json(analyze_mask(oracle::bar(15, 40, 5, 3, 5, 30)), "m").find("_mm") == std::string::npos);
}

TEST_CASE("atomic writes") {
    TempDir dir("crackscope_atomic_test");
    const auto f = dir.path / "out.json";
    write_file_atomic(f, "first");
    write_file_atomic(f, "second\n");
    std::ifstream in(f);
    std::string s((std::istreambuf_iterator<char>(in)), {});
    CHECK(s == "second\n");
    CHECK_FALSE(fs::exists(dir.path / "out.json.tmp"));
    CHECK_THROWS_AS(write_file_atomic(dir.path / "missing" / "x", "y"), Error);
}

TEST_CASE("parallel_for visits every index once and propagates errors") {
    for (unsigned threads : {1u, 2u, 8u}) {
        std::vector<int> hits(1000, 0);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
        CHECK(std::ranges::all_of(hits, [](int h) { return h == 1; }));
    }
    CHECK_THROWS_AS(parallel_for(50, 4,
                                 [](std::size_t i) {
                                     if (i == 17) fail(ErrorKind::InvalidParams, "boom");
                                 }),
                    Error);
}
