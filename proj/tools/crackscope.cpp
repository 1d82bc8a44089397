#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crackscope/attention.hpp"
#include "crackscope/dataset.hpp"
#include "crackscope/gradient_suite.hpp"
#include "crackscope/mask.hpp"
#include "crackscope/parallel.hpp"
#include "crackscope/report.hpp"

namespace fs = std::filesystem;
using namespace crackscope;

namespace {

struct AnalyzeArgs {
    std::string mask, out;
    std::optional<double> scale;
    int thresh = 128;
};

struct EvalArgs {
    std::string gt, pred, pr_out, out;
    double iou = 0.5;
    std::string mode = "instance";
    std::string match = "box";
};

struct SplitArgs {
    std::string list, out = ".";
    std::size_t train = 0, val = 0, test = 0;
    std::uint64_t seed = 0;
};

struct GradArgs {
    std::uint64_t seed = 42;
    double eps = 1e-5, tol = 1e-4;
    std::size_t cases = 100;
};

struct DemoArgs {
    std::string block = "cbam";
    std::uint64_t seed = 0;
    std::size_t channels = 8, height = 8, width = 8;
    std::string params_out;
};

int run_analyze(const AnalyzeArgs& a) {
    const auto gray = read_pgm_file(a.mask);
    ScaleConfig scale{a.scale};
    scale.validate();
    const auto analysis = analyze_mask(threshold_mask(gray, a.thresh), scale, {}, threads_from_env());
    write_file_atomic(a.out, width_report_json(analysis, fs::path(a.mask).filename().string()));
    std::printf("%zu component(s) -> %s\n", analysis.reports.size(), a.out.c_str());
    return 0;
}

int run_eval(const EvalArgs& a) {
    EvalOptions o;
    o.mode = a.mode == "pixel" ? EvalMode::Pixel : EvalMode::Instance;
    o.match = a.match == "mask" ? MatchMode::Mask : MatchMode::Box;
    o.iou_threshold = a.iou;
    o.threads = threads_from_env();
    const auto index = load_dataset_index(a.gt);
    const auto preds = read_predictions(read_text_file(a.pred));
    const auto summary = evaluate(index, preds, o);
    const auto json = metrics_json(summary);
    if (a.out.empty()) std::fputs(json.c_str(), stdout);
    else write_file_atomic(a.out, json);
    if (!a.pr_out.empty()) write_file_atomic(a.pr_out, pr_curve_csv(summary.curve));
    return 0;
}

int run_split(const SplitArgs& a) {
    std::vector<std::string> items;
    std::istringstream in(read_text_file(a.list));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) items.push_back(line);
    }
    const auto parts = split_dataset(std::move(items), SplitSpec{a.train, a.val, a.test, a.seed});
    fs::create_directories(a.out);
    auto emit = [&](const char* name, const std::vector<std::string>& v) {
        std::string text;
        for (const auto& s : v) text += s + '\n';
        write_file_atomic(fs::path(a.out) / name, text);
    };
    emit("train.txt", parts.train);
    emit("val.txt", parts.val);
    emit("test.txt", parts.test);
    std::printf("train %zu  val %zu  test %zu\n", parts.train.size(), parts.val.size(), parts.test.size());
    return 0;
}

int run_gradcheck(const GradArgs& a) {
    const auto entries = run_gradient_suite({a.seed, a.cases, a.eps, a.tol});
    bool ok = true;
    for (const auto& e : entries) {
        std::printf("%-16s %4zu/%-4zu worst %.3e  %s\n", e.name.c_str(), e.passed, e.cases, e.worst_error,
                    e.pass() ? "ok" : "FAIL");
        ok = ok && e.pass();
    }
    if (!ok) {
        std::fprintf(stderr, "error: gradient check failed\n");
        return 1;
    }
    return 0;
}

void print_stats(const char* label, const Tensor& t) {
    const auto v = t.values();
    const auto [lo, hi] = std::ranges::minmax(v);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    std::printf("%-8s [%zu,%zu,%zu,%zu] min %.6f max %.6f mean %.6f\n", label, t.n(), t.c(), t.h(), t.w(), lo, hi,
                mean);
}

int run_attn_demo(const DemoArgs& a) {
    std::mt19937_64 rng(a.seed);
    const Tensor x = Tensor::uniform({1, a.channels, a.height, a.width}, rng);
    Tensor y, weights, y_zero;
    double expected_scale = 0.5;
    std::string params;
    if (a.block == "eca") {
        const auto p = EcaParams::random(a.channels, a.seed);
        y = eca_forward(x, p);
        weights = eca_weights(x, p);
        y_zero = eca_forward(x, EcaParams::zeros(a.channels));
        params = format_params(p);
    } else if (a.block == "cam" || a.block == "cbam") {
        const std::size_t r = std::min<std::size_t>(a.channels, 4);
        const auto cam = CamParams::random(a.channels, r, a.seed);
        weights = cam_weights(x, cam);
        if (a.block == "cam") {
            y = cam_forward(x, cam);
            y_zero = cam_forward(x, CamParams::zeros(a.channels, r));
            params = format_params(cam);
        } else {
            const auto sam = SamParams::random(a.seed + 1);
            y = cbam_forward(x, cam, sam);
            y_zero = cbam_forward(x, CamParams::zeros(a.channels, r), SamParams::zeros());
            expected_scale = 0.25;
            params = format_params(cam) + format_params(sam);
        }
    } else if (a.block == "sam") {
        const auto p = SamParams::random(a.seed);
        y = sam_forward(x, p);
        weights = sam_map(x, p);
        y_zero = sam_forward(x, SamParams::zeros());
        params = format_params(p);
    } else {
        const auto p = SppfParams::random(a.channels, std::max<std::size_t>(1, a.channels / 2), a.channels, a.seed);
        const auto t = sppf_trace(x, p);
        print_stats("input", x);
        print_stats("reduced", t.y0);
        print_stats("output", t.out);
        if (!a.params_out.empty()) write_file_atomic(a.params_out, format_params(p));
        return 0;
    }
    print_stats("input", x);
    print_stats("weights", weights);
    print_stats("output", y);
    const double err = max_abs_diff(y_zero, expected_scale * x);
    std::printf("zero-init: y = %.2f*x  max abs err %.3e  %s\n", expected_scale, err, err <= 1e-12 ? "ok" : "FAIL");
    if (!a.params_out.empty()) write_file_atomic(a.params_out, params);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crackscope: crack segmentation metrology, evaluation and attention-block verification"};
    app.require_subcommand(1);

    AnalyzeArgs aa;
    auto* analyze = app.add_subcommand("analyze", "per-component crack width report from a P5 mask");
    analyze->add_option("--mask", aa.mask, "binary/grayscale P5 PGM")->required();
    analyze->add_option("--out", aa.out, "JSON report path")->required();
    analyze->add_option("--scale-mm-per-px", aa.scale, "physical scale");
    analyze->add_option("--thresh", aa.thresh, "foreground threshold (value >= thresh)")->check(CLI::Range(0, 256));

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score predictions against a label directory");
    eval->add_option("--gt", ea.gt, "directory of <id>.txt labels (optional <id>.pgm for extents)")
        ->required()
        ->check(CLI::ExistingDirectory);
    eval->add_option("--pred", ea.pred, "JSON-lines predictions")->required();
    eval->add_option("--iou", ea.iou, "matching IoU threshold")->check(CLI::Range(0.0, 1.0));
    eval->add_option("--mode", ea.mode)->check(CLI::IsMember({"instance", "pixel"}));
    eval->add_option("--match", ea.match, "instance overlap measure")->check(CLI::IsMember({"box", "mask"}));
    eval->add_option("--pr-out", ea.pr_out, "PR curve CSV path");
    eval->add_option("--out", ea.out, "metrics JSON path (stdout when omitted)");

    SplitArgs sa;
    auto* split = app.add_subcommand("split", "seeded train/val/test split of a file list");
    split->add_option("--list", sa.list, "one item per line")->required();
    split->add_option("--train", sa.train)->required();
    split->add_option("--val", sa.val)->required();
    split->add_option("--test", sa.test)->required();
    split->add_option("--seed", sa.seed)->required();
    split->add_option("--out", sa.out, "output directory for train.txt, val.txt, test.txt");

    GradArgs ga;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference verification of every op and block");
    grad->add_option("--seed", ga.seed);
    grad->add_option("--eps", ga.eps)->check(CLI::PositiveNumber);
    grad->add_option("--tol", ga.tol)->check(CLI::PositiveNumber);
    grad->add_option("--cases", ga.cases, "random cases per op")->check(CLI::Range(1, 100000));

    DemoArgs da;
    auto* demo = app.add_subcommand("attn-demo", "run one attention block on a random tensor");
    demo->add_option("--block", da.block)->check(CLI::IsMember({"eca", "cam", "sam", "cbam", "sppf"}));
    demo->add_option("--seed", da.seed);
    demo->add_option("--channels", da.channels)->check(CLI::Range(1, 4096));
    demo->add_option("--height", da.height)->check(CLI::Range(1, 4096));
    demo->add_option("--width", da.width)->check(CLI::Range(1, 4096));
    demo->add_option("--params-out", da.params_out, "write the sampled parameters");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::ranges::replace(msg, '\n', ' ');
        std::fprintf(stderr, "error: usage: %s\n", msg.c_str());
        return 2;
    }

    try {
        if (*analyze) return run_analyze(aa);
        if (*eval) return run_eval(ea);
        if (*split) return run_split(sa);
        if (*grad) return run_gradcheck(ga);
        return run_attn_demo(da);
    } catch (const Error& e) {
        std::string msg = e.what();
        std::ranges::replace(msg, '\n', ' ');
        std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.kind())).c_str(), msg.c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
