#include "crackscope/gradient_suite.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "crackscope/attention.hpp"
#include "crackscope/error.hpp"
#include "crackscope/geometry.hpp"
#include "crackscope/ops.hpp"

namespace crackscope {
namespace {

// Perturbations of size eps must never reorder two candidates of a max.
constexpr double kMinGap = 1e-4;

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Values in [-1,1] that are pairwise at least ~1/size apart.
Tensor distinct_tensor(Shape shape, std::mt19937_64& rng) {
    const std::size_t n = shape.numel();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::uniform_real_distribution<double> jitter(0.0, 0.5);
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = -1.0 + 2.0 * (static_cast<double>(perm[i]) + jitter(rng)) / static_cast<double>(n);
    }
    return t;
}

Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    Tensor t(shape);
    for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
    return t;
}

bool sorted_gaps_ok(std::vector<double> v) {
    std::ranges::sort(v);
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] - v[i - 1] < kMinGap) return false;
    }
    return true;
}

bool planes_separated(const Tensor& t) {
    for (std::size_t n = 0; n < t.n(); ++n) {
        for (std::size_t c = 0; c < t.c(); ++c) {
            const auto p = t.plane(n, c);
            if (!sorted_gaps_ok({p.begin(), p.end()})) return false;
        }
    }
    return true;
}

bool channels_separated(const Tensor& t) {
    std::vector<double> v(t.c());
    for (std::size_t n = 0; n < t.n(); ++n) {
        for (std::size_t i = 0; i < t.shape().plane(); ++i) {
            for (std::size_t c = 0; c < t.c(); ++c) v[c] = t.plane(n, c)[i];
            if (!sorted_gaps_ok(v)) return false;
        }
    }
    return true;
}

Tensor matrix_tensor(const Matrix& m) { return Tensor({1, 1, m.rows, m.cols}, m.values); }
Matrix tensor_matrix(const Tensor& t) { return Matrix(t.h(), t.w(), t.values()); }

GradProblem op_case(OpKind kind, std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 4), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
    const Shape s{n, c, h, w};
    OpCall call{kind, {}, {}};
    switch (kind) {
    case OpKind::GlobalAvgPool: call.inputs = {Tensor::uniform(s, rng)}; break;
    case OpKind::GlobalMaxPool:
    case OpKind::ChannelStats: call.inputs = {distinct_tensor(s, rng)}; break;
    case OpKind::Conv1dChannels: {
        const std::size_t k = 2 * pick(rng, 0, 2) + 1;
        call.inputs = {Tensor::uniform({n, c, 1, 1}, rng), Tensor::uniform({1, 1, 1, k}, rng)};
        break;
    }
    case OpKind::Conv2d: {
        const std::size_t pad = pick(rng, 0, 2), cout = pick(rng, 1, 3);
        const std::size_t kh = std::min<std::size_t>(pick(rng, 1, 3), h + 2 * pad);
        const std::size_t kw = std::min<std::size_t>(pick(rng, 1, 3), w + 2 * pad);
        call.inputs = {Tensor::uniform(s, rng), Tensor::uniform({cout, c, kh, kw}, rng),
                       Tensor::uniform({1, 1, 1, cout}, rng)};
        call.attrs.pad = pad;
        break;
    }
    case OpKind::MaxPool2d: {
        const std::size_t k = pick(rng, 1, std::min<std::size_t>({3, h, w}));
        call.attrs = {k, pick(rng, 1, 2), pick(rng, 0, k / 2)};
        call.inputs = {distinct_tensor(s, rng)};
        break;
    }
    case OpKind::Dense: {
        const std::size_t out = pick(rng, 1, 4);
        call.inputs = {Tensor::uniform({n, c, 1, 1}, rng), Tensor::uniform({1, 1, out, c}, rng),
                       Tensor::uniform({1, 1, 1, out}, rng)};
        break;
    }
    case OpKind::Sigmoid: call.inputs = {Tensor::uniform(s, rng, -3.0, 3.0)}; break;
    case OpKind::Relu: call.inputs = {away_from_zero(s, rng)}; break;
    case OpKind::BroadcastMul: {
        const bool spatial = std::bernoulli_distribution(0.5)(rng);
        call.inputs = {Tensor::uniform(s, rng),
                       Tensor::uniform(spatial ? Shape{n, 1, h, w} : Shape{n, c, 1, 1}, rng)};
        break;
    }
    case OpKind::ConcatChannels:
        call.inputs = {Tensor::uniform(s, rng), Tensor::uniform({n, pick(rng, 1, 3), h, w}, rng)};
        break;
    }
    return make_op_problem(std::move(call));
}

// --- block cases: inputs are x followed by every parameter tensor ---

void push_cam(std::vector<Tensor>& in, const CamParams& p) {
    in.push_back(matrix_tensor(p.w1));
    in.push_back(Tensor::from_vector(p.b1));
    in.push_back(matrix_tensor(p.w2));
    in.push_back(Tensor::from_vector(p.b2));
}

CamParams cam_at(std::span<const Tensor> in, std::size_t at, std::size_t channels) {
    CamParams p;
    p.channels = channels;
    p.w1 = tensor_matrix(in[at]);
    p.b1 = in[at + 1].values();
    p.w2 = tensor_matrix(in[at + 2]);
    p.b2 = in[at + 3].values();
    p.reduction = channels / p.w1.rows;
    return p;
}

void push_cam_grads(std::vector<Tensor>& out, const CamGrads& g) {
    out.push_back(matrix_tensor(g.gw1));
    out.push_back(Tensor::from_vector(g.gb1));
    out.push_back(matrix_tensor(g.gw2));
    out.push_back(Tensor::from_vector(g.gb2));
}

void push_sam(std::vector<Tensor>& in, const SamParams& p) {
    in.push_back(p.kernel);
    in.push_back(Tensor({1, 1, 1, 1}, {p.bias}));
}

SamParams sam_at(std::span<const Tensor> in, std::size_t at) { return SamParams{in[at], in[at + 1][0]}; }

void push_sam_grads(std::vector<Tensor>& out, const SamGrads& g) {
    out.push_back(g.gkernel);
    out.push_back(Tensor({1, 1, 1, 1}, {g.gbias}));
}

void push_sppf(std::vector<Tensor>& in, const SppfParams& p) {
    in.push_back(p.reduce);
    in.push_back(Tensor::from_vector(p.reduce_bias));
    in.push_back(p.expand);
    in.push_back(Tensor::from_vector(p.expand_bias));
}

SppfParams sppf_at(std::span<const Tensor> in, std::size_t at) {
    return SppfParams{in[at], in[at + 1].values(), in[at + 2], in[at + 3].values()};
}

void push_sppf_grads(std::vector<Tensor>& out, const SppfGrads& g) {
    out.push_back(g.greduce);
    out.push_back(Tensor::from_vector(g.greduce_bias));
    out.push_back(g.gexpand);
    out.push_back(Tensor::from_vector(g.gexpand_bias));
}

GradProblem eca_case(std::mt19937_64& rng) {
    const std::size_t c = pick(rng, 2, 8);
    const Tensor x = Tensor::uniform({pick(rng, 1, 2), c, pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
    const auto p = EcaParams::random(c, rng());
    GradProblem g{"eca", {x, Tensor::from_vector(p.kernel)}, {}, {}};
    g.forward = [](std::span<const Tensor> in) { return eca_forward(in[0], EcaParams{in[1].values()}); };
    g.backward = [](std::span<const Tensor> in, const Tensor& up) {
        auto r = eca_backward(in[0], EcaParams{in[1].values()}, up);
        return std::vector<Tensor>{std::move(r.gx), Tensor::from_vector(r.gkernel)};
    };
    return g;
}

GradProblem cam_case(std::mt19937_64& rng) {
    const std::size_t c = 2 * pick(rng, 1, 4);
    const Tensor x = distinct_tensor({pick(rng, 1, 2), c, pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
    GradProblem g{"cam", {x}, {}, {}};
    push_cam(g.inputs, CamParams::random(c, 2, rng()));
    g.forward = [c](std::span<const Tensor> in) { return cam_forward(in[0], cam_at(in, 1, c)); };
    g.backward = [c](std::span<const Tensor> in, const Tensor& up) {
        auto r = cam_backward(in[0], cam_at(in, 1, c), up);
        std::vector<Tensor> out{std::move(r.gx)};
        push_cam_grads(out, r);
        return out;
    };
    return g;
}

GradProblem sam_case(std::mt19937_64& rng) {
    const Tensor x = distinct_tensor({pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 6), pick(rng, 1, 6)}, rng);
    GradProblem g{"sam", {x}, {}, {}};
    push_sam(g.inputs, SamParams::random(rng()));
    g.forward = [](std::span<const Tensor> in) { return sam_forward(in[0], sam_at(in, 1)); };
    g.backward = [](std::span<const Tensor> in, const Tensor& up) {
        auto r = sam_backward(in[0], sam_at(in, 1), up);
        std::vector<Tensor> out{std::move(r.gx)};
        push_sam_grads(out, r);
        return out;
    };
    return g;
}

GradProblem cbam_case(std::mt19937_64& rng) {
    const std::size_t c = 2 * pick(rng, 1, 3);
    for (;;) {
        const Tensor x = distinct_tensor({pick(rng, 1, 2), c, pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
        const auto cam = CamParams::random(c, 2, rng());
        if (!channels_separated(cam_forward(x, cam))) continue;
        GradProblem g{"cbam", {x}, {}, {}};
        push_cam(g.inputs, cam);
        push_sam(g.inputs, SamParams::random(rng()));
        g.forward = [c](std::span<const Tensor> in) { return cbam_forward(in[0], cam_at(in, 1, c), sam_at(in, 5)); };
        g.backward = [c](std::span<const Tensor> in, const Tensor& up) {
            auto r = cbam_backward(in[0], cam_at(in, 1, c), sam_at(in, 5), up);
            std::vector<Tensor> out{std::move(r.gx)};
            push_cam_grads(out, r.cam);
            push_sam_grads(out, r.sam);
            return out;
        };
        return g;
    }
}

GradProblem sppf_case(std::mt19937_64& rng) {
    for (;;) {
        const std::size_t cin = pick(rng, 1, 4), cmid = pick(rng, 1, 3), cout = pick(rng, 1, 3);
        const Tensor x = Tensor::uniform({pick(rng, 1, 2), cin, pick(rng, 2, 7), pick(rng, 2, 7)}, rng);
        const auto p = SppfParams::random(cin, cmid, cout, rng());
        if (!planes_separated(conv2d(x, p.reduce, p.reduce_bias, 0))) continue;
        GradProblem g{"sppf", {x}, {}, {}};
        push_sppf(g.inputs, p);
        g.forward = [](std::span<const Tensor> in) { return sppf_forward(in[0], sppf_at(in, 1)); };
        g.backward = [](std::span<const Tensor> in, const Tensor& up) {
            auto r = sppf_backward(in[0], sppf_at(in, 1), up);
            std::vector<Tensor> out{std::move(r.gx)};
            push_sppf_grads(out, r);
            return out;
        };
        return g;
    }
}

// Input layout: x, conv, conv_bias, eca kernel, cam(4), sam(2), sppf(4).
DemoParams demo_at(std::span<const Tensor> in, std::size_t channels) {
    DemoParams p;
    p.conv = in[1];
    p.conv_bias = in[2].values();
    p.eca = EcaParams{in[3].values()};
    p.cam = cam_at(in, 4, channels);
    p.sam = sam_at(in, 8);
    p.sppf = sppf_at(in, 10);
    return p;
}

GradProblem demo_case(std::mt19937_64& rng) {
    constexpr std::size_t cin = 2, channels = 4, cout = 4;
    for (;;) {
        const Tensor x = Tensor::uniform({1, cin, pick(rng, 4, 6), pick(rng, 4, 6)}, rng);
        const auto p = DemoParams::make(cin, channels, cout, rng());
        const auto t = demo_trace(x, p);
        if (!planes_separated(t.eca_out) || !channels_separated(cam_forward(t.eca_out, p.cam)) ||
            !planes_separated(conv2d(t.cbam_out, p.sppf.reduce, p.sppf.reduce_bias, 0))) {
            continue;
        }
        GradProblem g{"demo", {x, p.conv, Tensor::from_vector(p.conv_bias), Tensor::from_vector(p.eca.kernel)}, {}, {}};
        push_cam(g.inputs, p.cam);
        push_sam(g.inputs, p.sam);
        push_sppf(g.inputs, p.sppf);
        g.forward = [](std::span<const Tensor> in) { return demo_pipeline(in[0], demo_at(in, channels)); };
        g.backward = [](std::span<const Tensor> in, const Tensor& up) {
            auto r = demo_backward(in[0], demo_at(in, channels), up);
            std::vector<Tensor> out{std::move(r.gx), std::move(r.gconv), Tensor::from_vector(r.gconv_bias),
                                    Tensor::from_vector(r.eca.gkernel)};
            push_cam_grads(out, r.cbam.cam);
            push_sam_grads(out, r.cbam.sam);
            push_sppf_grads(out, r.sppf);
            return out;
        };
        return g;
    }
}

BBox box_of(const Tensor& t) { return {t[0], t[1], t[2], t[3]}; }

// CIoU with alpha frozen at the base prediction, matching the analytic gradient's convention.
GradProblem ciou_case(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(0.0, 10.0), size(1.0, 5.0), jitter(-0.4, 0.4), scale(0.6, 1.6);
    for (;;) {
        const BBox gt{pos(rng), pos(rng), size(rng), size(rng)};
        const BBox pred{gt.cx + jitter(rng) * gt.w, gt.cy + jitter(rng) * gt.h, gt.w * scale(rng), gt.h * scale(rng)};
        if (iou(pred, gt) <= 0.0 || ciou_grad(pred, gt).at_kink) continue;
        const double alpha = ciou_alpha(pred, gt);
        GradProblem g{"ciou", {Tensor({1, 1, 1, 4}, {pred.cx, pred.cy, pred.w, pred.h})}, {}, {}};
        g.forward = [gt, alpha](std::span<const Tensor> in) {
            return Tensor({1, 1, 1, 1}, {ciou_loss_fixed_alpha(box_of(in[0]), gt, alpha)});
        };
        g.backward = [gt](std::span<const Tensor> in, const Tensor& up) {
            const auto d = ciou_grad(box_of(in[0]), gt).d;
            return std::vector<Tensor>{Tensor({1, 1, 1, 4}, {d[0] * up[0], d[1] * up[0], d[2] * up[0], d[3] * up[0]})};
        };
        return g;
    }
}

}  // namespace

std::vector<std::string> gradient_suite_members() {
    std::vector<std::string> names;
    for (auto op : all_ops()) names.emplace_back(to_string(op));
    for (const char* b : {"eca", "cam", "sam", "cbam", "sppf", "demo", "ciou"}) names.emplace_back(b);
    return names;
}

GradProblem make_suite_problem(std::string_view member, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto op : all_ops()) {
        if (to_string(op) == member) return op_case(op, rng);
    }
    if (member == "eca") return eca_case(rng);
    if (member == "cam") return cam_case(rng);
    if (member == "sam") return sam_case(rng);
    if (member == "cbam") return cbam_case(rng);
    if (member == "sppf") return sppf_case(rng);
    if (member == "demo") return demo_case(rng);
    if (member == "ciou") return ciou_case(rng);
    fail(ErrorKind::NotDifferentiable, "no gradient check for '" + std::string(member) + "'");
}

std::vector<SuiteEntry> run_gradient_suite(const SuiteOptions& options) {
    std::vector<SuiteEntry> entries;
    const auto members = gradient_suite_members();
    for (std::size_t m = 0; m < members.size(); ++m) {
        SuiteEntry e{members[m], options.cases, 0, 0.0};
        for (std::size_t k = 0; k < options.cases; ++k) {
            const std::uint64_t case_seed = options.seed * 1000003ULL + m * 7919ULL + k;
            GradCheckOptions go;
            go.eps = options.eps;
            go.tol = options.tol;
            go.seed = case_seed ^ 0x5bd1e995ULL;
            const auto report = gradcheck(make_suite_problem(members[m], case_seed), go);
            e.passed += report.pass;
            e.worst_error = std::max(e.worst_error, report.max_rel_error);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace crackscope
