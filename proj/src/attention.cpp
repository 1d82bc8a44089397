#include "crackscope/attention.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "crackscope/error.hpp"
#include "crackscope/ops.hpp"

namespace crackscope {
namespace {

constexpr double kInitRange = 0.5;

std::vector<double> uniform_values(std::size_t count, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-kInitRange, kInitRange);
    std::vector<double> v(count);
    for (auto& x : v) x = dist(rng);
    return v;
}

void add_into(std::vector<double>& acc, const std::vector<double>& v) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

void add_into(Matrix& acc, const Matrix& m) {
    for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += m.values[i];
}

}  // namespace

std::size_t eca_kernel_size(std::size_t channels, double gamma, double b_offset) {
    if (channels == 0) fail(ErrorKind::InvalidShape, "eca_kernel_size: zero channels");
    if (!(gamma > 0.0)) fail(ErrorKind::InvalidParams, "eca_kernel_size: gamma must be positive");
    const double t = std::abs(std::log2(static_cast<double>(channels)) / gamma + b_offset / gamma);
    auto k = static_cast<std::size_t>(t);
    if (k % 2 == 0) ++k;
    return std::max<std::size_t>(k, 3);
}

// --- parameter construction ---

namespace {

std::size_t eca_length_for(std::size_t channels) {
    const std::size_t k = eca_kernel_size(channels);
    return std::min(k, 2 * channels - 1);
}

}  // namespace

EcaParams EcaParams::zeros(std::size_t channels) {
    return EcaParams{std::vector<double>(eca_length_for(channels), 0.0)};
}

EcaParams EcaParams::random(std::size_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return EcaParams{uniform_values(eca_length_for(channels), rng)};
}

void EcaParams::validate() const {
    if (kernel.empty() || kernel.size() % 2 == 0) fail(ErrorKind::InvalidKernel, "eca: kernel length must be odd");
    if (!(gamma > 0.0)) fail(ErrorKind::InvalidParams, "eca: gamma must be positive");
}

CamParams CamParams::zeros(std::size_t channels, std::size_t reduction) {
    if (channels == 0 || reduction == 0) fail(ErrorKind::InvalidShape, "cam: channels and reduction must be >= 1");
    const std::size_t r = std::min(reduction, channels);
    if (channels % r != 0) {
        fail(ErrorKind::InvalidShape, "cam: " + std::to_string(channels) + " channels not divisible by reduction " +
                                          std::to_string(r));
    }
    const std::size_t hidden = channels / r;
    CamParams p;
    p.channels = channels;
    p.reduction = r;
    p.w1 = Matrix(hidden, channels);
    p.b1.assign(hidden, 0.0);
    p.w2 = Matrix(channels, hidden);
    p.b2.assign(channels, 0.0);
    return p;
}

CamParams CamParams::random(std::size_t channels, std::size_t reduction, std::uint64_t seed) {
    auto p = zeros(channels, reduction);
    std::mt19937_64 rng(seed);
    p.w1.values = uniform_values(p.w1.values.size(), rng);
    p.b1 = uniform_values(p.b1.size(), rng);
    p.w2.values = uniform_values(p.w2.values.size(), rng);
    p.b2 = uniform_values(p.b2.size(), rng);
    return p;
}

void CamParams::validate() const {
    const std::size_t h = channels / std::max<std::size_t>(reduction, 1);
    if (channels == 0 || reduction == 0 || channels % reduction != 0 || w1.rows != h || w1.cols != channels ||
        b1.size() != h || w2.rows != channels || w2.cols != h || b2.size() != channels) {
        fail(ErrorKind::InvalidShape, "cam: inconsistent parameter dimensions");
    }
}

SamParams SamParams::random(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SamParams p;
    p.kernel = Tensor({1, 2, kSize, kSize}, uniform_values(2 * kSize * kSize, rng));
    p.bias = uniform_values(1, rng)[0];
    return p;
}

void SamParams::validate() const {
    if (!(kernel.shape() == Shape{1, 2, kSize, kSize})) {
        fail(ErrorKind::InvalidShape, "sam: kernel must be [1,2,7,7], got " + to_string(kernel.shape()));
    }
}

SppfParams SppfParams::random(std::size_t cin, std::size_t cmid, std::size_t cout, std::uint64_t seed) {
    if (cin == 0 || cmid == 0 || cout == 0) fail(ErrorKind::InvalidShape, "sppf: channel counts must be >= 1");
    std::mt19937_64 rng(seed);
    SppfParams p;
    p.reduce = Tensor({cmid, cin, 1, 1}, uniform_values(cmid * cin, rng));
    p.reduce_bias = uniform_values(cmid, rng);
    p.expand = Tensor({cout, 4 * cmid, 1, 1}, uniform_values(cout * 4 * cmid, rng));
    p.expand_bias = uniform_values(cout, rng);
    return p;
}

void SppfParams::validate() const {
    if (reduce.h() != 1 || reduce.w() != 1 || expand.h() != 1 || expand.w() != 1) {
        fail(ErrorKind::InvalidShape, "sppf: reduce/expand must be 1x1 kernels");
    }
    if (expand.c() != 4 * reduce.n()) fail(ErrorKind::InvalidShape, "sppf: expand input width must be 4*Cmid");
    if (reduce_bias.size() != reduce.n() || expand_bias.size() != expand.n()) {
        fail(ErrorKind::InvalidShape, "sppf: bias length mismatch");
    }
}

// --- ECA ---

namespace {

void check_eca(const Tensor& x, const EcaParams& p) {
    p.validate();
    if (x.c() == 0) fail(ErrorKind::InvalidShape, "eca: no channels");
    if (p.kernel.size() > 2 * x.c() - 1) {
        fail(ErrorKind::InvalidShape, "eca: kernel length " + std::to_string(p.kernel.size()) + " exceeds 2C-1");
    }
}

}  // namespace

Tensor eca_weights(const Tensor& x, const EcaParams& p) {
    check_eca(x, p);
    return sigmoid(conv1d_channels(global_avg_pool(x), p.kernel));
}

Tensor eca_forward(const Tensor& x, const EcaParams& p) { return broadcast_mul(x, eca_weights(x, p)); }

EcaGrads eca_backward(const Tensor& x, const EcaParams& p, const Tensor& gy) {
    check_eca(x, p);
    const Tensor pooled = global_avg_pool(x);
    const Tensor w = sigmoid(conv1d_channels(pooled, p.kernel));
    auto gmul = broadcast_mul_backward(x, w, gy);
    const Tensor gz = sigmoid_backward(w, gmul.gw);
    auto gconv = conv1d_channels_backward(pooled, p.kernel, gz);
    gmul.gx += global_avg_pool_backward(x.shape(), gconv.gw);
    return {std::move(gmul.gx), std::move(gconv.gkernel)};
}

// --- CAM ---

namespace {

void check_cam(const Tensor& x, const CamParams& p) {
    p.validate();
    if (x.c() != p.channels) {
        fail(ErrorKind::InvalidShape, "cam: parameters built for " + std::to_string(p.channels) + " channels, input has " +
                                          std::to_string(x.c()));
    }
}

struct MlpTrace {
    Tensor input, hidden, activated, out;
};

MlpTrace shared_mlp(const Tensor& v, const CamParams& p) {
    MlpTrace t{v, dense(v, p.w1, p.b1), {}, {}};
    t.activated = relu(t.hidden);
    t.out = dense(t.activated, p.w2, p.b2);
    return t;
}

}  // namespace

Tensor cam_logits(const Tensor& x, const CamParams& p) {
    check_cam(x, p);
    return shared_mlp(global_avg_pool(x), p).out + shared_mlp(global_max_pool(x), p).out;
}

Tensor cam_weights(const Tensor& x, const CamParams& p) { return sigmoid(cam_logits(x, p)); }

Tensor cam_forward(const Tensor& x, const CamParams& p) { return broadcast_mul(x, cam_weights(x, p)); }

CamGrads cam_backward(const Tensor& x, const CamParams& p, const Tensor& gy) {
    check_cam(x, p);
    const auto avg = shared_mlp(global_avg_pool(x), p);
    const auto mx = shared_mlp(global_max_pool(x), p);
    const Tensor w = sigmoid(avg.out + mx.out);

    auto gmul = broadcast_mul_backward(x, w, gy);
    const Tensor gz = sigmoid_backward(w, gmul.gw);

    CamGrads g{std::move(gmul.gx), Matrix(p.w1.rows, p.w1.cols), std::vector<double>(p.b1.size(), 0.0),
               Matrix(p.w2.rows, p.w2.cols), std::vector<double>(p.b2.size(), 0.0)};
    auto branch = [&](const MlpTrace& t) {
        auto g2 = dense_backward(t.activated, p.w2, gz);
        add_into(g.gw2, g2.gweight);
        add_into(g.gb2, g2.gbias);
        auto g1 = dense_backward(t.input, p.w1, relu_backward(t.hidden, g2.gx));
        add_into(g.gw1, g1.gweight);
        add_into(g.gb1, g1.gbias);
        return std::move(g1.gx);
    };
    g.gx += global_avg_pool_backward(x.shape(), branch(avg));
    g.gx += global_max_pool_backward(x, branch(mx));
    return g;
}

// --- SAM ---

Tensor sam_map(const Tensor& x, const SamParams& p) {
    p.validate();
    const auto stats = channel_stats(x);
    const double bias[1] = {p.bias};
    return sigmoid(conv2d(concat_channels(stats.max, stats.mean), p.kernel, bias, SamParams::kPad));
}

Tensor sam_forward(const Tensor& x, const SamParams& p) { return broadcast_mul(x, sam_map(x, p)); }

SamGrads sam_backward(const Tensor& x, const SamParams& p, const Tensor& gy) {
    p.validate();
    const auto stats = channel_stats(x);
    const Tensor pooled = concat_channels(stats.max, stats.mean);
    const double bias[1] = {p.bias};
    const Tensor m = sigmoid(conv2d(pooled, p.kernel, bias, SamParams::kPad));

    auto gmul = broadcast_mul_backward(x, m, gy);
    const Tensor gz = sigmoid_backward(m, gmul.gw);
    auto gconv = conv2d_backward(pooled, p.kernel, SamParams::kPad, gz);
    auto gsplit = concat_channels_backward(1, gconv.gx);
    gmul.gx += channel_stats_backward(x, gsplit.ga, gsplit.gb);
    return {std::move(gmul.gx), std::move(gconv.gkernel), gconv.gbias[0]};
}

// --- CBAM ---

Tensor cbam_forward(const Tensor& x, const CamParams& cam, const SamParams& sam) {
    return sam_forward(cam_forward(x, cam), sam);
}

CbamGrads cbam_backward(const Tensor& x, const CamParams& cam, const SamParams& sam, const Tensor& gy) {
    const Tensor mid = cam_forward(x, cam);
    auto gs = sam_backward(mid, sam, gy);
    auto gc = cam_backward(x, cam, gs.gx);
    Tensor gx = std::move(gc.gx);
    gc.gx = Tensor();
    return {std::move(gx), std::move(gc), std::move(gs)};
}

// --- SPPF ---

SppfTrace sppf_trace(const Tensor& x, const SppfParams& p) {
    p.validate();
    SppfTrace t;
    t.y0 = conv2d(x, p.reduce, p.reduce_bias, 0);
    t.y1 = maxpool2d(t.y0, SppfParams::kPool, 1, SppfParams::kPoolPad);
    t.y2 = maxpool2d(t.y1, SppfParams::kPool, 1, SppfParams::kPoolPad);
    t.y3 = maxpool2d(t.y2, SppfParams::kPool, 1, SppfParams::kPoolPad);
    const Tensor cat = concat_channels(concat_channels(t.y0, t.y1), concat_channels(t.y2, t.y3));
    t.out = conv2d(cat, p.expand, p.expand_bias, 0);
    return t;
}

Tensor sppf_forward(const Tensor& x, const SppfParams& p) { return sppf_trace(x, p).out; }

SppfGrads sppf_backward(const Tensor& x, const SppfParams& p, const Tensor& gy) {
    const auto t = sppf_trace(x, p);
    const std::size_t mid = p.mid_channels();
    const Tensor cat = concat_channels(concat_channels(t.y0, t.y1), concat_channels(t.y2, t.y3));
    auto gexp = conv2d_backward(cat, p.expand, 0, gy);

    Tensor g3 = slice_channels(gexp.gx, 3 * mid, mid);
    Tensor g2 = slice_channels(gexp.gx, 2 * mid, mid);
    Tensor g1 = slice_channels(gexp.gx, mid, mid);
    Tensor g0 = slice_channels(gexp.gx, 0, mid);
    g2 += maxpool2d_backward(t.y2, SppfParams::kPool, 1, SppfParams::kPoolPad, g3);
    g1 += maxpool2d_backward(t.y1, SppfParams::kPool, 1, SppfParams::kPoolPad, g2);
    g0 += maxpool2d_backward(t.y0, SppfParams::kPool, 1, SppfParams::kPoolPad, g1);
    auto gred = conv2d_backward(x, p.reduce, 0, g0);
    return {std::move(gred.gx), std::move(gred.gkernel), std::move(gred.gbias), std::move(gexp.gkernel),
            std::move(gexp.gbias)};
}

// --- demo pipeline ---

DemoParams DemoParams::make(std::size_t cin, std::size_t channels, std::size_t cout, std::uint64_t seed,
                            bool zero_attention) {
    std::mt19937_64 rng(seed);
    DemoParams p;
    p.conv = Tensor({channels, cin, 3, 3}, uniform_values(channels * cin * 9, rng));
    p.conv_bias = uniform_values(channels, rng);
    const std::size_t mid = std::max<std::size_t>(channels / 2, 1);
    p.sppf = SppfParams::random(channels, mid, cout, rng());
    const std::size_t reduction = std::min<std::size_t>(channels, 4);
    if (zero_attention) {
        p.eca = EcaParams::zeros(channels);
        p.cam = CamParams::zeros(channels, reduction);
        p.sam = SamParams::zeros();
    } else {
        p.eca = EcaParams::random(channels, rng());
        p.cam = CamParams::random(channels, reduction, rng());
        p.sam = SamParams::random(rng());
    }
    return p;
}

DemoTrace demo_trace(const Tensor& x, const DemoParams& p) {
    DemoTrace t;
    t.features = conv2d(x, p.conv, p.conv_bias, 1);
    t.eca_out = eca_forward(t.features, p.eca);
    t.cbam_out = cbam_forward(t.eca_out, p.cam, p.sam);
    t.out = sppf_forward(t.cbam_out, p.sppf);
    return t;
}

Tensor demo_pipeline(const Tensor& x, const DemoParams& p) { return demo_trace(x, p).out; }

DemoGrads demo_backward(const Tensor& x, const DemoParams& p, const Tensor& gy) {
    const auto t = demo_trace(x, p);
    DemoGrads g;
    g.sppf = sppf_backward(t.cbam_out, p.sppf, gy);
    g.cbam = cbam_backward(t.eca_out, p.cam, p.sam, g.sppf.gx);
    g.eca = eca_backward(t.features, p.eca, g.cbam.gx);
    auto gc = conv2d_backward(x, p.conv, 1, g.eca.gx);
    g.gx = std::move(gc.gx);
    g.gconv = std::move(gc.gkernel);
    g.gconv_bias = std::move(gc.gbias);
    return g;
}

// --- text format ---

namespace {

void append_values(std::string& out, std::span<const double> values) {
    char buf[32];
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, values[i]);
        out.append(buf, ptr);
        out += (i + 1 == values.size()) ? '\n' : ' ';
    }
}

class TokenReader {
public:
    explicit TokenReader(std::string_view text) : in_(std::string(text)) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) fail(ErrorKind::InvalidParams, "params: unexpected end of input");
        return w;
    }

    std::size_t count() {
        const auto w = word();
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc{} || ptr != w.data() + w.size()) fail(ErrorKind::InvalidParams, "params: bad integer '" + w + "'");
        return v;
    }

    double real() {
        const auto w = word();
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc{} || ptr != w.data() + w.size()) fail(ErrorKind::InvalidParams, "params: bad value '" + w + "'");
        return v;
    }

    std::vector<double> reals(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = real();
        return v;
    }

    void expect_header(std::string_view block) {
        if (word() != block) fail(ErrorKind::InvalidParams, "params: expected block '" + std::string(block) + "'");
    }

    void expect_end() {
        std::string extra;
        if (in_ >> extra) fail(ErrorKind::InvalidParams, "params: trailing data '" + extra + "'");
    }

private:
    std::istringstream in_;
};

std::string real_token(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

std::string format_params(const EcaParams& p) {
    std::string out = "eca " + std::to_string(p.kernel.size()) + ' ' + real_token(p.gamma) + ' ' +
                      real_token(p.b_offset) + '\n';
    append_values(out, p.kernel);
    return out;
}

std::string format_params(const CamParams& p) {
    std::string out = "cam " + std::to_string(p.channels) + ' ' + std::to_string(p.reduction) + '\n';
    append_values(out, p.w1.values);
    append_values(out, p.b1);
    append_values(out, p.w2.values);
    append_values(out, p.b2);
    return out;
}

std::string format_params(const SamParams& p) {
    std::string out = "sam " + std::to_string(SamParams::kSize) + '\n';
    append_values(out, p.kernel.data());
    const double bias[1] = {p.bias};
    append_values(out, bias);
    return out;
}

std::string format_params(const SppfParams& p) {
    std::string out = "sppf " + std::to_string(p.in_channels()) + ' ' + std::to_string(p.mid_channels()) + ' ' +
                      std::to_string(p.out_channels()) + '\n';
    append_values(out, p.reduce.data());
    append_values(out, p.reduce_bias);
    append_values(out, p.expand.data());
    append_values(out, p.expand_bias);
    return out;
}

EcaParams parse_eca_params(std::string_view text) {
    TokenReader r(text);
    r.expect_header("eca");
    const std::size_t k = r.count();
    EcaParams p;
    p.gamma = r.real();
    p.b_offset = r.real();
    p.kernel = r.reals(k);
    r.expect_end();
    p.validate();
    return p;
}

CamParams parse_cam_params(std::string_view text) {
    TokenReader r(text);
    r.expect_header("cam");
    const std::size_t c = r.count();
    const std::size_t red = r.count();
    if (red == 0 || red > c || c % red != 0) fail(ErrorKind::InvalidParams, "cam params: invalid reduction");
    auto p = CamParams::zeros(c, red);
    p.w1.values = r.reals(p.w1.values.size());
    p.b1 = r.reals(p.b1.size());
    p.w2.values = r.reals(p.w2.values.size());
    p.b2 = r.reals(p.b2.size());
    r.expect_end();
    return p;
}

SamParams parse_sam_params(std::string_view text) {
    TokenReader r(text);
    r.expect_header("sam");
    if (r.count() != SamParams::kSize) fail(ErrorKind::InvalidParams, "sam params: kernel size must be 7");
    SamParams p;
    p.kernel = Tensor({1, 2, SamParams::kSize, SamParams::kSize}, r.reals(2 * SamParams::kSize * SamParams::kSize));
    p.bias = r.real();
    r.expect_end();
    return p;
}

SppfParams parse_sppf_params(std::string_view text) {
    TokenReader r(text);
    r.expect_header("sppf");
    const std::size_t cin = r.count(), cmid = r.count(), cout = r.count();
    if (cin == 0 || cmid == 0 || cout == 0) fail(ErrorKind::InvalidParams, "sppf params: zero channel count");
    SppfParams p;
    p.reduce = Tensor({cmid, cin, 1, 1}, r.reals(cmid * cin));
    p.reduce_bias = r.reals(cmid);
    p.expand = Tensor({cout, 4 * cmid, 1, 1}, r.reals(cout * 4 * cmid));
    p.expand_bias = r.reals(cout);
    r.expect_end();
    return p;
}

}  // namespace crackscope
