#include "crackscope/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "crackscope/error.hpp"

namespace crackscope {
namespace {

void require_spatial(const Tensor& x, const char* op) {
    if (x.h() * x.w() == 0) fail(ErrorKind::InvalidShape, std::string(op) + ": empty spatial extent");
}

void require_vector_form(const Tensor& x, const char* op) {
    if (x.h() != 1 || x.w() != 1) {
        fail(ErrorKind::InvalidShape, std::string(op) + ": expected [N,C,1,1], got " + to_string(x.shape()));
    }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (!(a == b)) fail(ErrorKind::InvalidShape, std::string(op) + ": " + to_string(a) + " vs " + to_string(b));
}

std::size_t pool_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

void check_pool(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad) {
    if (k == 0 || stride == 0) fail(ErrorKind::InvalidShape, "maxpool2d: kernel and stride must be >= 1");
    if (pad > k / 2) fail(ErrorKind::InvalidShape, "maxpool2d: pad must be <= kernel/2");
    if (k > x.h() + 2 * pad || k > x.w() + 2 * pad) {
        fail(ErrorKind::InvalidShape, "maxpool2d: window larger than padded input");
    }
}

// Index (into the plane) of the first maximum inside one pooling window, and whether it is tied.
struct WindowMax {
    std::size_t index;
    double value;
    bool tied;
};

WindowMax window_max(std::span<const double> plane, std::size_t height, std::size_t width, std::ptrdiff_t r0,
                     std::ptrdiff_t c0, std::size_t k) {
    WindowMax best{0, -std::numeric_limits<double>::infinity(), false};
    const auto r_lo = std::max<std::ptrdiff_t>(r0, 0);
    const auto c_lo = std::max<std::ptrdiff_t>(c0, 0);
    const auto r_hi = std::min<std::ptrdiff_t>(r0 + static_cast<std::ptrdiff_t>(k), static_cast<std::ptrdiff_t>(height));
    const auto c_hi = std::min<std::ptrdiff_t>(c0 + static_cast<std::ptrdiff_t>(k), static_cast<std::ptrdiff_t>(width));
    for (auto r = r_lo; r < r_hi; ++r) {
        for (auto c = c_lo; c < c_hi; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c);
            if (plane[i] > best.value) {
                best = {i, plane[i], false};
            } else if (plane[i] == best.value) {
                best.tied = true;
            }
        }
    }
    return best;
}

Matrix as_matrix(const Tensor& t) {
    if (t.n() != 1 || t.c() != 1) fail(ErrorKind::InvalidShape, "dense weight must be [1,1,rows,cols]");
    return Matrix(t.h(), t.w(), t.values());
}

std::span<const double> as_vector(const Tensor& t) { return t.data(); }

void require_inputs(std::span<const Tensor> inputs, std::size_t count, OpKind kind) {
    if (inputs.size() != count) {
        fail(ErrorKind::InvalidShape, std::string(to_string(kind)) + ": expected " + std::to_string(count) +
                                          " inputs, got " + std::to_string(inputs.size()));
    }
}

}  // namespace

Tensor global_avg_pool(const Tensor& x) {
    require_spatial(x, "global_avg_pool");
    Tensor out({x.n(), x.c(), 1, 1});
    const double inv = 1.0 / static_cast<double>(x.h() * x.w());
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            double s = 0.0;
            for (double v : x.plane(n, c)) s += v;
            out.at(n, c, 0, 0) = s * inv;
        }
    }
    return out;
}

Tensor global_max_pool(const Tensor& x) {
    require_spatial(x, "global_max_pool");
    Tensor out({x.n(), x.c(), 1, 1});
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto p = x.plane(n, c);
            out.at(n, c, 0, 0) = *std::max_element(p.begin(), p.end());
        }
    }
    return out;
}

Tensor conv1d_channels(const Tensor& w, std::span<const double> kernel) {
    require_vector_form(w, "conv1d_channels");
    if (kernel.size() % 2 == 0) fail(ErrorKind::InvalidKernel, "conv1d_channels: kernel length must be odd");
    const auto half = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const auto channels = static_cast<std::ptrdiff_t>(w.c());
    Tensor out(w.shape());
    for (std::size_t n = 0; n < w.n(); ++n) {
        for (std::ptrdiff_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (std::ptrdiff_t j = -half; j <= half; ++j) {
                const auto src = c + j;
                if (src < 0 || src >= channels) continue;
                s += kernel[static_cast<std::size_t>(j + half)] * w.at(n, static_cast<std::size_t>(src), 0, 0);
            }
            out.at(n, static_cast<std::size_t>(c), 0, 0) = s;
        }
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::span<const double> bias, std::size_t pad) {
    const std::size_t cout = kernel.n(), cin = kernel.c(), kh = kernel.h(), kw = kernel.w();
    if (cin != x.c()) {
        fail(ErrorKind::InvalidShape, "conv2d: kernel expects " + std::to_string(cin) + " input channels, got " +
                                          std::to_string(x.c()));
    }
    if (bias.size() != cout) fail(ErrorKind::InvalidShape, "conv2d: bias length must equal output channels");
    if (kh == 0 || kw == 0 || kh > x.h() + 2 * pad || kw > x.w() + 2 * pad) {
        fail(ErrorKind::InvalidShape, "conv2d: kernel larger than padded input");
    }
    const std::size_t oh = x.h() + 2 * pad - kh + 1;
    const std::size_t ow = x.w() + 2 * pad - kw + 1;
    const auto ih = static_cast<std::ptrdiff_t>(x.h());
    const auto iw = static_cast<std::ptrdiff_t>(x.w());
    const auto p = static_cast<std::ptrdiff_t>(pad);

    Tensor out({x.n(), cout, oh, ow});
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t co = 0; co < cout; ++co) {
            auto dst = out.plane(n, co);
            std::fill(dst.begin(), dst.end(), bias[co]);
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const auto src = x.plane(n, ci);
                for (std::size_t u = 0; u < kh; ++u) {
                    for (std::size_t v = 0; v < kw; ++v) {
                        const double k = kernel.at(co, ci, u, v);
                        if (k == 0.0) continue;
                        for (std::size_t r = 0; r < oh; ++r) {
                            const auto sr = static_cast<std::ptrdiff_t>(r + u) - p;
                            if (sr < 0 || sr >= ih) continue;
                            const auto c_lo = std::max<std::ptrdiff_t>(0, p - static_cast<std::ptrdiff_t>(v));
                            const auto c_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ow),
                                                                       iw + p - static_cast<std::ptrdiff_t>(v));
                            for (auto c = c_lo; c < c_hi; ++c) {
                                const auto sc = c + static_cast<std::ptrdiff_t>(v) - p;
                                dst[r * ow + static_cast<std::size_t>(c)] +=
                                    k * src[static_cast<std::size_t>(sr) * x.w() + static_cast<std::size_t>(sc)];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad) {
    check_pool(x, k, stride, pad);
    const std::size_t oh = pool_extent(x.h(), k, stride, pad);
    const std::size_t ow = pool_extent(x.w(), k, stride, pad);
    Tensor out({x.n(), x.c(), oh, ow});
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto src = x.plane(n, c);
            for (std::size_t r = 0; r < oh; ++r) {
                for (std::size_t q = 0; q < ow; ++q) {
                    const auto r0 = static_cast<std::ptrdiff_t>(r * stride) - static_cast<std::ptrdiff_t>(pad);
                    const auto c0 = static_cast<std::ptrdiff_t>(q * stride) - static_cast<std::ptrdiff_t>(pad);
                    out.at(n, c, r, q) = window_max(src, x.h(), x.w(), r0, c0, k).value;
                }
            }
        }
    }
    return out;
}

std::vector<double> dense(std::span<const double> x, const Matrix& weight, std::span<const double> bias) {
    if (x.size() != weight.cols || bias.size() != weight.rows) {
        fail(ErrorKind::InvalidShape, "dense: dimension mismatch");
    }
    std::vector<double> out(bias.begin(), bias.end());
    for (std::size_t i = 0; i < weight.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < weight.cols; ++j) s += weight.at(i, j) * x[j];
        out[i] += s;
    }
    return out;
}

Tensor dense(const Tensor& x, const Matrix& weight, std::span<const double> bias) {
    require_vector_form(x, "dense");
    if (x.c() != weight.cols || bias.size() != weight.rows) fail(ErrorKind::InvalidShape, "dense: dimension mismatch");
    Tensor out({x.n(), weight.rows, 1, 1});
    for (std::size_t n = 0; n < x.n(); ++n) {
        const auto row = dense(x.data().subspan(n * x.c(), x.c()), weight, bias);
        std::copy(row.begin(), row.end(), out.data().begin() + static_cast<std::ptrdiff_t>(n * weight.rows));
    }
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(0.0, x[i]);
    return out;
}

namespace {

enum class Broadcast { Channel, Spatial };

Broadcast broadcast_form(const Tensor& x, const Tensor& w) {
    if (w.n() == x.n() && w.c() == x.c() && w.h() == 1 && w.w() == 1) return Broadcast::Channel;
    if (w.n() == x.n() && w.c() == 1 && w.h() == x.h() && w.w() == x.w()) return Broadcast::Spatial;
    fail(ErrorKind::InvalidShape, "broadcast_mul: cannot broadcast " + to_string(w.shape()) + " onto " +
                                      to_string(x.shape()));
}

}  // namespace

Tensor broadcast_mul(const Tensor& x, const Tensor& w) {
    const auto form = broadcast_form(x, w);
    Tensor out(x.shape());
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto src = x.plane(n, c);
            auto dst = out.plane(n, c);
            if (form == Broadcast::Channel) {
                const double s = w.at(n, c, 0, 0);
                for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * s;
            } else {
                const auto m = w.plane(n, 0);
                for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * m[i];
            }
        }
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.c() == 0) return b;
    if (b.c() == 0) return a;
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
        fail(ErrorKind::InvalidShape, "concat_channels: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    Tensor out({a.n(), a.c() + b.c(), a.h(), a.w()});
    for (std::size_t n = 0; n < a.n(); ++n) {
        for (std::size_t c = 0; c < a.c(); ++c) std::ranges::copy(a.plane(n, c), out.plane(n, c).begin());
        for (std::size_t c = 0; c < b.c(); ++c) std::ranges::copy(b.plane(n, c), out.plane(n, a.c() + c).begin());
    }
    return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
    if (begin + count > x.c()) fail(ErrorKind::InvalidShape, "slice_channels: range out of bounds");
    Tensor out({x.n(), count, x.h(), x.w()});
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < count; ++c) std::ranges::copy(x.plane(n, begin + c), out.plane(n, c).begin());
    }
    return out;
}

ChannelStats channel_stats(const Tensor& x) {
    if (x.c() == 0) fail(ErrorKind::InvalidShape, "channel_stats: no channels");
    ChannelStats s{Tensor({x.n(), 1, x.h(), x.w()}), Tensor({x.n(), 1, x.h(), x.w()})};
    const double inv = 1.0 / static_cast<double>(x.c());
    for (std::size_t n = 0; n < x.n(); ++n) {
        auto mx = s.max.plane(n, 0);
        auto mean = s.mean.plane(n, 0);
        std::ranges::copy(x.plane(n, 0), mx.begin());
        std::ranges::copy(x.plane(n, 0), mean.begin());
        for (std::size_t c = 1; c < x.c(); ++c) {
            const auto p = x.plane(n, c);
            for (std::size_t i = 0; i < p.size(); ++i) {
                mx[i] = std::max(mx[i], p[i]);
                mean[i] += p[i];
            }
        }
        for (auto& v : mean) v *= inv;
    }
    return s;
}

// --- reverse mode ---

Tensor global_avg_pool_backward(const Shape& x_shape, const Tensor& gy) {
    require_same(gy.shape(), Shape{x_shape.n, x_shape.c, 1, 1}, "global_avg_pool_backward");
    Tensor gx(x_shape);
    const double inv = 1.0 / static_cast<double>(x_shape.plane());
    for (std::size_t n = 0; n < x_shape.n; ++n) {
        for (std::size_t c = 0; c < x_shape.c; ++c) {
            const double g = gy.at(n, c, 0, 0) * inv;
            for (auto& v : gx.plane(n, c)) v = g;
        }
    }
    return gx;
}

Tensor global_max_pool_backward(const Tensor& x, const Tensor& gy) {
    require_same(gy.shape(), Shape{x.n(), x.c(), 1, 1}, "global_max_pool_backward");
    Tensor gx(x.shape());
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto p = x.plane(n, c);
            const auto i = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
            gx.plane(n, c)[i] = gy.at(n, c, 0, 0);
        }
    }
    return gx;
}

Conv1dGrads conv1d_channels_backward(const Tensor& w, std::span<const double> kernel, const Tensor& gy) {
    require_same(gy.shape(), w.shape(), "conv1d_channels_backward");
    if (kernel.size() % 2 == 0) fail(ErrorKind::InvalidKernel, "conv1d_channels: kernel length must be odd");
    Conv1dGrads g{Tensor(w.shape()), std::vector<double>(kernel.size(), 0.0)};
    const auto half = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const auto channels = static_cast<std::ptrdiff_t>(w.c());
    for (std::size_t n = 0; n < w.n(); ++n) {
        for (std::ptrdiff_t c = 0; c < channels; ++c) {
            const double up = gy.at(n, static_cast<std::size_t>(c), 0, 0);
            for (std::ptrdiff_t j = -half; j <= half; ++j) {
                const auto src = c + j;
                if (src < 0 || src >= channels) continue;
                const auto kj = static_cast<std::size_t>(j + half);
                g.gw.at(n, static_cast<std::size_t>(src), 0, 0) += kernel[kj] * up;
                g.gkernel[kj] += w.at(n, static_cast<std::size_t>(src), 0, 0) * up;
            }
        }
    }
    return g;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, std::size_t pad, const Tensor& gy) {
    const std::size_t cout = kernel.n(), cin = kernel.c(), kh = kernel.h(), kw = kernel.w();
    if (cin != x.c()) fail(ErrorKind::InvalidShape, "conv2d_backward: channel mismatch");
    const std::size_t oh = x.h() + 2 * pad - kh + 1;
    const std::size_t ow = x.w() + 2 * pad - kw + 1;
    require_same(gy.shape(), Shape{x.n(), cout, oh, ow}, "conv2d_backward");
    const auto ih = static_cast<std::ptrdiff_t>(x.h());
    const auto iw = static_cast<std::ptrdiff_t>(x.w());
    const auto p = static_cast<std::ptrdiff_t>(pad);

    Conv2dGrads g{Tensor(x.shape()), Tensor(kernel.shape()), std::vector<double>(cout, 0.0)};
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t co = 0; co < cout; ++co) {
            const auto up = gy.plane(n, co);
            for (double v : up) g.gbias[co] += v;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const auto src = x.plane(n, ci);
                auto gsrc = g.gx.plane(n, ci);
                for (std::size_t u = 0; u < kh; ++u) {
                    for (std::size_t v = 0; v < kw; ++v) {
                        const double k = kernel.at(co, ci, u, v);
                        double gk = 0.0;
                        for (std::size_t r = 0; r < oh; ++r) {
                            const auto sr = static_cast<std::ptrdiff_t>(r + u) - p;
                            if (sr < 0 || sr >= ih) continue;
                            const auto c_lo = std::max<std::ptrdiff_t>(0, p - static_cast<std::ptrdiff_t>(v));
                            const auto c_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ow),
                                                                       iw + p - static_cast<std::ptrdiff_t>(v));
                            for (auto c = c_lo; c < c_hi; ++c) {
                                const auto sc = c + static_cast<std::ptrdiff_t>(v) - p;
                                const std::size_t si = static_cast<std::size_t>(sr) * x.w() + static_cast<std::size_t>(sc);
                                const double u_val = up[r * ow + static_cast<std::size_t>(c)];
                                gk += u_val * src[si];
                                gsrc[si] += u_val * k;
                            }
                        }
                        g.gkernel.at(co, ci, u, v) += gk;
                    }
                }
            }
        }
    }
    return g;
}

Tensor maxpool2d_backward(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad, const Tensor& gy) {
    check_pool(x, k, stride, pad);
    const std::size_t oh = pool_extent(x.h(), k, stride, pad);
    const std::size_t ow = pool_extent(x.w(), k, stride, pad);
    require_same(gy.shape(), Shape{x.n(), x.c(), oh, ow}, "maxpool2d_backward");
    Tensor gx(x.shape());
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto src = x.plane(n, c);
            auto dst = gx.plane(n, c);
            for (std::size_t r = 0; r < oh; ++r) {
                for (std::size_t q = 0; q < ow; ++q) {
                    const auto r0 = static_cast<std::ptrdiff_t>(r * stride) - static_cast<std::ptrdiff_t>(pad);
                    const auto c0 = static_cast<std::ptrdiff_t>(q * stride) - static_cast<std::ptrdiff_t>(pad);
                    dst[window_max(src, x.h(), x.w(), r0, c0, k).index] += gy.at(n, c, r, q);
                }
            }
        }
    }
    return gx;
}

DenseGrads dense_backward(const Tensor& x, const Matrix& weight, const Tensor& gy) {
    require_vector_form(x, "dense_backward");
    require_same(gy.shape(), Shape{x.n(), weight.rows, 1, 1}, "dense_backward");
    if (x.c() != weight.cols) fail(ErrorKind::InvalidShape, "dense_backward: dimension mismatch");
    DenseGrads g{Tensor(x.shape()), Matrix(weight.rows, weight.cols), std::vector<double>(weight.rows, 0.0)};
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t i = 0; i < weight.rows; ++i) {
            const double up = gy.at(n, i, 0, 0);
            g.gbias[i] += up;
            for (std::size_t j = 0; j < weight.cols; ++j) {
                g.gweight.at(i, j) += up * x.at(n, j, 0, 0);
                g.gx.at(n, j, 0, 0) += up * weight.at(i, j);
            }
        }
    }
    return g;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
    require_same(y.shape(), gy.shape(), "sigmoid_backward");
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * y[i] * (1.0 - y[i]);
    return gx;
}

Tensor relu_backward(const Tensor& x, const Tensor& gy) {
    require_same(x.shape(), gy.shape(), "relu_backward");
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
    return gx;
}

BroadcastMulGrads broadcast_mul_backward(const Tensor& x, const Tensor& w, const Tensor& gy) {
    require_same(x.shape(), gy.shape(), "broadcast_mul_backward");
    const auto form = broadcast_form(x, w);
    BroadcastMulGrads g{broadcast_mul(gy, w), Tensor(w.shape())};
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto xs = x.plane(n, c);
            const auto up = gy.plane(n, c);
            if (form == Broadcast::Channel) {
                double s = 0.0;
                for (std::size_t i = 0; i < xs.size(); ++i) s += xs[i] * up[i];
                g.gw.at(n, c, 0, 0) += s;
            } else {
                auto gm = g.gw.plane(n, 0);
                for (std::size_t i = 0; i < xs.size(); ++i) gm[i] += xs[i] * up[i];
            }
        }
    }
    return g;
}

ConcatGrads concat_channels_backward(std::size_t a_channels, const Tensor& gy) {
    if (a_channels > gy.c()) fail(ErrorKind::InvalidShape, "concat_channels_backward: split out of range");
    return {slice_channels(gy, 0, a_channels), slice_channels(gy, a_channels, gy.c() - a_channels)};
}

Tensor channel_stats_backward(const Tensor& x, const Tensor& gmax, const Tensor& gmean) {
    const Shape map{x.n(), 1, x.h(), x.w()};
    require_same(gmax.shape(), map, "channel_stats_backward");
    require_same(gmean.shape(), map, "channel_stats_backward");
    Tensor gx(x.shape());
    const double inv = 1.0 / static_cast<double>(x.c());
    for (std::size_t n = 0; n < x.n(); ++n) {
        const auto gm = gmax.plane(n, 0);
        const auto ga = gmean.plane(n, 0);
        for (std::size_t i = 0; i < x.shape().plane(); ++i) {
            std::size_t best = 0;
            double best_v = x.plane(n, 0)[i];
            for (std::size_t c = 0; c < x.c(); ++c) {
                const double v = x.plane(n, c)[i];
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
                gx.plane(n, c)[i] += ga[i] * inv;
            }
            gx.plane(n, best)[i] += gm[i];
        }
    }
    return gx;
}

// --- generic dispatch ---

std::string_view to_string(OpKind kind) {
    switch (kind) {
    case OpKind::GlobalAvgPool: return "global_avg_pool";
    case OpKind::GlobalMaxPool: return "global_max_pool";
    case OpKind::Conv1dChannels: return "conv1d_channels";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::MaxPool2d: return "maxpool2d";
    case OpKind::Dense: return "dense";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::BroadcastMul: return "broadcast_mul";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::ChannelStats: return "channel_stats";
    }
    return "unknown";
}

std::span<const OpKind> all_ops() {
    static constexpr std::array kOps{OpKind::GlobalAvgPool, OpKind::GlobalMaxPool, OpKind::Conv1dChannels,
                                     OpKind::Conv2d,        OpKind::MaxPool2d,     OpKind::Dense,
                                     OpKind::Sigmoid,       OpKind::Relu,          OpKind::BroadcastMul,
                                     OpKind::ConcatChannels, OpKind::ChannelStats};
    return kOps;
}

Tensor apply(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
    switch (kind) {
    case OpKind::GlobalAvgPool: require_inputs(in, 1, kind); return global_avg_pool(in[0]);
    case OpKind::GlobalMaxPool: require_inputs(in, 1, kind); return global_max_pool(in[0]);
    case OpKind::Conv1dChannels: require_inputs(in, 2, kind); return conv1d_channels(in[0], as_vector(in[1]));
    case OpKind::Conv2d: require_inputs(in, 3, kind); return conv2d(in[0], in[1], as_vector(in[2]), attrs.pad);
    case OpKind::MaxPool2d:
        require_inputs(in, 1, kind);
        return maxpool2d(in[0], attrs.kernel, attrs.stride, attrs.pad);
    case OpKind::Dense: require_inputs(in, 3, kind); return dense(in[0], as_matrix(in[1]), as_vector(in[2]));
    case OpKind::Sigmoid: require_inputs(in, 1, kind); return sigmoid(in[0]);
    case OpKind::Relu: require_inputs(in, 1, kind); return relu(in[0]);
    case OpKind::BroadcastMul: require_inputs(in, 2, kind); return broadcast_mul(in[0], in[1]);
    case OpKind::ConcatChannels: require_inputs(in, 2, kind); return concat_channels(in[0], in[1]);
    case OpKind::ChannelStats: {
        require_inputs(in, 1, kind);
        auto s = channel_stats(in[0]);
        return concat_channels(s.max, s.mean);
    }
    }
    fail(ErrorKind::NotDifferentiable, "unsupported op");
}

namespace {

void reject_global_ties(const Tensor& x) {
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const auto p = x.plane(n, c);
            const double m = *std::max_element(p.begin(), p.end());
            if (std::count(p.begin(), p.end(), m) > 1) {
                fail(ErrorKind::NotDifferentiable, "global_max_pool: tied maximum");
            }
        }
    }
}

void reject_window_ties(const Tensor& x, const OpAttrs& a) {
    check_pool(x, a.kernel, a.stride, a.pad);
    const std::size_t oh = pool_extent(x.h(), a.kernel, a.stride, a.pad);
    const std::size_t ow = pool_extent(x.w(), a.kernel, a.stride, a.pad);
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            for (std::size_t r = 0; r < oh; ++r) {
                for (std::size_t q = 0; q < ow; ++q) {
                    const auto r0 = static_cast<std::ptrdiff_t>(r * a.stride) - static_cast<std::ptrdiff_t>(a.pad);
                    const auto c0 = static_cast<std::ptrdiff_t>(q * a.stride) - static_cast<std::ptrdiff_t>(a.pad);
                    if (window_max(x.plane(n, c), x.h(), x.w(), r0, c0, a.kernel).tied) {
                        fail(ErrorKind::NotDifferentiable, "maxpool2d: tied maximum");
                    }
                }
            }
        }
    }
}

void reject_channel_ties(const Tensor& x) {
    const auto s = channel_stats(x);
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t i = 0; i < x.shape().plane(); ++i) {
            int hits = 0;
            for (std::size_t c = 0; c < x.c(); ++c) hits += x.plane(n, c)[i] == s.max.plane(n, 0)[i];
            if (hits > 1) fail(ErrorKind::NotDifferentiable, "channel_stats: tied maximum");
        }
    }
}

}  // namespace

std::vector<Tensor> vjp(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs, const Tensor& up,
                        TiePolicy ties) {
    const bool strict = ties == TiePolicy::Reject;
    switch (kind) {
    case OpKind::GlobalAvgPool:
        require_inputs(in, 1, kind);
        require_spatial(in[0], "global_avg_pool");
        return {global_avg_pool_backward(in[0].shape(), up)};
    case OpKind::GlobalMaxPool:
        require_inputs(in, 1, kind);
        require_spatial(in[0], "global_max_pool");
        if (strict) reject_global_ties(in[0]);
        return {global_max_pool_backward(in[0], up)};
    case OpKind::Conv1dChannels: {
        require_inputs(in, 2, kind);
        auto g = conv1d_channels_backward(in[0], as_vector(in[1]), up);
        return {std::move(g.gw), Tensor::from_vector(g.gkernel)};
    }
    case OpKind::Conv2d: {
        require_inputs(in, 3, kind);
        auto g = conv2d_backward(in[0], in[1], attrs.pad, up);
        return {std::move(g.gx), std::move(g.gkernel), Tensor::from_vector(g.gbias)};
    }
    case OpKind::MaxPool2d:
        require_inputs(in, 1, kind);
        if (strict) reject_window_ties(in[0], attrs);
        return {maxpool2d_backward(in[0], attrs.kernel, attrs.stride, attrs.pad, up)};
    case OpKind::Dense: {
        require_inputs(in, 3, kind);
        const auto w = as_matrix(in[1]);
        auto g = dense_backward(in[0], w, up);
        return {std::move(g.gx), Tensor(in[1].shape(), std::move(g.gweight.values)), Tensor::from_vector(g.gbias)};
    }
    case OpKind::Sigmoid: require_inputs(in, 1, kind); return {sigmoid_backward(sigmoid(in[0]), up)};
    case OpKind::Relu:
        require_inputs(in, 1, kind);
        if (strict && std::ranges::find(in[0].data(), 0.0) != in[0].data().end()) {
            fail(ErrorKind::NotDifferentiable, "relu: input exactly at the kink");
        }
        return {relu_backward(in[0], up)};
    case OpKind::BroadcastMul: {
        require_inputs(in, 2, kind);
        auto g = broadcast_mul_backward(in[0], in[1], up);
        return {std::move(g.gx), std::move(g.gw)};
    }
    case OpKind::ConcatChannels: {
        require_inputs(in, 2, kind);
        auto g = concat_channels_backward(in[0].c(), up);
        // concat of an empty tensor passes the other operand through unchanged
        if (in[0].c() == 0) g.ga = in[0];
        if (in[1].c() == 0) g.gb = in[1];
        return {std::move(g.ga), std::move(g.gb)};
    }
    case OpKind::ChannelStats: {
        require_inputs(in, 1, kind);
        if (strict) reject_channel_ties(in[0]);
        auto g = concat_channels_backward(1, up);
        return {channel_stats_backward(in[0], g.ga, g.gb)};
    }
    }
    fail(ErrorKind::NotDifferentiable, "unsupported op");
}

}  // namespace crackscope
