#pragma once

// Forward kernels and their vector-Jacobian products. Every backward takes the
// forward inputs plus the upstream gradient and returns gradients for each
// differentiable input. Max-based ops route the gradient to the first
// (lowest-index) maximal element on ties.

#include <span>
#include <string_view>
#include <vector>

#include "crackscope/tensor.hpp"

namespace crackscope {

Tensor global_avg_pool(const Tensor& x);
Tensor global_max_pool(const Tensor& x);

// Cross-channel 1-D convolution over a [N,C,1,1] tensor, zero padded.
Tensor conv1d_channels(const Tensor& w, std::span<const double> kernel);

// Stride-1 cross-correlation with zero padding. kernel is [Cout,Cin,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::span<const double> bias, std::size_t pad);

// Window max with -inf padding.
Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad);

// out = W*x + b, row-wise over a [N,C,1,1] tensor.
Tensor dense(const Tensor& x, const Matrix& weight, std::span<const double> bias);
std::vector<double> dense(std::span<const double> x, const Matrix& weight, std::span<const double> bias);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// w is [N,C,1,1] (channel weights) or [N,1,H,W] (spatial map).
Tensor broadcast_mul(const Tensor& x, const Tensor& w);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);

struct ChannelStats {
    Tensor max;
    Tensor mean;
};
ChannelStats channel_stats(const Tensor& x);

// --- reverse mode ---

Tensor global_avg_pool_backward(const Shape& x_shape, const Tensor& gy);
Tensor global_max_pool_backward(const Tensor& x, const Tensor& gy);

struct Conv1dGrads {
    Tensor gw;
    std::vector<double> gkernel;
};
Conv1dGrads conv1d_channels_backward(const Tensor& w, std::span<const double> kernel, const Tensor& gy);

struct Conv2dGrads {
    Tensor gx;
    Tensor gkernel;
    std::vector<double> gbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, std::size_t pad, const Tensor& gy);

Tensor maxpool2d_backward(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad, const Tensor& gy);

struct DenseGrads {
    Tensor gx;
    Matrix gweight;
    std::vector<double> gbias;
};
DenseGrads dense_backward(const Tensor& x, const Matrix& weight, const Tensor& gy);

// Takes the forward output, not the input.
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);
Tensor relu_backward(const Tensor& x, const Tensor& gy);

struct BroadcastMulGrads {
    Tensor gx;
    Tensor gw;
};
BroadcastMulGrads broadcast_mul_backward(const Tensor& x, const Tensor& w, const Tensor& gy);

struct ConcatGrads {
    Tensor ga;
    Tensor gb;
};
ConcatGrads concat_channels_backward(std::size_t a_channels, const Tensor& gy);

Tensor channel_stats_backward(const Tensor& x, const Tensor& gmax, const Tensor& gmean);

// --- generic dispatch ---

enum class OpKind {
    GlobalAvgPool,
    GlobalMaxPool,
    Conv1dChannels,
    Conv2d,
    MaxPool2d,
    Dense,
    Sigmoid,
    Relu,
    BroadcastMul,
    ConcatChannels,
    ChannelStats,
};

std::string_view to_string(OpKind kind);
std::span<const OpKind> all_ops();

struct OpAttrs {
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;
};

// Input conventions:
//   Conv1dChannels  {w[N,C,1,1], kernel[1,1,1,k]}
//   Conv2d          {x, kernel[Cout,Cin,kh,kw], bias[1,1,1,Cout]}   attrs.pad
//   MaxPool2d       {x}                                             attrs.kernel/stride/pad
//   Dense           {x[N,C,1,1], weight[1,1,C',C], bias[1,1,1,C']}
//   BroadcastMul    {x, w}
//   ConcatChannels  {a, b}
//   everything else {x}
// ChannelStats yields concat(max, mean) as a [N,2,H,W] tensor.
struct OpCall {
    OpKind kind;
    std::vector<Tensor> inputs;
    OpAttrs attrs{};
};

enum class TiePolicy { FirstIndex, Reject };

Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs);
inline Tensor apply(const OpCall& call) { return apply(call.kind, call.inputs, call.attrs); }

// Gradient of <upstream, op(inputs)> w.r.t. every input. With TiePolicy::Reject,
// max-based ops throw NotDifferentiable when a selected maximum is tied.
std::vector<Tensor> vjp(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs,
                        const Tensor& upstream, TiePolicy ties = TiePolicy::FirstIndex);
inline std::vector<Tensor> vjp(const OpCall& call, const Tensor& upstream,
                               TiePolicy ties = TiePolicy::FirstIndex) {
    return vjp(call.kind, call.inputs, call.attrs, upstream, ties);
}

}  // namespace crackscope
