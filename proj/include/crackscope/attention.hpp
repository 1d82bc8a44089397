#pragma once

// Channel/spatial attention blocks (ECA, CBAM = CAM then SAM) and the SPPF
// pooling block. Each block has a pure forward pass and a reverse pass that
// returns the input gradient together with the parameter gradients.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "crackscope/tensor.hpp"

namespace crackscope {

// Adaptive 1-D kernel size: |log2(C)/gamma + b/gamma| truncated, bumped to odd, at least 3.
std::size_t eca_kernel_size(std::size_t channels, double gamma = 2.0, double b_offset = 1.0);

struct EcaParams {
    std::vector<double> kernel;
    double gamma = 2.0;
    double b_offset = 1.0;

    static EcaParams zeros(std::size_t channels);
    static EcaParams random(std::size_t channels, std::uint64_t seed);
    void validate() const;
};

struct CamParams {
    std::size_t channels = 0;
    std::size_t reduction = 16;
    Matrix w1;  // (C/r) x C
    std::vector<double> b1;
    Matrix w2;  // C x (C/r)
    std::vector<double> b2;

    std::size_t hidden() const { return w1.rows; }
    // reduction is clamped to at most C; C must then be divisible by it.
    static CamParams zeros(std::size_t channels, std::size_t reduction = 16);
    static CamParams random(std::size_t channels, std::size_t reduction, std::uint64_t seed);
    void validate() const;
};

struct SamParams {
    static constexpr std::size_t kSize = 7;
    static constexpr std::size_t kPad = 3;
    Tensor kernel{Shape{1, 2, kSize, kSize}};
    double bias = 0.0;

    static SamParams zeros() { return {}; }
    static SamParams random(std::uint64_t seed);
    void validate() const;
};

struct SppfParams {
    static constexpr std::size_t kPool = 5;
    static constexpr std::size_t kPoolPad = 2;
    Tensor reduce;  // [Cmid, Cin, 1, 1]
    std::vector<double> reduce_bias;
    Tensor expand;  // [Cout, 4*Cmid, 1, 1]
    std::vector<double> expand_bias;

    std::size_t in_channels() const { return reduce.c(); }
    std::size_t mid_channels() const { return reduce.n(); }
    std::size_t out_channels() const { return expand.n(); }

    static SppfParams random(std::size_t cin, std::size_t cmid, std::size_t cout, std::uint64_t seed);
    void validate() const;
};

// --- forward passes ---

// Channel weights in (0,1), shape [N,C,1,1].
Tensor eca_weights(const Tensor& x, const EcaParams& p);
Tensor eca_forward(const Tensor& x, const EcaParams& p);

// Pre-sigmoid logit MLP(avg) + MLP(max), shape [N,C,1,1].
Tensor cam_logits(const Tensor& x, const CamParams& p);
Tensor cam_weights(const Tensor& x, const CamParams& p);
Tensor cam_forward(const Tensor& x, const CamParams& p);

// Spatial map in (0,1), shape [N,1,H,W].
Tensor sam_map(const Tensor& x, const SamParams& p);
Tensor sam_forward(const Tensor& x, const SamParams& p);

Tensor cbam_forward(const Tensor& x, const CamParams& cam, const SamParams& sam);

struct SppfTrace {
    Tensor y0, y1, y2, y3;
    Tensor out;
};
SppfTrace sppf_trace(const Tensor& x, const SppfParams& p);
Tensor sppf_forward(const Tensor& x, const SppfParams& p);

// --- reverse passes ---

struct EcaGrads {
    Tensor gx;
    std::vector<double> gkernel;
};
EcaGrads eca_backward(const Tensor& x, const EcaParams& p, const Tensor& gy);

struct CamGrads {
    Tensor gx;
    Matrix gw1;
    std::vector<double> gb1;
    Matrix gw2;
    std::vector<double> gb2;
};
CamGrads cam_backward(const Tensor& x, const CamParams& p, const Tensor& gy);

struct SamGrads {
    Tensor gx;
    Tensor gkernel;
    double gbias = 0.0;
};
SamGrads sam_backward(const Tensor& x, const SamParams& p, const Tensor& gy);

struct CbamGrads {
    Tensor gx;
    CamGrads cam;
    SamGrads sam;
};
CbamGrads cbam_backward(const Tensor& x, const CamParams& cam, const SamParams& sam, const Tensor& gy);

struct SppfGrads {
    Tensor gx;
    Tensor greduce;
    std::vector<double> greduce_bias;
    Tensor gexpand;
    std::vector<double> gexpand_bias;
};
SppfGrads sppf_backward(const Tensor& x, const SppfParams& p, const Tensor& gy);

// --- demo composition: 3x3 conv -> ECA -> CBAM -> SPPF ---

struct DemoParams {
    Tensor conv;  // [C, Cin, 3, 3], pad 1
    std::vector<double> conv_bias;
    EcaParams eca;
    CamParams cam;
    SamParams sam;
    SppfParams sppf;

    // Conv and SPPF weights are seeded uniform; attention parameters are zero when zero_attention is set.
    static DemoParams make(std::size_t cin, std::size_t channels, std::size_t cout, std::uint64_t seed,
                           bool zero_attention = false);
};

struct DemoTrace {
    Tensor features;   // after the stem conv
    Tensor eca_out;
    Tensor cbam_out;   // input to SPPF
    Tensor out;
};
DemoTrace demo_trace(const Tensor& x, const DemoParams& p);
Tensor demo_pipeline(const Tensor& x, const DemoParams& p);

struct DemoGrads {
    Tensor gx;
    Tensor gconv;
    std::vector<double> gconv_bias;
    EcaGrads eca;
    CbamGrads cbam;
    SppfGrads sppf;
};
DemoGrads demo_backward(const Tensor& x, const DemoParams& p, const Tensor& gy);

// --- parameter text format ---
//
// A header line naming the block and its dimensions, followed by the
// row-major values of each parameter in a fixed order:
//   eca <k> <gamma> <b_offset>        kernel
//   cam <C> <r>                       w1, b1, w2, b2
//   sam 7                             kernel[1,2,7,7], bias
//   sppf <Cin> <Cmid> <Cout>          reduce, reduce_bias, expand, expand_bias
std::string format_params(const EcaParams& p);
std::string format_params(const CamParams& p);
std::string format_params(const SamParams& p);
std::string format_params(const SppfParams& p);

EcaParams parse_eca_params(std::string_view text);
CamParams parse_cam_params(std::string_view text);
SamParams parse_sam_params(std::string_view text);
SppfParams parse_sppf_params(std::string_view text);

}  // namespace crackscope
