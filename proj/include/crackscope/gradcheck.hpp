#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crackscope/ops.hpp"
#include "crackscope/tensor.hpp"

namespace crackscope {

struct GradCheckReport {
    std::string op;
    double max_rel_error = 0.0;
    std::vector<double> per_input_errors;
    bool pass = false;
};

// A differentiable function of several tensors together with its hand-written reverse pass.
struct GradProblem {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<Tensor(std::span<const Tensor>)> forward;
    std::function<std::vector<Tensor>(std::span<const Tensor>, const Tensor&)> backward;
};

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    std::uint64_t seed = 0;
    // Inputs whose gradient is not compared (e.g. integer-like or frozen operands).
    std::vector<bool> skip;
};

// Projects the output onto a seeded random direction r, then compares the
// reverse pass (upstream = r) with central differences of <r, f(x)> for every
// input entry. The per-input error is
//     max_i |g_i - fd_i| / max(max_i |g_i|, max_i |fd_i|, 1e-6).
GradCheckReport gradcheck(const GradProblem& problem, const GradCheckOptions& options);

GradCheckReport gradcheck(const OpCall& call, double eps, double tol, std::uint64_t seed);

GradProblem make_op_problem(OpCall call);

}  // namespace crackscope
