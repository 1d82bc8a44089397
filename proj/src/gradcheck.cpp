#include "crackscope/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "crackscope/error.hpp"

namespace crackscope {

GradProblem make_op_problem(OpCall call) {
    GradProblem p;
    p.name = std::string(to_string(call.kind));
    p.inputs = std::move(call.inputs);
    const OpKind kind = call.kind;
    const OpAttrs attrs = call.attrs;
    p.forward = [kind, attrs](std::span<const Tensor> in) { return apply(kind, in, attrs); };
    p.backward = [kind, attrs](std::span<const Tensor> in, const Tensor& up) { return vjp(kind, in, attrs, up); };
    return p;
}

GradCheckReport gradcheck(const GradProblem& problem, const GradCheckOptions& options) {
    if (!(options.eps > 0.0) || !(options.tol > 0.0)) fail(ErrorKind::InvalidParams, "gradcheck: eps and tol must be > 0");

    GradCheckReport report;
    report.op = problem.name;

    std::vector<Tensor> inputs = problem.inputs;
    const Tensor y = problem.forward(inputs);
    std::mt19937_64 rng(options.seed);
    const Tensor direction = Tensor::uniform(y.shape(), rng, -1.0, 1.0);

    const auto analytic = problem.backward(inputs, direction);
    if (analytic.size() != inputs.size()) {
        fail(ErrorKind::InvalidShape, problem.name + ": backward returned wrong number of gradients");
    }

    auto projected = [&]() { return dot(direction, problem.forward(inputs)); };

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (k < options.skip.size() && options.skip[k]) {
            report.per_input_errors.push_back(0.0);
            continue;
        }
        if (!(analytic[k].shape() == inputs[k].shape())) {
            fail(ErrorKind::InvalidShape, problem.name + ": gradient shape mismatch for input " + std::to_string(k));
        }
        double max_diff = 0.0, scale = 1e-6;
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double saved = inputs[k][i];
            inputs[k][i] = saved + options.eps;
            const double plus = projected();
            inputs[k][i] = saved - options.eps;
            const double minus = projected();
            inputs[k][i] = saved;
            const double fd = (plus - minus) / (2.0 * options.eps);
            const double g = analytic[k][i];
            max_diff = std::max(max_diff, std::abs(g - fd));
            scale = std::max({scale, std::abs(g), std::abs(fd)});
        }
        const double err = std::isfinite(max_diff) ? max_diff / scale : INFINITY;
        report.per_input_errors.push_back(err);
        report.max_rel_error = std::max(report.max_rel_error, err);
    }
    report.pass = report.max_rel_error <= options.tol;
    return report;
}

GradCheckReport gradcheck(const OpCall& call, double eps, double tol, std::uint64_t seed) {
    GradCheckOptions opts;
    opts.eps = eps;
    opts.tol = tol;
    opts.seed = seed;
    return gradcheck(make_op_problem(call), opts);
}

}  // namespace crackscope
