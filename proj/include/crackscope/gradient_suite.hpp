#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "crackscope/gradcheck.hpp"

namespace crackscope {

// Names of every differentiable op and block covered by the suite: the tensor
// ops, eca, cam, sam, cbam, sppf, demo and ciou.
std::vector<std::string> gradient_suite_members();

// A random, tie-free case for one suite member, fully determined by seed.
GradProblem make_suite_problem(std::string_view member, std::uint64_t seed);

struct SuiteOptions {
    std::uint64_t seed = 42;
    std::size_t cases = 100;
    double eps = 1e-5;
    double tol = 1e-4;
};

struct SuiteEntry {
    std::string name;
    std::size_t cases = 0;
    std::size_t passed = 0;
    double worst_error = 0.0;
    bool pass() const { return cases > 0 && passed == cases; }
};

std::vector<SuiteEntry> run_gradient_suite(const SuiteOptions& options);

}  // namespace crackscope
