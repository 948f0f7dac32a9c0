#pragma once

#include "ctdn/autograd.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ctdn {

struct GradCheckReport {
    std::string name;
    int instances = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central finite differences (step `eps`) against the analytic gradient of
// scalar-valued `f` at `x0`. Relative error uses max(|g_a|, |g_fd|, 1e-3)
// as the denominator so near-zero entries compare absolutely.
double finite_difference_max_rel_err(const std::function<ag::Tensor(const ag::Tensor&)>& f,
                                     const Mat& x0, double eps = 1e-4);

// Runs the finite-difference suites for the relation, cognition-transfer,
// representation-distillation and decoupling losses.
std::vector<GradCheckReport> run_gradient_checks(uint64_t seed = 7, int instances = 20,
                                                 double tolerance = 1e-4);

}  // namespace ctdn
