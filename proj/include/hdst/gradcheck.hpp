#pragma once

#include <functional>
#include <map>
#include <string>

#include "hdst/autograd.hpp"

namespace hdst {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

using LossFn = std::function<Variable()>;

/// Central-difference check of the taped gradient of `loss_fn` with respect
/// to every coordinate of `p`. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
GradCheckResult finite_diff_check(const LossFn& loss_fn, const Parameter& p, double eps);

/// Same check for several parameters sharing one backward pass.
std::map<std::string, GradCheckResult> finite_diff_check_all(const LossFn& loss_fn,
                                                             const ParameterList& params, double eps);

}  // namespace hdst
