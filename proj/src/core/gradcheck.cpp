#include "hdst/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hdst {

namespace {

GradCheckResult compare(const LossFn& loss_fn, const Parameter& p, const Tensor& analytic, double eps) {
    GradCheckResult r;
    Variable var = p.var;
    Tensor& value = var.mutable_value();
    for (std::size_t i = 0; i < value.numel(); ++i) {
        const double saved = value[i];
        value[i] = saved + eps;
        const double up = loss_fn().value()[0];
        value[i] = saved - eps;
        const double down = loss_fn().value()[0];
        value[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        if (i == 0 || rel > r.max_rel_error) {
            r.max_rel_error = rel;
            r.worst_index = i;
            r.analytic = a;
            r.numeric = numeric;
        }
    }
    return r;
}

}  // namespace

std::map<std::string, GradCheckResult> finite_diff_check_all(const LossFn& loss_fn,
                                                             const ParameterList& params, double eps) {
    zero_grad(params);
    Tape tape;
    Variable loss;
    {
        Tape::Scope scope(tape);
        loss = loss_fn();
    }
    auto grads = backward(loss, tape, params);
    tape.clear();
    std::map<std::string, GradCheckResult> out;
    for (const auto& p : params) out.emplace(p.name, compare(loss_fn, p, grads.at(p.name), eps));
    return out;
}

GradCheckResult finite_diff_check(const LossFn& loss_fn, const Parameter& p, double eps) {
    return finite_diff_check_all(loss_fn, ParameterList{p}, eps).at(p.name);
}

}  // namespace hdst
