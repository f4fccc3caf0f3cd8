#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hdst/autograd.hpp"

namespace hdst {

struct AdamMoments {
    Tensor first;
    Tensor second;
};

struct OptimizerState {
    std::map<std::string, AdamMoments> moments;
    std::size_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One bias-corrected adaptive-moment update. The learning rate is read from
/// `state` so callers can drive it from a schedule.
void adam_step(const ParameterList& params, const std::map<std::string, Tensor>& grads,
               OptimizerState& state);

/// Piecewise-constant learning rate: breakpoints (epoch, lr) with strictly
/// increasing epochs; the rate at epoch e is that of the last breakpoint <= e.
class LrSchedule {
public:
    LrSchedule() = default;
    explicit LrSchedule(std::vector<std::pair<std::size_t, double>> breakpoints);

    double at(std::size_t epoch) const;
    const std::vector<std::pair<std::size_t, double>>& breakpoints() const { return points_; }

private:
    std::vector<std::pair<std::size_t, double>> points_;
};

}  // namespace hdst
