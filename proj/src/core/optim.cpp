#include "hdst/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hdst {

void adam_step(const ParameterList& params, const std::map<std::string, Tensor>& grads,
               OptimizerState& state) {
    for (const auto& p : params) {
        auto it = grads.find(p.name);
        if (it == grads.end()) throw std::invalid_argument("adam_step: no gradient for " + p.name);
        require_same_shape(p.var.value(), it->second, ("adam_step gradient for " + p.name).c_str());
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (const auto& p : params) {
        const Tensor& g = grads.at(p.name);
        auto& mom = state.moments[p.name];
        if (mom.first.shape() != g.shape()) {
            mom.first = Tensor::zeros(g.shape());
            mom.second = Tensor::zeros(g.shape());
        }
        Variable var = p.var;
        Tensor& w = var.mutable_value();
        for (std::size_t i = 0; i < w.numel(); ++i) {
            mom.first[i] = state.beta1 * mom.first[i] + (1.0 - state.beta1) * g[i];
            mom.second[i] = state.beta2 * mom.second[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = mom.first[i] / c1;
            const double vhat = mom.second[i] / c2;
            w[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

LrSchedule::LrSchedule(std::vector<std::pair<std::size_t, double>> breakpoints) : points_(std::move(breakpoints)) {
    if (points_.empty()) throw std::invalid_argument("lr schedule needs at least one breakpoint");
    if (points_.front().first != 0) throw std::invalid_argument("lr schedule must start at epoch 0");
    for (std::size_t i = 1; i < points_.size(); ++i)
        if (points_[i].first <= points_[i - 1].first)
            throw std::invalid_argument("lr schedule epochs must be strictly increasing");
    for (const auto& [e, lr] : points_)
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr schedule rates must be finite and >= 0");
}

double LrSchedule::at(std::size_t epoch) const {
    double lr = points_.empty() ? 0.0 : points_.front().second;
    for (const auto& [e, r] : points_)
        if (e <= epoch) lr = r;
    return lr;
}

}  // namespace hdst
