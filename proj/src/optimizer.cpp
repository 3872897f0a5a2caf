#include "curriseg/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace curriseg {

void optimizer_step(std::vector<Parameter>& params, OptimizerState& state) {
    state.step_count += 1;
    const double b1 = state.hyper.beta1;
    const double b2 = state.hyper.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (auto& p : params) {
        if (!p.trainable) continue;
        if (!p.tensor.has_grad())
            throw std::invalid_argument("optimizer_step: trainable parameter '" + p.name +
                                        "' has no gradient");
        const size_t n = static_cast<size_t>(p.tensor.numel());
        auto& m = state.m[p.name];
        auto& v = state.v[p.name];
        if (m.empty()) m.assign(n, 0.0);
        if (v.empty()) v.assign(n, 0.0);
        if (m.size() != n || v.size() != n)
            throw std::invalid_argument("optimizer_step: moment buffers for '" + p.name +
                                        "' do not match the parameter shape");
        const auto& g = p.tensor.grad();
        double* val = p.tensor.data();
        for (size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / corr1;
            const double vhat = v[i] / corr2;
            val[i] -= state.hyper.lr * mhat / (std::sqrt(vhat) + state.hyper.eps);
        }
    }
}

void zero_gradients(std::vector<Parameter>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace curriseg
