#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "curriseg/tensor.hpp"

namespace curriseg {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamConfig hyper;
    int64_t step_count = 0;
    // Moment buffers keyed by parameter name, allocated on first update.
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
};

// One Adam update with bias correction over every trainable parameter.
// Throws if a trainable parameter has no populated gradient.
void optimizer_step(std::vector<Parameter>& params, OptimizerState& state);

void zero_gradients(std::vector<Parameter>& params);

}  // namespace curriseg
