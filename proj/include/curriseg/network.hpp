#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "curriseg/tensor.hpp"
#include "curriseg/volume.hpp"

namespace curriseg {

// Residual encoder-decoder with stride-2 downsampling convs, transposed-conv
// upsampling, skip concatenation, and a sigmoid head.
struct NetworkConfig {
    int base_channels = 16;
    int channel_cap = 128;
    int levels = 4;
    std::vector<int> blocks_per_level{1, 2, 2, 4};
    int kernel = 3;  // odd; residual-block conv size
    int in_channels = 1;
    int out_channels = 1;
};

void validate(const NetworkConfig& cfg);

// Desk-scale profile used by the bundled experiments.
NetworkConfig desk_network_config();

int channels_at_level(int base, int level, int cap);

struct Network {
    NetworkConfig config;
    std::vector<Parameter> params;  // build order; names unique

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);

    std::map<std::string, int> index;  // name -> position in params
};

Network build_network(const NetworkConfig& cfg, uint64_t seed);

// Total trainable scalar count; pure in the config.
int64_t param_count(const NetworkConfig& cfg);

// x is [N, in_channels, D, H, W] with D,H,W divisible by 2^(levels-1).
// Returns per-voxel probabilities of the same spatial shape.
Tensor forward(const Network& net, const Tensor& x);

// Sliding z-window inference over a preprocessed volume: windows of
// window_depth at window_stride (end-aligned), overlaps resolved by
// averaging probabilities. Volumes shorter than the window are zero-padded.
Volume predict_probabilities(const Network& net, const Volume& v, int window_depth,
                             int window_stride);
Mask predict_mask(const Network& net, const Volume& v, int window_depth, int window_stride,
                  double threshold = 0.5);

}  // namespace curriseg
