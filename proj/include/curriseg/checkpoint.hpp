#pragma once

#include <string>
#include <vector>

#include "curriseg/optimizer.hpp"
#include "curriseg/tensor.hpp"

namespace curriseg {

// Flat parameter archive: format version, an opaque JSON metadata blob chosen
// by the caller (network topology, seed, config hash), every parameter as
// name + shape + little-endian float64 buffer, and optionally Adam state.
// Byte output is a pure function of the contents.
struct CheckpointData {
    std::string meta_json;
    std::vector<Parameter> params;
    bool has_optimizer = false;
    OptimizerState opt;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace curriseg
