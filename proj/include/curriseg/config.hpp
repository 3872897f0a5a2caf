#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curriseg/network.hpp"
#include "curriseg/phantom.hpp"
#include "curriseg/preprocess.hpp"

namespace curriseg {

enum class ScheduleKind { three_stage, naive, whole_to_patch, patch_to_whole, cascade };

// Canonical underscore spelling, used in JSON, filenames, and report labels.
const char* schedule_kind_name(ScheduleKind kind);
// Accepts both "three_stage" and the flag spelling "three-stage".
ScheduleKind schedule_kind_from_name(const std::string& name);
std::vector<ScheduleKind> all_schedule_kinds();

// Everything a full experiment needs, serializable as one JSON document.
// Defaults describe the desk-scale profile: the small network and a target
// spacing equal to the phantom grid, so resampling is an identity there.
struct ExperimentConfig {
    std::string data_root = "data";
    std::string output_root = "runs";

    PhantomConfig phantom;
    int phantom_cases = 50;
    double split_fraction = 0.9;

    PreprocessConfig preprocess;
    NetworkConfig network;

    ScheduleKind schedule = ScheduleKind::three_stage;
    double base_lr = 1e-3;
    int epochs_per_stage = 20;

    uint64_t seed = 1;
    double threshold = 0.5;
    bool deterministic = true;

    ExperimentConfig();
};

void validate(const ExperimentConfig& cfg);

// Canonical JSON document (stable key order, 2-space indent).
std::string config_to_json(const ExperimentConfig& cfg);
// Starts from defaults; present keys override, unknown keys are rejected so
// typos fail loudly. Partial documents are valid.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// FNV-1a over the canonical JSON, as 16 hex digits. Identifies a config in
// every output artifact.
std::string config_hash(const ExperimentConfig& cfg);

// Standalone network topology document, embedded in checkpoint metadata so a
// checkpoint alone suffices to rebuild its network.
std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);

}  // namespace curriseg
