#include "curriseg/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "curriseg/errors.hpp"

namespace curriseg {

namespace {

using nlohmann::json;

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known)
            throw DataError(std::string("unknown config key \"") + key + "\" in " + where);
    }
}

json to_json(const Spacing& s) { return json::array({s.z, s.y, s.x}); }
json to_json(const Dims& d) { return json::array({d.d, d.h, d.w}); }

Spacing spacing_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw DataError("spacing must be a [z, y, x] array");
    return Spacing{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Dims dims_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw DataError("dims must be a [d, h, w] array");
    return Dims{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

json phantom_to_json(const PhantomConfig& c) {
    return json{{"dims", to_json(c.dims)},
                {"spacing_mm", to_json(c.spacing_mm)},
                {"background_hu", c.background_hu},
                {"background_sigma", c.background_sigma},
                {"liver_hu", c.liver_hu},
                {"liver_sigma", c.liver_sigma},
                {"tumor_hu", c.tumor_hu},
                {"tumor_sigma", c.tumor_sigma},
                {"min_tumors", c.min_tumors},
                {"max_tumors", c.max_tumors},
                {"tumor_radius_min_mm", c.tumor_radius_min_mm},
                {"tumor_radius_max_mm", c.tumor_radius_max_mm},
                {"smooth_sigma_voxels", c.smooth_sigma_voxels},
                {"noise_sigma_hu", c.noise_sigma_hu}};
}

void phantom_from_json(const json& j, PhantomConfig& c) {
    check_keys(j,
               {"dims", "spacing_mm", "background_hu", "background_sigma", "liver_hu",
                "liver_sigma", "tumor_hu", "tumor_sigma", "min_tumors", "max_tumors",
                "tumor_radius_min_mm", "tumor_radius_max_mm", "smooth_sigma_voxels",
                "noise_sigma_hu"},
               "phantom");
    if (j.contains("dims")) c.dims = dims_from(j["dims"]);
    if (j.contains("spacing_mm")) c.spacing_mm = spacing_from(j["spacing_mm"]);
    c.background_hu = j.value("background_hu", c.background_hu);
    c.background_sigma = j.value("background_sigma", c.background_sigma);
    c.liver_hu = j.value("liver_hu", c.liver_hu);
    c.liver_sigma = j.value("liver_sigma", c.liver_sigma);
    c.tumor_hu = j.value("tumor_hu", c.tumor_hu);
    c.tumor_sigma = j.value("tumor_sigma", c.tumor_sigma);
    c.min_tumors = j.value("min_tumors", c.min_tumors);
    c.max_tumors = j.value("max_tumors", c.max_tumors);
    c.tumor_radius_min_mm = j.value("tumor_radius_min_mm", c.tumor_radius_min_mm);
    c.tumor_radius_max_mm = j.value("tumor_radius_max_mm", c.tumor_radius_max_mm);
    c.smooth_sigma_voxels = j.value("smooth_sigma_voxels", c.smooth_sigma_voxels);
    c.noise_sigma_hu = j.value("noise_sigma_hu", c.noise_sigma_hu);
}

json preprocess_to_json(const PreprocessConfig& c) {
    return json{{"target_spacing", to_json(c.target_spacing)},
                {"window_lo", c.window_lo},
                {"window_hi", c.window_hi},
                {"z_margin", c.z_margin},
                {"subvol_depth", c.subvol_depth},
                {"subvol_stride", c.subvol_stride},
                {"inplane_h", c.inplane_h},
                {"inplane_w", c.inplane_w},
                {"patch_round_multiple", c.patch_round_multiple}};
}

void preprocess_from_json(const json& j, PreprocessConfig& c) {
    check_keys(j,
               {"target_spacing", "window_lo", "window_hi", "z_margin", "subvol_depth",
                "subvol_stride", "inplane_h", "inplane_w", "patch_round_multiple"},
               "preprocess");
    if (j.contains("target_spacing")) c.target_spacing = spacing_from(j["target_spacing"]);
    c.window_lo = j.value("window_lo", c.window_lo);
    c.window_hi = j.value("window_hi", c.window_hi);
    c.z_margin = j.value("z_margin", c.z_margin);
    c.subvol_depth = j.value("subvol_depth", c.subvol_depth);
    c.subvol_stride = j.value("subvol_stride", c.subvol_stride);
    c.inplane_h = j.value("inplane_h", c.inplane_h);
    c.inplane_w = j.value("inplane_w", c.inplane_w);
    c.patch_round_multiple = j.value("patch_round_multiple", c.patch_round_multiple);
}

json network_to_json(const NetworkConfig& c) {
    return json{{"base_channels", c.base_channels}, {"channel_cap", c.channel_cap},
                {"levels", c.levels},               {"blocks_per_level", c.blocks_per_level},
                {"kernel", c.kernel},               {"in_channels", c.in_channels},
                {"out_channels", c.out_channels}};
}

void network_from_json(const json& j, NetworkConfig& c) {
    check_keys(j,
               {"base_channels", "channel_cap", "levels", "blocks_per_level", "kernel",
                "in_channels", "out_channels"},
               "network");
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_cap = j.value("channel_cap", c.channel_cap);
    c.levels = j.value("levels", c.levels);
    if (j.contains("blocks_per_level"))
        c.blocks_per_level = j["blocks_per_level"].get<std::vector<int>>();
    c.kernel = j.value("kernel", c.kernel);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
}

}  // namespace

const char* schedule_kind_name(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::three_stage: return "three_stage";
        case ScheduleKind::naive: return "naive";
        case ScheduleKind::whole_to_patch: return "whole_to_patch";
        case ScheduleKind::patch_to_whole: return "patch_to_whole";
        case ScheduleKind::cascade: return "cascade";
    }
    throw std::logic_error("unreachable schedule kind");
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
    std::string canon = name;
    for (char& c : canon)
        if (c == '-') c = '_';
    for (ScheduleKind k : all_schedule_kinds())
        if (canon == schedule_kind_name(k)) return k;
    throw DataError("unknown schedule \"" + name +
                    "\" (expected three-stage, naive, whole-to-patch, patch-to-whole, or cascade)");
}

std::vector<ScheduleKind> all_schedule_kinds() {
    return {ScheduleKind::three_stage, ScheduleKind::naive, ScheduleKind::whole_to_patch,
            ScheduleKind::patch_to_whole, ScheduleKind::cascade};
}

ExperimentConfig::ExperimentConfig() {
    network = desk_network_config();
    // Phantoms are generated on the target grid already, so the default chain
    // resamples by identity.
    preprocess.target_spacing = phantom.spacing_mm;
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.data_root.empty() || cfg.output_root.empty())
        throw DataError("data_root and output_root must be non-empty");
    if (cfg.phantom_cases < 2) throw DataError("phantom_cases must be at least 2");
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
        throw DataError("split_fraction must lie strictly between 0 and 1");
    if (!(cfg.base_lr > 0.0)) throw DataError("base_lr must be positive");
    if (cfg.epochs_per_stage <= 0) throw DataError("epochs_per_stage must be positive");
    if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0))
        throw DataError("threshold must lie strictly between 0 and 1");
    validate(cfg.phantom);
    validate(cfg.preprocess);
    validate(cfg.network);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["data_root"] = cfg.data_root;
    j["output_root"] = cfg.output_root;
    j["phantom"] = phantom_to_json(cfg.phantom);
    j["phantom_cases"] = cfg.phantom_cases;
    j["split_fraction"] = cfg.split_fraction;
    j["preprocess"] = preprocess_to_json(cfg.preprocess);
    j["network"] = network_to_json(cfg.network);
    j["schedule"] = schedule_kind_name(cfg.schedule);
    j["base_lr"] = cfg.base_lr;
    j["epochs_per_stage"] = cfg.epochs_per_stage;
    j["seed"] = cfg.seed;
    j["threshold"] = cfg.threshold;
    j["deterministic"] = cfg.deterministic;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        if (!j.is_object()) throw DataError("config document must be a JSON object");
        check_keys(j,
                   {"data_root", "output_root", "phantom", "phantom_cases", "split_fraction",
                    "preprocess", "network", "schedule", "base_lr", "epochs_per_stage", "seed",
                    "threshold", "deterministic"},
                   "config");
        ExperimentConfig cfg;
        cfg.data_root = j.value("data_root", cfg.data_root);
        cfg.output_root = j.value("output_root", cfg.output_root);
        if (j.contains("phantom")) phantom_from_json(j["phantom"], cfg.phantom);
        cfg.phantom_cases = j.value("phantom_cases", cfg.phantom_cases);
        cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
        if (j.contains("preprocess")) preprocess_from_json(j["preprocess"], cfg.preprocess);
        if (j.contains("network")) network_from_json(j["network"], cfg.network);
        if (j.contains("schedule"))
            cfg.schedule = schedule_kind_from_name(j["schedule"].get<std::string>());
        cfg.base_lr = j.value("base_lr", cfg.base_lr);
        cfg.epochs_per_stage = j.value("epochs_per_stage", cfg.epochs_per_stage);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.threshold = j.value("threshold", cfg.threshold);
        cfg.deterministic = j.value("deterministic", cfg.deterministic);
        return cfg;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json(buf.str());
}

std::string config_hash(const ExperimentConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_to_json(cfg))));
    return buf;
}

std::string network_config_to_json(const NetworkConfig& cfg) {
    return network_to_json(cfg).dump(2) + "\n";
}

NetworkConfig network_config_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        if (!j.is_object()) throw DataError("network config must be a JSON object");
        NetworkConfig cfg;
        network_from_json(j, cfg);
        return cfg;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed network config: ") + e.what());
    }
}

}  // namespace curriseg
