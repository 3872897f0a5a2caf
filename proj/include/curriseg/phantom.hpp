#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "curriseg/volume.hpp"
#include "curriseg/volume_io.hpp"

namespace curriseg {

// Synthetic CT stand-in: one ellipsoid liver (label 1) holding a few
// ellipsoidal tumors (label 2), with per-tissue HU statistics, smoothing,
// and additive noise. All values are generator parameters, not claims about
// clinical statistics.
struct PhantomConfig {
    Dims dims{32, 64, 64};
    Spacing spacing_mm{2.0, 1.0, 1.0};
    double background_hu = -80.0, background_sigma = 20.0;
    double liver_hu = 60.0, liver_sigma = 10.0;
    double tumor_hu = 25.0, tumor_sigma = 10.0;
    int min_tumors = 1, max_tumors = 3;
    double tumor_radius_min_mm = 3.0, tumor_radius_max_mm = 6.0;
    double smooth_sigma_voxels = 1.0;
    double noise_sigma_hu = 8.0;
};

void validate(const PhantomConfig& cfg);

struct Ellipsoid {
    double center[3];  // mm, (z,y,x)
    double radii[3];
};

struct PhantomGeometry {
    Ellipsoid liver;
    std::vector<Ellipsoid> tumors;
};

// Deterministic in (config, seed). Optionally reports the sampled geometry.
std::pair<Volume, Mask> generate_phantom(const PhantomConfig& cfg, uint64_t seed,
                                         PhantomGeometry* geometry = nullptr);

// Writes n_cases phantom volume/mask pairs plus a dataset manifest
// (dataset.json) into out_dir. Split is a seeded shuffle with
// round(n * split_fraction) training cases, clamped so both splits are
// non-empty.
DatasetManifest generate_dataset(const PhantomConfig& cfg, int n_cases, uint64_t seed,
                                 double split_fraction, const std::string& out_dir,
                                 const std::string& config_hash = "");

}  // namespace curriseg
