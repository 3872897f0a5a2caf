#pragma once

#include <array>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "curriseg/volume.hpp"
#include "curriseg/volume_io.hpp"

namespace curriseg {

struct PreprocessConfig {
    Spacing target_spacing{1.0, 1.0, 1.0};
    double window_lo = -200.0;
    double window_hi = 250.0;
    int z_margin = 2;
    int subvol_depth = 16;
    int subvol_stride = 8;
    int inplane_h = 64;
    int inplane_w = 64;
    // Patch dims round up to this; must be a power of two at least as large
    // as the network's total downsampling factor.
    int patch_round_multiple = 8;
};

void validate(const PreprocessConfig& cfg);

enum class SampleKind { whole, patch_positive, patch_negative };
const char* sample_kind_name(SampleKind kind);
SampleKind sample_kind_from(const std::string& name);

struct Sample {
    Volume image;  // normalized [0,1]
    Mask target;   // binary
    SampleKind kind = SampleKind::whole;
    std::string case_id;
    int origin[3] = {0, 0, 0};  // sample (0,0,0) in its source grid; may be negative when padded
};

// Trilinear (volume) / nearest (mask) resize with the voxel-center
// convention: source coord = (i + 0.5) * src/dst - 0.5, clamped.
Volume resize_to_dims(const Volume& v, Dims out_dims);
Mask resize_to_dims(const Mask& m, Dims out_dims);

// New dims = round(old_dim * old_spacing / target_spacing), min 1.
Volume resample(const Volume& v, Spacing target);
Mask resample(const Mask& m, Spacing target);

Volume window_transform(const Volume& v, double lo, double hi);

// Crop along z to the foreground range of the mask plus a margin. Throws
// DataError("no foreground") when the mask is empty.
std::pair<Volume, Mask> effective_range(const Volume& v, const Mask& m, int z_margin);

// Window start offsets covering [0, extent) with a final end-aligned window;
// deduplicated, ascending. Requires extent >= window.
std::vector<int> subvolume_starts(int extent, int window, int stride);

// In-plane downscale to (inplane_h, inplane_w), then z windows of
// subvol_depth at subvol_stride (end-aligned, zero-padded when too short).
// Targets binarize the given label.
std::vector<Sample> generate_subvolumes(const Volume& v, const Mask& m, const PreprocessConfig& cfg,
                                        const std::string& case_id, int target_label = 2);

// Per-axis max over all tumor connected-component bounding boxes across the
// masks, rounded up to round_multiple. Throws when no tumor exists anywhere.
Dims max_tumor_extent(const std::vector<Mask>& masks, int round_multiple);

// One positive patch per tumor component: bounding-box center plus uniform
// jitter up to a quarter of the patch extent per axis, clipped; guaranteed to
// contain at least one tumor voxel.
std::vector<Sample> extract_tumor_patches(const Volume& v, const Mask& m, Dims patch_dims,
                                          const std::string& case_id, std::mt19937_64& rng);

// Up to `count` uniformly placed tumor-free patches; rejection sampling
// capped at 100*count attempts (shortfall logged).
std::vector<Sample> extract_negative_patches(const Volume& v, const Mask& m, Dims patch_dims,
                                             int count, const std::string& case_id,
                                             std::mt19937_64& rng);

// Copy the box [start, start+extent) into a fresh grid; coordinates outside
// the source (negative starts included) fill with zero.
Volume crop_with_pad(const Volume& v, const std::array<int, 3>& start, Dims extent);
Mask crop_with_pad(const Mask& m, const std::array<int, 3>& start, Dims extent);

// The full per-case chain: resample -> window -> effective_range (liver
// foreground) -> in-plane downscale. This is the grid predictions and
// evaluations live on.
std::pair<Volume, Mask> preprocess_case(const Volume& v, const Mask& m, const PreprocessConfig& cfg);

// Per-case rng stream seed.
uint64_t case_seed(uint64_t global_seed, const std::string& case_id);

struct SampleStore {
    std::vector<Sample> samples;
    Dims patch_dims;  // (0,0,0) when no patches were generated
    uint64_t seed = 0;
    std::string config_hash;
};

void write_sample_store(const SampleStore& store, const std::string& dir);
SampleStore read_sample_store(const std::string& dir);

struct PreprocessCounts {
    int whole = 0, positive = 0, negative = 0;
    Dims patch_dims;
};

// Runs the chain plus both patch samplers over every train case of the
// dataset and writes a sample store into out_dir.
PreprocessCounts preprocess_dataset(const DatasetManifest& manifest,
                                    const std::string& manifest_path, const PreprocessConfig& cfg,
                                    const std::string& out_dir, uint64_t seed,
                                    const std::string& config_hash);

}  // namespace curriseg
