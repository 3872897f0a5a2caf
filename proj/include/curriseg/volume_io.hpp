#pragma once

#include <optional>
#include <string>
#include <vector>

#include "curriseg/volume.hpp"

namespace curriseg {

// Raw format: versioned little-endian container for one Volume (float32
// payload) or one Mask (uint8 payload). Bytes are a pure function of the
// object, so round-trips are bitwise lossless.
void write_raw(const Volume& volume, const std::string& path);
void write_raw(const Mask& mask, const std::string& path);
Volume read_raw_volume(const std::string& path);
Mask read_raw_mask(const std::string& path);

struct CaseEntry {
    std::string id;
    std::string volume_path;  // relative to the manifest's directory
    std::string mask_path;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::vector<CaseEntry> cases;
    uint64_t seed = 0;
    std::string config_hash;
};

void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Resolve a manifest-relative path against the manifest file's directory.
std::string manifest_relative(const std::string& manifest_path, const std::string& entry_path);

struct NiftiResult {
    Volume volume;
    // Present when the file stores integer data whose values are all in
    // {0,1,2}: the same grid interpreted as a label mask.
    std::optional<Mask> labels;
};

// Minimal NIfTI-1 reader: single-file .nii (magic "n+1\0"), optionally
// gzipped, little-endian, datatypes uint8/int16/float32. Orientation
// matrices are ignored with a warning.
NiftiResult read_nifti(const std::string& path);

}  // namespace curriseg
