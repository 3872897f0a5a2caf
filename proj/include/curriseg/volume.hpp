#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace curriseg {

// Axis order is (z, y, x) everywhere in this codebase; x varies fastest in
// memory. Spacing is physical millimetres per voxel along the same axes.
struct Dims {
    int d = 0, h = 0, w = 0;
    bool operator==(const Dims&) const = default;
    int64_t numel() const { return static_cast<int64_t>(d) * h * w; }
    int operator[](int axis) const { return axis == 0 ? d : axis == 1 ? h : w; }
};

struct Spacing {
    double z = 1.0, y = 1.0, x = 1.0;
    bool operator==(const Spacing&) const = default;
    double operator[](int axis) const { return axis == 0 ? z : axis == 1 ? y : x; }
};

std::string dims_str(const Dims& d);

struct Volume {
    Dims dims;
    Spacing spacing;
    std::vector<float> values;  // HU as read, or [0,1] after windowing
    std::string provenance;

    static Volume create(Dims dims, Spacing spacing, float fill = 0.0f);
    int64_t index(int z, int y, int x) const {
        return (static_cast<int64_t>(z) * dims.h + y) * dims.w + x;
    }
    float at(int z, int y, int x) const { return values[index(z, y, x)]; }
    float& at(int z, int y, int x) { return values[index(z, y, x)]; }
    std::vector<float>& data() { return values; }
    const std::vector<float>& data() const { return values; }
};

// Labels: 0 background, 1 liver, 2 tumor; or {0,1} once binarized.
struct Mask {
    Dims dims;
    Spacing spacing;
    std::vector<uint8_t> labels;
    std::string provenance;

    static Mask create(Dims dims, Spacing spacing, uint8_t fill = 0);
    int64_t index(int z, int y, int x) const {
        return (static_cast<int64_t>(z) * dims.h + y) * dims.w + x;
    }
    uint8_t at(int z, int y, int x) const { return labels[index(z, y, x)]; }
    uint8_t& at(int z, int y, int x) { return labels[index(z, y, x)]; }
    std::vector<uint8_t>& data() { return labels; }
    const std::vector<uint8_t>& data() const { return labels; }
};

struct BoundingBox {
    int lo[3] = {0, 0, 0};  // inclusive, (z,y,x)
    int hi[3] = {0, 0, 0};
    int extent(int axis) const { return hi[axis] - lo[axis] + 1; }
};

// Select one label as foreground. Selecting 1 (liver) also counts tumor
// voxels as liver, since tumors lie inside the liver; selecting 2 matches
// tumor voxels only.
Mask binarize(const Mask& mask, int label);

// Tightest box around the nonzero voxels; nullopt when there are none.
std::optional<BoundingBox> bounding_box(const Mask& mask);

struct Components {
    std::vector<int32_t> labels;  // 0 background, 1..count component ids
    int count = 0;
};

// Labels maximal connected sets of nonzero voxels. Component ids are assigned
// in raster-scan order of each component's first voxel, so output is
// deterministic.
Components connected_components(const Mask& mask, int connectivity);

}  // namespace curriseg
