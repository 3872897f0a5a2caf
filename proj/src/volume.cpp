#include "curriseg/volume.hpp"

#include <array>
#include <sstream>
#include <stdexcept>

namespace curriseg {

std::string dims_str(const Dims& d) {
    std::ostringstream os;
    os << d.d << "x" << d.h << "x" << d.w;
    return os.str();
}

Volume Volume::create(Dims dims, Spacing spacing, float fill) {
    if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0)
        throw std::invalid_argument("volume dims must be positive, got " + dims_str(dims));
    if (spacing.z <= 0 || spacing.y <= 0 || spacing.x <= 0)
        throw std::invalid_argument("volume spacing must be positive");
    Volume v;
    v.dims = dims;
    v.spacing = spacing;
    v.values.assign(static_cast<size_t>(dims.numel()), fill);
    return v;
}

Mask Mask::create(Dims dims, Spacing spacing, uint8_t fill) {
    if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0)
        throw std::invalid_argument("mask dims must be positive, got " + dims_str(dims));
    Mask m;
    m.dims = dims;
    m.spacing = spacing;
    m.labels.assign(static_cast<size_t>(dims.numel()), fill);
    return m;
}

Mask binarize(const Mask& mask, int label) {
    if (label != 1 && label != 2)
        throw std::invalid_argument("binarize: label must be 1 (liver) or 2 (tumor), got " +
                                    std::to_string(label));
    Mask out = mask;
    if (label == 1) {
        for (auto& v : out.labels) v = (v == 1 || v == 2) ? 1 : 0;
    } else {
        for (auto& v : out.labels) v = v == 2 ? 1 : 0;
    }
    return out;
}

std::optional<BoundingBox> bounding_box(const Mask& mask) {
    BoundingBox box;
    bool any = false;
    const auto& d = mask.dims;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                if (!mask.at(z, y, x)) continue;
                if (!any) {
                    box.lo[0] = box.hi[0] = z;
                    box.lo[1] = box.hi[1] = y;
                    box.lo[2] = box.hi[2] = x;
                    any = true;
                } else {
                    const int c[3] = {z, y, x};
                    for (int a = 0; a < 3; ++a) {
                        if (c[a] < box.lo[a]) box.lo[a] = c[a];
                        if (c[a] > box.hi[a]) box.hi[a] = c[a];
                    }
                }
            }
    if (!any) return std::nullopt;
    return box;
}

Components connected_components(const Mask& mask, int connectivity) {
    if (connectivity != 6 && connectivity != 26)
        throw std::invalid_argument("connected_components: connectivity must be 6 or 26, got " +
                                    std::to_string(connectivity));
    const auto& d = mask.dims;
    Components out;
    out.labels.assign(static_cast<size_t>(d.numel()), 0);

    // Neighbor offsets for the requested connectivity.
    std::vector<std::array<int, 3>> offs;
    if (connectivity == 6) {
        offs = {{{-1, 0, 0}}, {{1, 0, 0}}, {{0, -1, 0}}, {{0, 1, 0}}, {{0, 0, -1}}, {{0, 0, 1}}};
    } else {
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (dz || dy || dx) offs.push_back({dz, dy, dx});
    }

    std::vector<int64_t> queue;
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                const int64_t i = mask.index(z, y, x);
                if (!mask.labels[i] || out.labels[i]) continue;
                const int32_t id = ++out.count;
                out.labels[i] = id;
                queue.clear();
                queue.push_back(i);
                while (!queue.empty()) {
                    const int64_t cur = queue.back();
                    queue.pop_back();
                    const int cz = static_cast<int>(cur / (static_cast<int64_t>(d.h) * d.w));
                    const int cy = static_cast<int>(cur / d.w % d.h);
                    const int cx = static_cast<int>(cur % d.w);
                    for (const auto& o : offs) {
                        const int nz = cz + o[0], ny = cy + o[1], nx = cx + o[2];
                        if (nz < 0 || nz >= d.d || ny < 0 || ny >= d.h || nx < 0 || nx >= d.w)
                            continue;
                        const int64_t ni = mask.index(nz, ny, nx);
                        if (mask.labels[ni] && !out.labels[ni]) {
                            out.labels[ni] = id;
                            queue.push_back(ni);
                        }
                    }
                }
            }
    return out;
}

}  // namespace curriseg
