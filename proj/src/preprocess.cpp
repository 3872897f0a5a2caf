#include "curriseg/preprocess.hpp"

#include <algorithm>
#include <array>
#include <climits>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "curriseg/errors.hpp"
#include "curriseg/log.hpp"

namespace curriseg {

namespace {

constexpr const char* kSampleManifestName = "samples.json";

int64_t clampi(int64_t v, int64_t lo, int64_t hi) { return std::min(std::max(v, lo), hi); }

// Source coordinate of output sample i under the voxel-center convention.
double src_coord(int i, double scale, int src_dim) {
    double f = (i + 0.5) * scale - 0.5;
    if (f < 0.0) f = 0.0;
    double hi = double(src_dim - 1);
    if (f > hi) f = hi;
    return f;
}

Spacing scaled_spacing(const Spacing& sp, Dims from, Dims to) {
    return Spacing{sp.z * double(from.d) / double(to.d), sp.y * double(from.h) / double(to.h),
                   sp.x * double(from.w) / double(to.w)};
}

Dims resampled_dims(Dims d, const Spacing& sp, const Spacing& target) {
    auto one = [](double extent, double t) {
        return int(std::max<int64_t>(1, std::llround(extent / t)));
    };
    return Dims{one(d.d * sp.z, target.z), one(d.h * sp.y, target.y), one(d.w * sp.x, target.x)};
}

void require_same_grid(const Volume& v, const Mask& m) {
    if (!(v.dims == m.dims))
        throw DataError("volume dims " + dims_str(v.dims) + " and mask dims " + dims_str(m.dims) +
                        " do not match");
}

// Crop starting at a (possibly negative) offset, zero-filling outside the
// source grid.
template <typename Grid>
Grid crop_box(const Grid& g, const std::array<int, 3>& start, Dims out_dims) {
    Grid out = Grid::create(out_dims, g.spacing, 0);
    out.provenance = g.provenance;
    int x0 = std::max(0, -start[2]);
    int x1 = std::min<int>(out_dims.w, g.dims.w - start[2]);
    if (x1 <= x0) return out;
    for (int oz = 0; oz < out_dims.d; ++oz) {
        int iz = start[0] + oz;
        if (iz < 0 || iz >= g.dims.d) continue;
        for (int oy = 0; oy < out_dims.h; ++oy) {
            int iy = start[1] + oy;
            if (iy < 0 || iy >= g.dims.h) continue;
            auto src = g.data().begin() + g.index(iz, iy, start[2] + x0);
            std::copy(src, src + (x1 - x0), out.data().begin() + out.index(oz, oy, x0));
        }
    }
    return out;
}

int64_t count_nonzero(const Mask& m) {
    int64_t n = 0;
    for (uint8_t v : m.labels) n += v != 0;
    return n;
}

struct ComponentBoxes {
    std::vector<std::array<int, 3>> lo, hi;
    std::vector<int64_t> first_voxel;  // raster index of the first voxel per component
};

ComponentBoxes component_boxes(const Components& comps, Dims dims) {
    ComponentBoxes b;
    b.lo.assign(comps.count, {INT_MAX, INT_MAX, INT_MAX});
    b.hi.assign(comps.count, {-1, -1, -1});
    b.first_voxel.assign(comps.count, -1);
    int64_t i = 0;
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x, ++i) {
                int32_t c = comps.labels[i];
                if (c == 0) continue;
                auto& lo = b.lo[c - 1];
                auto& hi = b.hi[c - 1];
                lo = {std::min(lo[0], z), std::min(lo[1], y), std::min(lo[2], x)};
                hi = {std::max(hi[0], z), std::max(hi[1], y), std::max(hi[2], x)};
                if (b.first_voxel[c - 1] < 0) b.first_voxel[c - 1] = i;
            }
    return b;
}

std::array<int, 3> clamp_start(const std::array<int, 3>& want, Dims grid, Dims patch) {
    std::array<int, 3> s;
    for (int a = 0; a < 3; ++a) {
        int lo = std::min(0, grid[a] - patch[a]);
        int hi = std::max(0, grid[a] - patch[a]);
        s[a] = int(clampi(want[a], lo, hi));
    }
    return s;
}

bool has_foreground(const Mask& m) {
    return std::any_of(m.labels.begin(), m.labels.end(), [](uint8_t v) { return v != 0; });
}

std::pair<Volume, Mask> inplane_downscale(const Volume& v, const Mask& m,
                                          const PreprocessConfig& cfg) {
    Dims nd{v.dims.d, cfg.inplane_h, cfg.inplane_w};
    return {resize_to_dims(v, nd), resize_to_dims(m, nd)};
}

std::pair<Volume, Mask> preprocess_chain(const Volume& v, const Mask& m,
                                         const PreprocessConfig& cfg) {
    require_same_grid(v, m);
    Volume rv = resample(v, cfg.target_spacing);
    Mask rm = resample(m, cfg.target_spacing);
    rv = window_transform(rv, cfg.window_lo, cfg.window_hi);
    return effective_range(rv, rm, cfg.z_margin);
}

}  // namespace

void validate(const PreprocessConfig& cfg) {
    if (cfg.window_hi <= cfg.window_lo) throw DataError("window_hi must exceed window_lo");
    if (cfg.target_spacing.z <= 0 || cfg.target_spacing.y <= 0 || cfg.target_spacing.x <= 0)
        throw DataError("target_spacing components must be positive");
    if (cfg.z_margin < 0) throw DataError("z_margin must be non-negative");
    if (cfg.subvol_depth < 1) throw DataError("subvol_depth must be at least 1");
    if (cfg.subvol_stride < 1 || cfg.subvol_stride > cfg.subvol_depth)
        throw DataError("subvol_stride must be in [1, subvol_depth]");
    if (cfg.inplane_h < 1 || cfg.inplane_w < 1) throw DataError("inplane size must be positive");
    if (cfg.patch_round_multiple < 1) throw DataError("patch_round_multiple must be at least 1");
}

const char* sample_kind_name(SampleKind kind) {
    switch (kind) {
        case SampleKind::whole: return "whole";
        case SampleKind::patch_positive: return "patch_positive";
        case SampleKind::patch_negative: return "patch_negative";
    }
    throw std::logic_error("bad SampleKind");
}

SampleKind sample_kind_from(const std::string& name) {
    if (name == "whole") return SampleKind::whole;
    if (name == "patch_positive") return SampleKind::patch_positive;
    if (name == "patch_negative") return SampleKind::patch_negative;
    throw DataError("unknown sample kind \"" + name + "\"");
}

Volume resize_to_dims(const Volume& v, Dims out_dims) {
    if (out_dims.d < 1 || out_dims.h < 1 || out_dims.w < 1)
        throw DataError("resize target dims must be positive");
    if (out_dims == v.dims) return v;
    Volume out = Volume::create(out_dims, scaled_spacing(v.spacing, v.dims, out_dims), 0.0f);
    out.provenance = v.provenance;
    double sz = double(v.dims.d) / out_dims.d;
    double sy = double(v.dims.h) / out_dims.h;
    double sx = double(v.dims.w) / out_dims.w;
    int64_t i = 0;
    for (int z = 0; z < out_dims.d; ++z) {
        double fz = src_coord(z, sz, v.dims.d);
        int z0 = int(fz), z1 = std::min(z0 + 1, v.dims.d - 1);
        double tz = fz - z0;
        for (int y = 0; y < out_dims.h; ++y) {
            double fy = src_coord(y, sy, v.dims.h);
            int y0 = int(fy), y1 = std::min(y0 + 1, v.dims.h - 1);
            double ty = fy - y0;
            for (int x = 0; x < out_dims.w; ++x, ++i) {
                double fx = src_coord(x, sx, v.dims.w);
                int x0 = int(fx), x1 = std::min(x0 + 1, v.dims.w - 1);
                double tx = fx - x0;
                double c00 = v.at(z0, y0, x0) + tx * (v.at(z0, y0, x1) - v.at(z0, y0, x0));
                double c01 = v.at(z0, y1, x0) + tx * (v.at(z0, y1, x1) - v.at(z0, y1, x0));
                double c10 = v.at(z1, y0, x0) + tx * (v.at(z1, y0, x1) - v.at(z1, y0, x0));
                double c11 = v.at(z1, y1, x0) + tx * (v.at(z1, y1, x1) - v.at(z1, y1, x0));
                double c0 = c00 + ty * (c01 - c00);
                double c1 = c10 + ty * (c11 - c10);
                out.values[i] = float(c0 + tz * (c1 - c0));
            }
        }
    }
    return out;
}

Mask resize_to_dims(const Mask& m, Dims out_dims) {
    if (out_dims.d < 1 || out_dims.h < 1 || out_dims.w < 1)
        throw DataError("resize target dims must be positive");
    if (out_dims == m.dims) return m;
    Mask out = Mask::create(out_dims, scaled_spacing(m.spacing, m.dims, out_dims), 0);
    out.provenance = m.provenance;
    double sz = double(m.dims.d) / out_dims.d;
    double sy = double(m.dims.h) / out_dims.h;
    double sx = double(m.dims.w) / out_dims.w;
    int64_t i = 0;
    for (int z = 0; z < out_dims.d; ++z) {
        int iz = int(std::llround(src_coord(z, sz, m.dims.d)));
        for (int y = 0; y < out_dims.h; ++y) {
            int iy = int(std::llround(src_coord(y, sy, m.dims.h)));
            for (int x = 0; x < out_dims.w; ++x, ++i) {
                int ix = int(std::llround(src_coord(x, sx, m.dims.w)));
                out.labels[i] = m.at(iz, iy, ix);
            }
        }
    }
    return out;
}

Volume resample(const Volume& v, Spacing target) {
    if (target.z <= 0 || target.y <= 0 || target.x <= 0)
        throw DataError("target spacing must be positive");
    Volume out = resize_to_dims(v, resampled_dims(v.dims, v.spacing, target));
    out.spacing = target;
    return out;
}

Mask resample(const Mask& m, Spacing target) {
    if (target.z <= 0 || target.y <= 0 || target.x <= 0)
        throw DataError("target spacing must be positive");
    Mask out = resize_to_dims(m, resampled_dims(m.dims, m.spacing, target));
    out.spacing = target;
    return out;
}

Volume window_transform(const Volume& v, double lo, double hi) {
    if (hi <= lo) throw DataError("window upper bound must exceed lower bound");
    Volume out = v;
    double inv = 1.0 / (hi - lo);
    for (float& f : out.values) {
        double c = std::min(std::max(double(f), lo), hi);
        f = float((c - lo) * inv);
    }
    return out;
}

std::pair<Volume, Mask> effective_range(const Volume& v, const Mask& m, int z_margin) {
    require_same_grid(v, m);
    if (z_margin < 0) throw DataError("z_margin must be non-negative");
    int64_t slice = int64_t(m.dims.h) * m.dims.w;
    int zmin = -1, zmax = -1;
    for (int z = 0; z < m.dims.d; ++z) {
        auto begin = m.labels.begin() + z * slice;
        bool any = std::any_of(begin, begin + slice, [](uint8_t u) { return u != 0; });
        if (!any) continue;
        if (zmin < 0) zmin = z;
        zmax = z;
    }
    if (zmin < 0) throw DataError("no foreground in mask; cannot derive effective range");
    int lo = std::max(0, zmin - z_margin);
    int hi = std::min(m.dims.d - 1, zmax + z_margin);
    Dims nd{hi - lo + 1, m.dims.h, m.dims.w};
    std::array<int, 3> start{lo, 0, 0};
    return {crop_box(v, start, nd), crop_box(m, start, nd)};
}

std::vector<int> subvolume_starts(int extent, int window, int stride) {
    if (window < 1 || stride < 1) throw DataError("window and stride must be positive");
    if (extent < window) throw DataError("extent smaller than window");
    std::vector<int> starts;
    for (int s = 0; s + window <= extent; s += stride) starts.push_back(s);
    if (starts.back() + window < extent) starts.push_back(extent - window);
    return starts;
}

std::vector<Sample> generate_subvolumes(const Volume& v, const Mask& m,
                                        const PreprocessConfig& cfg, const std::string& case_id,
                                        int target_label) {
    validate(cfg);
    require_same_grid(v, m);
    auto [dv, dm] = inplane_downscale(v, m, cfg);
    Mask target = binarize(dm, target_label);
    int depth = cfg.subvol_depth;
    std::vector<int> starts =
        dv.dims.d >= depth ? subvolume_starts(dv.dims.d, depth, cfg.subvol_stride)
                           : std::vector<int>{0};
    Dims sd{depth, dv.dims.h, dv.dims.w};
    std::vector<Sample> out;
    out.reserve(starts.size());
    for (int s : starts) {
        std::array<int, 3> origin{s, 0, 0};
        Sample smp;
        smp.image = crop_box(dv, origin, sd);
        smp.target = crop_box(target, origin, sd);
        smp.kind = SampleKind::whole;
        smp.case_id = case_id;
        smp.origin[0] = s;
        out.push_back(std::move(smp));
    }
    return out;
}

Dims max_tumor_extent(const std::vector<Mask>& masks, int round_multiple) {
    if (round_multiple < 1) throw DataError("round multiple must be at least 1");
    std::array<int, 3> ext{0, 0, 0};
    for (const Mask& m : masks) {
        Mask tum = binarize(m, 2);
        if (!has_foreground(tum)) continue;
        Components comps = connected_components(tum, 26);
        ComponentBoxes boxes = component_boxes(comps, m.dims);
        for (int c = 0; c < comps.count; ++c)
            for (int a = 0; a < 3; ++a) ext[a] = std::max(ext[a], boxes.hi[c][a] - boxes.lo[c][a] + 1);
    }
    if (ext[0] == 0) throw DataError("no tumor components found in any mask");
    auto round_up = [round_multiple](int v) {
        return (v + round_multiple - 1) / round_multiple * round_multiple;
    };
    return Dims{round_up(ext[0]), round_up(ext[1]), round_up(ext[2])};
}

std::vector<Sample> extract_tumor_patches(const Volume& v, const Mask& m, Dims patch_dims,
                                          const std::string& case_id, std::mt19937_64& rng) {
    require_same_grid(v, m);
    if (patch_dims.d < 1 || patch_dims.h < 1 || patch_dims.w < 1)
        throw DataError("patch dims must be positive");
    Mask tum = binarize(m, 2);
    if (!has_foreground(tum)) return {};
    Components comps = connected_components(tum, 26);
    ComponentBoxes boxes = component_boxes(comps, m.dims);
    std::vector<Sample> out;
    out.reserve(comps.count);
    for (int c = 0; c < comps.count; ++c) {
        std::array<int, 3> want;
        for (int a = 0; a < 3; ++a) {
            int center = (boxes.lo[c][a] + boxes.hi[c][a]) / 2;
            int span = patch_dims[a] / 4;
            int jitter = span > 0 ? int(std::uniform_int_distribution<int>(-span, span)(rng)) : 0;
            want[a] = center - patch_dims[a] / 2 + jitter;
        }
        std::array<int, 3> start = clamp_start(want, m.dims, patch_dims);
        Mask tgt = crop_box(tum, start, patch_dims);
        if (!has_foreground(tgt)) {
            // Jitter can push a small component out of frame; recenter on it.
            int64_t fv = boxes.first_voxel[c];
            std::array<int, 3> voxel{int(fv / (int64_t(m.dims.h) * m.dims.w)),
                                     int(fv / m.dims.w % m.dims.h), int(fv % m.dims.w)};
            for (int a = 0; a < 3; ++a) want[a] = voxel[a] - patch_dims[a] / 2;
            start = clamp_start(want, m.dims, patch_dims);
            tgt = crop_box(tum, start, patch_dims);
        }
        Sample smp;
        smp.image = crop_box(v, start, patch_dims);
        smp.target = std::move(tgt);
        smp.kind = SampleKind::patch_positive;
        smp.case_id = case_id;
        for (int a = 0; a < 3; ++a) smp.origin[a] = start[a];
        out.push_back(std::move(smp));
    }
    return out;
}

std::vector<Sample> extract_negative_patches(const Volume& v, const Mask& m, Dims patch_dims,
                                             int count, const std::string& case_id,
                                             std::mt19937_64& rng) {
    require_same_grid(v, m);
    if (patch_dims.d < 1 || patch_dims.h < 1 || patch_dims.w < 1)
        throw DataError("patch dims must be positive");
    if (count < 0) throw DataError("negative patch count must be non-negative");
    Mask tum = binarize(m, 2);
    std::vector<Sample> out;
    std::array<std::uniform_int_distribution<int>, 3> dist;
    for (int a = 0; a < 3; ++a)
        dist[a] = std::uniform_int_distribution<int>(std::min(0, m.dims[a] - patch_dims[a]),
                                                     std::max(0, m.dims[a] - patch_dims[a]));
    int64_t attempts = 0, cap = 100 * int64_t(count);
    while (int(out.size()) < count && attempts < cap) {
        ++attempts;
        std::array<int, 3> start{dist[0](rng), dist[1](rng), dist[2](rng)};
        Mask tgt = crop_box(tum, start, patch_dims);
        if (has_foreground(tgt)) continue;
        Sample smp;
        smp.image = crop_box(v, start, patch_dims);
        smp.target = std::move(tgt);
        smp.kind = SampleKind::patch_negative;
        smp.case_id = case_id;
        for (int a = 0; a < 3; ++a) smp.origin[a] = start[a];
        out.push_back(std::move(smp));
    }
    if (int(out.size()) < count)
        log_warn("case " + case_id + ": found only " + std::to_string(out.size()) + " of " +
                 std::to_string(count) + " tumor-free patches");
    return out;
}

Volume crop_with_pad(const Volume& v, const std::array<int, 3>& start, Dims extent) {
    return crop_box(v, start, extent);
}

Mask crop_with_pad(const Mask& m, const std::array<int, 3>& start, Dims extent) {
    return crop_box(m, start, extent);
}

std::pair<Volume, Mask> preprocess_case(const Volume& v, const Mask& m,
                                        const PreprocessConfig& cfg) {
    validate(cfg);
    auto [cv, cm] = preprocess_chain(v, m, cfg);
    return inplane_downscale(cv, cm, cfg);
}

uint64_t case_seed(uint64_t global_seed, const std::string& case_id) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : case_id) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return global_seed ^ h;
}

void write_sample_store(const SampleStore& store, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json j;
    j["seed"] = store.seed;
    j["config_hash"] = store.config_hash;
    j["patch_dims"] = {store.patch_dims.d, store.patch_dims.h, store.patch_dims.w};
    nlohmann::json list = nlohmann::json::array();
    for (size_t i = 0; i < store.samples.size(); ++i) {
        const Sample& s = store.samples[i];
        char stem[32];
        std::snprintf(stem, sizeof stem, "s%05zu", i);
        std::string img = std::string(stem) + "_img.raw";
        std::string tgt = std::string(stem) + "_tgt.raw";
        write_raw(s.image, (fs::path(dir) / img).string());
        write_raw(s.target, (fs::path(dir) / tgt).string());
        list.push_back({{"case", s.case_id},
                        {"kind", sample_kind_name(s.kind)},
                        {"origin", {s.origin[0], s.origin[1], s.origin[2]}},
                        {"image", img},
                        {"target", tgt}});
    }
    j["samples"] = std::move(list);
    std::ofstream f(fs::path(dir) / kSampleManifestName, std::ios::binary);
    if (!f) throw DataError("cannot write sample manifest in " + dir);
    f << j.dump(2) << "\n";
}

SampleStore read_sample_store(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream f(fs::path(dir) / kSampleManifestName, std::ios::binary);
    if (!f) throw DataError("cannot open sample manifest in " + dir);
    SampleStore store;
    try {
        nlohmann::json j = nlohmann::json::parse(f);
        store.seed = j.at("seed").get<uint64_t>();
        store.config_hash = j.at("config_hash").get<std::string>();
        auto pd = j.at("patch_dims");
        store.patch_dims = Dims{pd.at(0).get<int>(), pd.at(1).get<int>(), pd.at(2).get<int>()};
        for (const auto& e : j.at("samples")) {
            Sample s;
            s.case_id = e.at("case").get<std::string>();
            s.kind = sample_kind_from(e.at("kind").get<std::string>());
            auto org = e.at("origin");
            for (int a = 0; a < 3; ++a) s.origin[a] = org.at(a).get<int>();
            s.image = read_raw_volume((fs::path(dir) / e.at("image").get<std::string>()).string());
            s.target = read_raw_mask((fs::path(dir) / e.at("target").get<std::string>()).string());
            if (!(s.image.dims == s.target.dims))
                throw DataError("sample image/target dims differ in " + dir);
            store.samples.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed sample manifest in " + dir + ": " + e.what());
    }
    return store;
}

PreprocessCounts preprocess_dataset(const DatasetManifest& manifest,
                                    const std::string& manifest_path, const PreprocessConfig& cfg,
                                    const std::string& out_dir, uint64_t seed,
                                    const std::string& config_hash) {
    validate(cfg);
    struct CaseData {
        std::string id;
        Volume vol;
        Mask mask;
    };
    std::vector<CaseData> cases;
    for (const CaseEntry& e : manifest.cases) {
        if (e.split != "train") continue;
        Volume v = read_raw_volume(manifest_relative(manifest_path, e.volume_path));
        Mask m = read_raw_mask(manifest_relative(manifest_path, e.mask_path));
        auto [cv, cm] = preprocess_chain(v, m, cfg);
        cases.push_back({e.id, std::move(cv), std::move(cm)});
    }
    if (cases.empty()) throw DataError("dataset has no training cases");

    SampleStore store;
    store.seed = seed;
    store.config_hash = config_hash;
    PreprocessCounts counts;
    for (const CaseData& c : cases) {
        auto wholes = generate_subvolumes(c.vol, c.mask, cfg, c.id);
        counts.whole += int(wholes.size());
        std::move(wholes.begin(), wholes.end(), std::back_inserter(store.samples));
    }

    std::vector<Mask> masks;
    masks.reserve(cases.size());
    for (const CaseData& c : cases) masks.push_back(c.mask);
    store.patch_dims = max_tumor_extent(masks, cfg.patch_round_multiple);
    counts.patch_dims = store.patch_dims;

    for (const CaseData& c : cases) {
        std::mt19937_64 rng(case_seed(seed, c.id));
        auto pos = extract_tumor_patches(c.vol, c.mask, store.patch_dims, c.id, rng);
        auto neg = extract_negative_patches(c.vol, c.mask, store.patch_dims,
                                            int(pos.size() + 1) / 2, c.id, rng);
        counts.positive += int(pos.size());
        counts.negative += int(neg.size());
        std::move(pos.begin(), pos.end(), std::back_inserter(store.samples));
        std::move(neg.begin(), neg.end(), std::back_inserter(store.samples));
    }

    write_sample_store(store, out_dir);
    return counts;
}

}  // namespace curriseg
