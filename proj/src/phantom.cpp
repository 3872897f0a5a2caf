#include "curriseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "curriseg/errors.hpp"
#include "curriseg/preprocess.hpp"

namespace curriseg {

namespace {

// Liver semi-axes and center jitter as fractions of the volume half-extent.
constexpr double kLiverSemiLo = 0.55, kLiverSemiHi = 0.75;
constexpr double kCenterJitter = 0.05;
constexpr int kPlacementRetries = 100;

double sq(double v) { return v * v; }

bool inside(const Ellipsoid& e, double z, double y, double x) {
    return sq((z - e.center[0]) / e.radii[0]) + sq((y - e.center[1]) / e.radii[1]) +
               sq((x - e.center[2]) / e.radii[2]) <=
           1.0;
}

// Sufficient condition for tumor ⊂ liver: the liver-normalized distance from
// the liver center to the tumor center, plus the largest tumor radius in
// liver-normalized units, stays within the unit ball.
bool contained(const Ellipsoid& liver, const Ellipsoid& tumor) {
    double dist = 0.0, rmax = 0.0;
    for (int a = 0; a < 3; ++a) {
        dist += sq((tumor.center[a] - liver.center[a]) / liver.radii[a]);
        rmax = std::max(rmax, tumor.radii[a] / liver.radii[a]);
    }
    return std::sqrt(dist) + rmax <= 1.0;
}

void smooth_axis(std::vector<float>& values, Dims dims, int axis, double sigma) {
    int radius = int(std::ceil(3.0 * sigma));
    if (radius < 1) return;
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * sq(i / sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    int n[3] = {dims.d, dims.h, dims.w};
    int64_t stride[3] = {int64_t(dims.h) * dims.w, dims.w, 1};
    std::vector<float> out(values.size());
    for (int z = 0; z < dims.d; ++z)
        for (int y = 0; y < dims.h; ++y)
            for (int x = 0; x < dims.w; ++x) {
                int pos[3] = {z, y, x};
                int64_t base = int64_t(z) * stride[0] + y * stride[1] + x;
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    int p = std::clamp(pos[axis] + i, 0, n[axis] - 1);
                    acc += kernel[i + radius] * values[base + (p - pos[axis]) * stride[axis]];
                }
                out[base] = float(acc);
            }
    values = std::move(out);
}

}  // namespace

void validate(const PhantomConfig& cfg) {
    if (cfg.dims.d < 16 || cfg.dims.h < 16 || cfg.dims.w < 16)
        throw DataError("phantom dims must be at least 16 per axis");
    if (cfg.spacing_mm.z <= 0 || cfg.spacing_mm.y <= 0 || cfg.spacing_mm.x <= 0)
        throw DataError("phantom spacing must be positive");
    if (cfg.min_tumors < 0 || cfg.max_tumors < cfg.min_tumors)
        throw DataError("tumor count range is invalid");
    if (cfg.tumor_radius_min_mm <= 0 || cfg.tumor_radius_max_mm < cfg.tumor_radius_min_mm)
        throw DataError("tumor radius range is invalid");
    if (cfg.background_sigma < 0 || cfg.liver_sigma < 0 || cfg.tumor_sigma < 0 ||
        cfg.noise_sigma_hu < 0 || cfg.smooth_sigma_voxels < 0)
        throw DataError("sigmas must be non-negative");
    double half_extent[3] = {cfg.dims.d * cfg.spacing_mm.z / 2, cfg.dims.h * cfg.spacing_mm.y / 2,
                             cfg.dims.w * cfg.spacing_mm.x / 2};
    double min_semi = kLiverSemiLo * *std::min_element(half_extent, half_extent + 3);
    if (cfg.tumor_radius_max_mm > 0.5 * min_semi)
        throw DataError("tumor radii too large for the liver that fits these dims");
}

std::pair<Volume, Mask> generate_phantom(const PhantomConfig& cfg, uint64_t seed,
                                         PhantomGeometry* geometry) {
    validate(cfg);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    double extent[3] = {cfg.dims.d * cfg.spacing_mm.z, cfg.dims.h * cfg.spacing_mm.y,
                        cfg.dims.w * cfg.spacing_mm.x};

    Ellipsoid liver;
    for (int a = 0; a < 3; ++a) {
        liver.center[a] = extent[a] * (0.5 + kCenterJitter * (2.0 * uni(rng) - 1.0));
        liver.radii[a] =
            (kLiverSemiLo + (kLiverSemiHi - kLiverSemiLo) * uni(rng)) * extent[a] / 2.0;
    }

    int k = cfg.min_tumors +
            int(std::uniform_int_distribution<int>(0, cfg.max_tumors - cfg.min_tumors)(rng));
    std::vector<Ellipsoid> tumors;
    for (int t = 0; t < k; ++t) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
            Ellipsoid tumor;
            for (int a = 0; a < 3; ++a) {
                tumor.radii[a] = cfg.tumor_radius_min_mm +
                                 (cfg.tumor_radius_max_mm - cfg.tumor_radius_min_mm) * uni(rng);
                // Uniform within the liver's bounding box, then containment-checked.
                tumor.center[a] =
                    liver.center[a] + liver.radii[a] * (2.0 * uni(rng) - 1.0);
            }
            if (contained(liver, tumor)) {
                tumors.push_back(tumor);
                placed = true;
            }
        }
        if (!placed)
            throw DataError("could not place a tumor inside the liver after " +
                            std::to_string(kPlacementRetries) + " attempts");
    }

    Mask mask = Mask::create(cfg.dims, cfg.spacing_mm, 0);
    int64_t i = 0;
    for (int z = 0; z < cfg.dims.d; ++z)
        for (int y = 0; y < cfg.dims.h; ++y)
            for (int x = 0; x < cfg.dims.w; ++x, ++i) {
                double pz = (z + 0.5) * cfg.spacing_mm.z;
                double py = (y + 0.5) * cfg.spacing_mm.y;
                double px = (x + 0.5) * cfg.spacing_mm.x;
                if (!inside(liver, pz, py, px)) continue;
                mask.labels[i] = 1;
                for (const Ellipsoid& t : tumors)
                    if (inside(t, pz, py, px)) {
                        mask.labels[i] = 2;
                        break;
                    }
            }

    Volume vol = Volume::create(cfg.dims, cfg.spacing_mm, 0.0f);
    const double mean[3] = {cfg.background_hu, cfg.liver_hu, cfg.tumor_hu};
    const double sigma[3] = {cfg.background_sigma, cfg.liver_sigma, cfg.tumor_sigma};
    for (int64_t v = 0; v < cfg.dims.numel(); ++v) {
        int lab = mask.labels[v];
        vol.values[v] = float(mean[lab] + sigma[lab] * gauss(rng));
    }
    if (cfg.smooth_sigma_voxels > 0)
        for (int axis = 0; axis < 3; ++axis)
            smooth_axis(vol.values, cfg.dims, axis, cfg.smooth_sigma_voxels);
    if (cfg.noise_sigma_hu > 0)
        for (float& f : vol.values) f += float(cfg.noise_sigma_hu * gauss(rng));

    vol.provenance = "phantom";
    mask.provenance = "phantom";
    if (geometry) *geometry = PhantomGeometry{liver, std::move(tumors)};
    return {std::move(vol), std::move(mask)};
}

DatasetManifest generate_dataset(const PhantomConfig& cfg, int n_cases, uint64_t seed,
                                 double split_fraction, const std::string& out_dir,
                                 const std::string& config_hash) {
    validate(cfg);
    if (n_cases < 2) throw DataError("need at least 2 cases to form a train/test split");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw DataError("split_fraction must lie strictly between 0 and 1");

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    int n_train = int(std::llround(n_cases * split_fraction));
    n_train = std::clamp(n_train, 1, n_cases - 1);
    std::vector<int> order(n_cases);
    for (int i = 0; i < n_cases; ++i) order[i] = i;
    std::mt19937_64 split_rng(seed);
    std::shuffle(order.begin(), order.end(), split_rng);
    std::vector<char> is_train(n_cases, 0);
    for (int i = 0; i < n_train; ++i) is_train[order[i]] = 1;

    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.config_hash = config_hash;
    for (int i = 0; i < n_cases; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "case_%03d", i);
        std::string id = buf;
        auto [vol, mask] = generate_phantom(cfg, case_seed(seed, id));
        std::string vp = id + "_vol.raw";
        std::string mp = id + "_mask.raw";
        write_raw(vol, (fs::path(out_dir) / vp).string());
        write_raw(mask, (fs::path(out_dir) / mp).string());
        manifest.cases.push_back({id, vp, mp, is_train[i] ? "train" : "test"});
    }
    write_manifest(manifest, (fs::path(out_dir) / "dataset.json").string());
    return manifest;
}

}  // namespace curriseg
