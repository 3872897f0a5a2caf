#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "curriseg/errors.hpp"
#include "curriseg/phantom.hpp"
#include "curriseg/volume.hpp"
#include "curriseg/volume_io.hpp"

using namespace curriseg;

namespace {

double sq(double v) { return v * v; }

bool inside_ellipsoid(const Ellipsoid& e, double z, double y, double x) {
    return sq((z - e.center[0]) / e.radii[0]) + sq((y - e.center[1]) / e.radii[1]) +
               sq((x - e.center[2]) / e.radii[2]) <=
           1.0;
}

std::vector<unsigned char> file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("generation is bitwise deterministic in the seed") {
    PhantomConfig cfg;
    auto [v1, m1] = generate_phantom(cfg, 42);
    auto [v2, m2] = generate_phantom(cfg, 42);
    CHECK(v1.values == v2.values);
    CHECK(m1.labels == m2.labels);
    auto [v3, m3] = generate_phantom(cfg, 43);
    CHECK(v1.values != v3.values);
}

TEST_CASE("masks align with volumes and use only labels 0,1,2") {
    PhantomConfig cfg;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        auto [v, m] = generate_phantom(cfg, seed);
        CHECK(v.dims == cfg.dims);
        CHECK(m.dims == cfg.dims);
        CHECK(v.spacing == cfg.spacing_mm);
        CHECK(m.spacing == cfg.spacing_mm);
        int64_t counts[3] = {0, 0, 0};
        for (uint8_t u : m.labels) {
            REQUIRE(u <= 2);
            ++counts[u];
        }
        CHECK(counts[0] > 0);
        CHECK(counts[1] > 0);
        CHECK(counts[2] > 0);  // default config guarantees at least one tumor
    }
}

TEST_CASE("every tumor voxel lies inside the liver ellipsoid") {
    PhantomConfig cfg;
    for (uint64_t seed : {5ull, 6ull, 7ull, 8ull}) {
        PhantomGeometry geom;
        auto [v, m] = generate_phantom(cfg, seed, &geom);
        // The sampled geometry satisfies the conservative containment bound.
        for (const Ellipsoid& t : geom.tumors) {
            double dist = 0.0, rmax = 0.0;
            for (int a = 0; a < 3; ++a) {
                dist += sq((t.center[a] - geom.liver.center[a]) / geom.liver.radii[a]);
                rmax = std::max(rmax, t.radii[a] / geom.liver.radii[a]);
            }
            CHECK(std::sqrt(dist) + rmax <= 1.0 + 1e-12);
        }
        // And the voxelized mask agrees: label 2 implies inside the liver.
        int64_t i = 0;
        for (int z = 0; z < m.dims.d; ++z)
            for (int y = 0; y < m.dims.h; ++y)
                for (int x = 0; x < m.dims.w; ++x, ++i) {
                    if (m.labels[i] != 2) continue;
                    double pz = (z + 0.5) * cfg.spacing_mm.z;
                    double py = (y + 0.5) * cfg.spacing_mm.y;
                    double px = (x + 0.5) * cfg.spacing_mm.x;
                    CHECK(inside_ellipsoid(geom.liver, pz, py, px));
                }
    }
}

TEST_CASE("tumor voxel counts match the analytic ellipsoid volume") {
    PhantomConfig cfg;
    cfg.dims = Dims{48, 48, 48};
    cfg.spacing_mm = Spacing{1.0, 1.0, 1.0};
    cfg.tumor_radius_min_mm = 3.5;
    cfg.tumor_radius_max_mm = 5.5;
    cfg.min_tumors = 2;
    cfg.max_tumors = 3;
    double voxel_volume = cfg.spacing_mm.z * cfg.spacing_mm.y * cfg.spacing_mm.x;
    int checked = 0;
    for (uint64_t seed : {11ull, 12ull, 13ull, 14ull, 15ull}) {
        PhantomGeometry geom;
        auto [v, m] = generate_phantom(cfg, seed, &geom);
        for (const Ellipsoid& t : geom.tumors) {
            int64_t count = 0, i = 0;
            for (int z = 0; z < m.dims.d; ++z)
                for (int y = 0; y < m.dims.h; ++y)
                    for (int x = 0; x < m.dims.w; ++x, ++i) {
                        if (m.labels[i] != 2) continue;
                        if (inside_ellipsoid(t, (z + 0.5) * cfg.spacing_mm.z,
                                             (y + 0.5) * cfg.spacing_mm.y,
                                             (x + 0.5) * cfg.spacing_mm.x))
                            ++count;
                    }
            double analytic =
                4.0 / 3.0 * M_PI * t.radii[0] * t.radii[1] * t.radii[2] / voxel_volume;
            CHECK(double(count) > 0.7 * analytic);
            CHECK(double(count) < 1.3 * analytic);
            ++checked;
        }
    }
    CHECK(checked >= 10);
}

TEST_CASE("default config keeps the tumor voxel ratio under 2 percent") {
    PhantomConfig cfg;
    for (uint64_t seed : {21ull, 22ull, 23ull, 24ull, 25ull}) {
        auto [v, m] = generate_phantom(cfg, seed);
        int64_t tumor = std::count(m.labels.begin(), m.labels.end(), uint8_t(2));
        CHECK(double(tumor) / double(m.dims.numel()) < 0.02);
    }
}

TEST_CASE("tissue HU statistics land near their configured means") {
    PhantomConfig cfg;
    auto [v, m] = generate_phantom(cfg, 99);
    double sums[3] = {0, 0, 0};
    int64_t counts[3] = {0, 0, 0};
    for (int64_t i = 0; i < m.dims.numel(); ++i) {
        sums[m.labels[i]] += v.values[i];
        ++counts[m.labels[i]];
    }
    // Smoothing blends borders, so bounds are loose.
    CHECK(sums[0] / counts[0] > -120.0);
    CHECK(sums[0] / counts[0] < -40.0);
    CHECK(sums[1] / counts[1] > 20.0);
    CHECK(sums[1] / counts[1] < 90.0);
}

TEST_CASE("invalid configs are rejected") {
    PhantomConfig cfg;
    cfg.dims = Dims{8, 64, 64};
    CHECK_THROWS_AS(validate(cfg), DataError);
    cfg = PhantomConfig{};
    cfg.tumor_radius_max_mm = 100.0;
    CHECK_THROWS_AS(validate(cfg), DataError);
    cfg = PhantomConfig{};
    cfg.min_tumors = 3;
    cfg.max_tumors = 1;
    CHECK_THROWS_AS(validate(cfg), DataError);
    cfg = PhantomConfig{};
    cfg.noise_sigma_hu = -1.0;
    CHECK_THROWS_AS(validate(cfg), DataError);
}

TEST_CASE("dataset split sizes follow the fraction") {
    namespace fs = std::filesystem;
    PhantomConfig cfg;
    cfg.dims = Dims{16, 16, 16};
    cfg.spacing_mm = Spacing{1, 1, 1};
    cfg.tumor_radius_min_mm = 1.0;
    cfg.tumor_radius_max_mm = 2.0;

    std::string dir = "phantom_ds_a";
    DatasetManifest m10 = generate_dataset(cfg, 10, 7, 0.9, dir);
    int train = 0, test = 0;
    for (const auto& c : m10.cases) (c.split == "train" ? train : test)++;
    CHECK(train == 9);
    CHECK(test == 1);
    fs::remove_all(dir);

    DatasetManifest m2 = generate_dataset(cfg, 2, 7, 0.5, dir);
    train = test = 0;
    for (const auto& c : m2.cases) (c.split == "train" ? train : test)++;
    CHECK(train == 1);
    CHECK(test == 1);
    fs::remove_all(dir);

    CHECK_THROWS_AS(generate_dataset(cfg, 1, 7, 0.9, dir), DataError);
    CHECK_THROWS_AS(generate_dataset(cfg, 4, 7, 1.0, dir), DataError);
    fs::remove_all(dir);
}

TEST_CASE("dataset generation reproduces byte-for-byte under the seed") {
    namespace fs = std::filesystem;
    PhantomConfig cfg;
    cfg.dims = Dims{16, 16, 16};
    cfg.spacing_mm = Spacing{1, 1, 1};
    cfg.tumor_radius_min_mm = 1.0;
    cfg.tumor_radius_max_mm = 2.0;

    DatasetManifest a = generate_dataset(cfg, 4, 31, 0.75, "phantom_ds_b1", "h");
    DatasetManifest b = generate_dataset(cfg, 4, 31, 0.75, "phantom_ds_b2", "h");
    REQUIRE(a.cases.size() == b.cases.size());
    for (size_t i = 0; i < a.cases.size(); ++i) {
        CHECK(a.cases[i].id == b.cases[i].id);
        CHECK(a.cases[i].split == b.cases[i].split);
    }
    for (const char* f : {"dataset.json", "case_000_vol.raw", "case_002_mask.raw"})
        CHECK(file_bytes(std::string("phantom_ds_b1/") + f) ==
              file_bytes(std::string("phantom_ds_b2/") + f));

    // Volumes load back through the normal reader and keep their labels.
    Mask m = read_raw_mask("phantom_ds_b1/case_001_mask.raw");
    CHECK(m.dims == cfg.dims);
    DatasetManifest reread = read_manifest("phantom_ds_b1/dataset.json");
    CHECK(reread.cases.size() == 4);
    CHECK(reread.seed == 31);
    CHECK(reread.config_hash == "h");

    fs::remove_all("phantom_ds_b1");
    fs::remove_all("phantom_ds_b2");
}

}  // TEST_SUITE
