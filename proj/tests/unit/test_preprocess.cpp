#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include <doctest.h>

#include "curriseg/errors.hpp"
#include "curriseg/preprocess.hpp"
#include "curriseg/volume.hpp"
#include "curriseg/volume_io.hpp"

using namespace curriseg;

namespace {

Volume ramp_volume(Dims d, float a_z, float a_y, float a_x, float bias) {
    Volume v = Volume::create(d, Spacing{}, 0.0f);
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) v.at(z, y, x) = a_z * z + a_y * y + a_x * x + bias;
    return v;
}

void fill_block(Mask& m, int z0, int z1, int y0, int y1, int x0, int x1, uint8_t label) {
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) m.at(z, y, x) = label;
}

int64_t count_label(const Mask& m, uint8_t label) {
    return std::count(m.labels.begin(), m.labels.end(), label);
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("window transform maps the window endpoints and midpoint") {
    Volume v = Volume::create(Dims{1, 1, 5}, Spacing{}, 0.0f);
    v.values = {-200.0f, 250.0f, 25.0f, -500.0f, 1000.0f};
    Volume w = window_transform(v, -200.0, 250.0);
    CHECK(w.values[0] == 0.0f);
    CHECK(w.values[1] == 1.0f);
    CHECK(w.values[2] == 0.5f);
    CHECK(w.values[3] == 0.0f);  // below the window clamps to the floor
    CHECK(w.values[4] == 1.0f);
    CHECK_THROWS_AS(window_transform(v, 10.0, 10.0), DataError);
}

TEST_CASE("resample at the current spacing is the identity") {
    std::mt19937_64 rng(7);
    Volume v = Volume::create(Dims{4, 5, 6}, Spacing{1.0, 1.0, 1.0}, 0.0f);
    for (float& f : v.values) f = float(std::uniform_real_distribution<>(-100, 100)(rng));
    Volume r = resample(v, Spacing{1.0, 1.0, 1.0});
    CHECK(r.dims == v.dims);
    CHECK(r.values == v.values);
}

TEST_CASE("upsampling a two-sample ramp yields the midpoint value") {
    Volume v = Volume::create(Dims{1, 1, 2}, Spacing{}, 0.0f);
    v.values = {0.0f, 2.0f};
    Volume r = resize_to_dims(v, Dims{1, 1, 3});
    REQUIRE(r.values.size() == 3);
    CHECK(r.values[0] == 0.0f);
    CHECK(r.values[1] == 1.0f);
    CHECK(r.values[2] == 2.0f);
}

TEST_CASE("trilinear resize preserves constants exactly") {
    Volume v = Volume::create(Dims{3, 4, 5}, Spacing{2.0, 1.0, 1.5}, 42.5f);
    Volume r = resize_to_dims(v, Dims{5, 3, 8});
    for (float f : r.values) CHECK(f == 42.5f);
    CHECK(r.spacing.z == doctest::Approx(2.0 * 3 / 5));
}

TEST_CASE("trilinear resize reproduces affine fields at unclamped samples") {
    Volume v = ramp_volume(Dims{6, 7, 8}, 1.25f, -0.5f, 2.0f, 3.0f);
    Dims nd{9, 5, 13};
    Volume r = resize_to_dims(v, nd);
    double sz = 6.0 / nd.d, sy = 7.0 / nd.h, sx = 8.0 / nd.w;
    for (int z = 0; z < nd.d; ++z)
        for (int y = 0; y < nd.h; ++y)
            for (int x = 0; x < nd.w; ++x) {
                double fz = (z + 0.5) * sz - 0.5;
                double fy = (y + 0.5) * sy - 0.5;
                double fx = (x + 0.5) * sx - 0.5;
                if (fz < 0 || fz > 5 || fy < 0 || fy > 6 || fx < 0 || fx > 7) continue;
                double want = 1.25 * fz - 0.5 * fy + 2.0 * fx + 3.0;
                CHECK(r.at(z, y, x) == doctest::Approx(want).epsilon(1e-5));
            }
}

TEST_CASE("trilinear resize stays within the input value range") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        Dims d{2 + int(rng() % 5), 2 + int(rng() % 5), 2 + int(rng() % 5)};
        Volume v = Volume::create(d, Spacing{}, 0.0f);
        for (float& f : v.values) f = float(std::uniform_real_distribution<>(-50, 50)(rng));
        Dims nd{1 + int(rng() % 9), 1 + int(rng() % 9), 1 + int(rng() % 9)};
        Volume r = resize_to_dims(v, nd);
        auto [lo, hi] = std::minmax_element(v.values.begin(), v.values.end());
        for (float f : r.values) {
            CHECK(f >= *lo - 1e-4f);
            CHECK(f <= *hi + 1e-4f);
        }
    }
}

TEST_CASE("nearest-neighbor mask resize keeps the label set") {
    Mask m = Mask::create(Dims{4, 6, 6}, Spacing{}, 0);
    fill_block(m, 1, 2, 1, 4, 1, 4, 1);
    fill_block(m, 1, 1, 2, 3, 2, 3, 2);
    Mask r = resize_to_dims(m, Dims{8, 12, 12});
    for (uint8_t u : r.labels) CHECK(u <= 2);
    CHECK(count_label(r, 1) > 0);
    CHECK(count_label(r, 2) > 0);
    // Downscale back: labels still from the original set.
    Mask s = resize_to_dims(r, Dims{3, 5, 5});
    for (uint8_t u : s.labels) CHECK(u <= 2);
}

TEST_CASE("resample changes dims by the spacing ratio") {
    Volume v = Volume::create(Dims{32, 64, 64}, Spacing{2.0, 1.0, 1.0}, 1.0f);
    Volume r = resample(v, Spacing{1.0, 1.0, 1.0});
    CHECK(r.dims == Dims{64, 64, 64});
    CHECK(r.spacing == Spacing{1.0, 1.0, 1.0});
    Mask m = Mask::create(Dims{32, 64, 64}, Spacing{2.0, 1.0, 1.0}, 1);
    Mask rm = resample(m, Spacing{1.0, 1.0, 1.0});
    CHECK(rm.dims == Dims{64, 64, 64});
}

TEST_CASE("effective range crops z to foreground plus margin") {
    Dims d{10, 4, 4};
    Volume v = ramp_volume(d, 100.0f, 0.0f, 0.0f, 0.0f);  // slice z has value 100*z
    Mask m = Mask::create(d, Spacing{}, 0);
    fill_block(m, 3, 5, 1, 2, 1, 2, 1);
    auto [cv, cm] = effective_range(v, m, 2);
    CHECK(cv.dims == Dims{7, 4, 4});  // z in [1, 7]
    CHECK(cv.at(0, 0, 0) == 100.0f);
    CHECK(cv.at(6, 0, 0) == 700.0f);
    CHECK(cm.at(2, 1, 1) == 1);

    auto [cv0, cm0] = effective_range(v, m, 0);
    CHECK(cv0.dims.d == 3);

    // Margin clipped at the volume edge.
    auto [cv9, cm9] = effective_range(v, m, 9);
    CHECK(cv9.dims.d == 10);

    Mask empty = Mask::create(d, Spacing{}, 0);
    CHECK_THROWS_WITH_AS(effective_range(v, empty, 2), doctest::Contains("no foreground"),
                         DataError);
}

TEST_CASE("subvolume starts tile the extent with an end-aligned final window") {
    CHECK(subvolume_starts(96, 64, 32) == std::vector<int>{0, 32});
    CHECK(subvolume_starts(64, 64, 32) == std::vector<int>{0});
    CHECK(subvolume_starts(100, 64, 32) == std::vector<int>{0, 32, 36});
    CHECK(subvolume_starts(40, 16, 8) == std::vector<int>{0, 8, 16, 24});
    CHECK(subvolume_starts(17, 16, 8) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(subvolume_starts(10, 16, 8), DataError);
}

TEST_CASE("subvolume windows cover every slice") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 50; ++rep) {
        int window = 1 + int(rng() % 20);
        int extent = window + int(rng() % 50);
        int stride = 1 + int(rng() % window);
        auto starts = subvolume_starts(extent, window, stride);
        std::vector<char> covered(extent, 0);
        for (size_t i = 0; i < starts.size(); ++i) {
            if (i) CHECK(starts[i] > starts[i - 1]);
            for (int z = starts[i]; z < starts[i] + window; ++z) covered[z] = 1;
        }
        CHECK(std::count(covered.begin(), covered.end(), 1) == extent);
    }
}

TEST_CASE("generate_subvolumes downsamples in plane and windows in z") {
    PreprocessConfig cfg;
    cfg.subvol_depth = 16;
    cfg.subvol_stride = 8;
    cfg.inplane_h = 64;
    cfg.inplane_w = 64;
    Dims d{40, 128, 128};
    Volume v = Volume::create(d, Spacing{1, 1, 1}, 0.25f);
    Mask m = Mask::create(d, Spacing{1, 1, 1}, 0);
    fill_block(m, 10, 30, 20, 100, 20, 100, 1);
    fill_block(m, 18, 24, 40, 70, 40, 70, 2);
    auto samples = generate_subvolumes(v, m, cfg, "case_a");
    REQUIRE(samples.size() == 4);  // starts 0, 8, 16, 24
    for (const auto& s : samples) {
        CHECK(s.image.dims == Dims{16, 64, 64});
        CHECK(s.target.dims == Dims{16, 64, 64});
        CHECK(s.kind == SampleKind::whole);
        CHECK(s.case_id == "case_a");
        for (uint8_t u : s.target.labels) CHECK(u <= 1);  // binary tumor target
    }
    CHECK(samples[0].origin[0] == 0);
    CHECK(samples[3].origin[0] == 24);
    // The window over the tumor's z range has foreground; the first does not.
    auto fg = [](const Sample& s) {
        return std::count(s.target.labels.begin(), s.target.labels.end(), 1);
    };
    CHECK(fg(samples[0]) == 0);
    CHECK(fg(samples[2]) > 0);
}

TEST_CASE("generate_subvolumes zero-pads cases shorter than the window") {
    PreprocessConfig cfg;
    cfg.subvol_depth = 16;
    cfg.subvol_stride = 8;
    cfg.inplane_h = 8;
    cfg.inplane_w = 8;
    Dims d{10, 8, 8};
    Volume v = Volume::create(d, Spacing{1, 1, 1}, 0.75f);
    Mask m = Mask::create(d, Spacing{1, 1, 1}, 1);
    auto samples = generate_subvolumes(v, m, cfg, "short");
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].image.dims == Dims{16, 8, 8});
    for (int z = 0; z < 10; ++z) CHECK(samples[0].image.at(z, 3, 3) == 0.75f);
    for (int z = 10; z < 16; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                CHECK(samples[0].image.at(z, y, x) == 0.0f);
                CHECK(samples[0].target.at(z, y, x) == 0);
            }
}

TEST_CASE("generate_subvolumes can target the liver label") {
    PreprocessConfig cfg;
    cfg.subvol_depth = 4;
    cfg.subvol_stride = 4;
    cfg.inplane_h = 6;
    cfg.inplane_w = 6;
    Dims d{4, 6, 6};
    Volume v = Volume::create(d, Spacing{1, 1, 1}, 0.5f);
    Mask m = Mask::create(d, Spacing{1, 1, 1}, 0);
    fill_block(m, 0, 3, 1, 4, 1, 4, 1);
    fill_block(m, 1, 2, 2, 3, 2, 3, 2);
    auto liver = generate_subvolumes(v, m, cfg, "c", 1);
    auto tumor = generate_subvolumes(v, m, cfg, "c", 2);
    REQUIRE(liver.size() == 1);
    REQUIRE(tumor.size() == 1);
    auto fg = [](const Sample& s) {
        return std::count(s.target.labels.begin(), s.target.labels.end(), 1);
    };
    CHECK(fg(liver[0]) == 4 * 4 * 4);  // tumor voxels count as liver
    CHECK(fg(tumor[0]) == 2 * 2 * 2);
}

TEST_CASE("max tumor extent takes the per-axis max and rounds up") {
    Dims d{16, 20, 20};
    Mask a = Mask::create(d, Spacing{}, 0);
    fill_block(a, 2, 5, 3, 12, 4, 11, 2);  // extents (4, 10, 8)
    Mask b = Mask::create(d, Spacing{}, 0);
    fill_block(b, 1, 6, 2, 6, 3, 14, 2);  // extents (6, 5, 12)
    Dims ext = max_tumor_extent({a, b}, 8);
    CHECK(ext == Dims{8, 16, 16});

    Dims ext1 = max_tumor_extent({a, b}, 1);
    CHECK(ext1 == Dims{6, 10, 12});

    Mask none = Mask::create(d, Spacing{}, 1);  // liver only
    CHECK_THROWS_AS(max_tumor_extent({none}, 8), DataError);
}

TEST_CASE("max tumor extent dominates every component box") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        Dims d{12, 14, 14};
        std::vector<Mask> masks;
        bool any = false;
        for (int mi = 0; mi < 3; ++mi) {
            Mask m = Mask::create(d, Spacing{}, 0);
            int blobs = int(rng() % 3);
            for (int b = 0; b < blobs; ++b) {
                int z0 = int(rng() % 10), y0 = int(rng() % 10), x0 = int(rng() % 10);
                int z1 = std::min(11, z0 + int(rng() % 4));
                int y1 = std::min(13, y0 + int(rng() % 5));
                int x1 = std::min(13, x0 + int(rng() % 5));
                fill_block(m, z0, z1, y0, y1, x0, x1, 2);
                any = true;
            }
            masks.push_back(std::move(m));
        }
        if (!any) continue;
        Dims ext = max_tumor_extent(masks, 2);
        CHECK(ext.d % 2 == 0);
        for (const Mask& m : masks) {
            Mask tum = binarize(m, 2);
            Components comps = connected_components(tum, 26);
            for (int c = 1; c <= comps.count; ++c) {
                int lo[3] = {INT32_MAX, INT32_MAX, INT32_MAX}, hi[3] = {-1, -1, -1};
                int64_t i = 0;
                for (int z = 0; z < d.d; ++z)
                    for (int y = 0; y < d.h; ++y)
                        for (int x = 0; x < d.w; ++x, ++i)
                            if (comps.labels[i] == c) {
                                lo[0] = std::min(lo[0], z); hi[0] = std::max(hi[0], z);
                                lo[1] = std::min(lo[1], y); hi[1] = std::max(hi[1], y);
                                lo[2] = std::min(lo[2], x); hi[2] = std::max(hi[2], x);
                            }
                CHECK(hi[0] - lo[0] + 1 <= ext.d);
                CHECK(hi[1] - lo[1] + 1 <= ext.h);
                CHECK(hi[2] - lo[2] + 1 <= ext.w);
            }
        }
    }
}

TEST_CASE("tumor patches contain tumor and respect the requested dims") {
    std::mt19937_64 rng(47);
    for (int rep = 0; rep < 20; ++rep) {
        Dims d{14, 16, 16};
        Volume v = Volume::create(d, Spacing{}, 0.0f);
        for (float& f : v.values) f = float(std::uniform_real_distribution<>(0, 1)(rng));
        Mask m = Mask::create(d, Spacing{}, 0);
        fill_block(m, 0, 13, 0, 15, 0, 15, 1);
        int blobs = 1 + int(rng() % 3);
        for (int b = 0; b < blobs; ++b) {
            int z0 = int(rng() % 12), y0 = int(rng() % 14), x0 = int(rng() % 14);
            fill_block(m, z0, std::min(13, z0 + 1 + int(rng() % 2)), y0,
                       std::min(15, y0 + 1 + int(rng() % 3)), x0,
                       std::min(15, x0 + 1 + int(rng() % 3)), 2);
        }
        Mask tum = binarize(m, 2);
        int n_comps = connected_components(tum, 26).count;
        Dims patch{8, 8, 8};
        std::mt19937_64 prng(1000 + rep);
        auto patches = extract_tumor_patches(v, m, patch, "c", prng);
        CHECK(int(patches.size()) == n_comps);
        for (const auto& p : patches) {
            CHECK(p.image.dims == patch);
            CHECK(p.target.dims == patch);
            CHECK(p.kind == SampleKind::patch_positive);
            CHECK(count_label(p.target, 1) > 0);
            // Image values match the source volume where the crop is in range.
            for (int z = 0; z < patch.d; ++z)
                for (int y = 0; y < patch.h; ++y)
                    for (int x = 0; x < patch.w; ++x) {
                        int iz = p.origin[0] + z, iy = p.origin[1] + y, ix = p.origin[2] + x;
                        bool in = iz >= 0 && iz < d.d && iy >= 0 && iy < d.h && ix >= 0 && ix < d.w;
                        float want = in ? v.at(iz, iy, ix) : 0.0f;
                        CHECK(p.image.at(z, y, x) == want);
                    }
        }
    }
}

TEST_CASE("tumor patch origins are deterministic under the rng seed") {
    Dims d{16, 16, 16};
    Volume v = Volume::create(d, Spacing{}, 0.5f);
    Mask m = Mask::create(d, Spacing{}, 1);
    fill_block(m, 3, 6, 4, 8, 5, 9, 2);
    fill_block(m, 10, 12, 10, 12, 1, 3, 2);
    auto run = [&](uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::vector<int> origins;
        for (const auto& p : extract_tumor_patches(v, m, Dims{8, 8, 8}, "c", rng))
            for (int a = 0; a < 3; ++a) origins.push_back(p.origin[a]);
        return origins;
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));  // jitter actually depends on the stream
}

TEST_CASE("patches larger than the volume are zero-padded") {
    Dims d{4, 5, 5};
    Volume v = Volume::create(d, Spacing{}, 1.0f);
    Mask m = Mask::create(d, Spacing{}, 1);
    fill_block(m, 1, 2, 1, 3, 1, 3, 2);
    std::mt19937_64 rng(3);
    auto patches = extract_tumor_patches(v, m, Dims{8, 8, 8}, "c", rng);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].image.dims == Dims{8, 8, 8});
    CHECK(count_label(patches[0].target, 1) == 2 * 3 * 3);
    int64_t nonzero = 0;
    for (float f : patches[0].image.values) nonzero += f != 0.0f;
    CHECK(nonzero == d.numel());  // the whole volume fits inside the patch
}

TEST_CASE("negative patches are tumor-free and deterministic") {
    Dims d{16, 20, 20};
    std::mt19937_64 vr(9);
    Volume v = Volume::create(d, Spacing{}, 0.0f);
    for (float& f : v.values) f = float(std::uniform_real_distribution<>(0, 1)(vr));
    Mask m = Mask::create(d, Spacing{}, 1);
    fill_block(m, 5, 8, 5, 8, 5, 8, 2);
    auto run = [&](uint64_t seed) {
        std::mt19937_64 rng(seed);
        return extract_negative_patches(v, m, Dims{4, 6, 6}, 5, "c", rng);
    };
    auto patches = run(17);
    REQUIRE(patches.size() == 5);
    for (const auto& p : patches) {
        CHECK(p.kind == SampleKind::patch_negative);
        CHECK(count_label(p.target, 1) == 0);
        CHECK(p.image.dims == Dims{4, 6, 6});
    }
    auto again = run(17);
    for (size_t i = 0; i < patches.size(); ++i) {
        CHECK(patches[i].origin[0] == again[i].origin[0]);
        CHECK(patches[i].image.values == again[i].image.values);
    }
}

TEST_CASE("negative patch extraction reports a shortfall when tumor is everywhere") {
    Dims d{4, 4, 4};
    Volume v = Volume::create(d, Spacing{}, 0.5f);
    Mask m = Mask::create(d, Spacing{}, 2);
    std::mt19937_64 rng(1);
    auto patches = extract_negative_patches(v, m, Dims{4, 4, 4}, 3, "c", rng);
    CHECK(patches.empty());
}

TEST_CASE("preprocess_case runs the chain onto the training grid") {
    PreprocessConfig cfg;
    cfg.subvol_depth = 8;
    cfg.subvol_stride = 4;
    cfg.inplane_h = 32;
    cfg.inplane_w = 32;
    cfg.z_margin = 2;
    Dims d{32, 64, 64};
    Volume v = Volume::create(d, Spacing{2, 1, 1}, 25.0f);
    Mask m = Mask::create(d, Spacing{2, 1, 1}, 0);
    fill_block(m, 8, 15, 10, 50, 10, 50, 1);
    auto [cv, cm] = preprocess_case(v, m, cfg);
    // Resample doubles z to 64; liver roughly doubles to z in [16, 31]; margin 2.
    CHECK(cv.dims.h == 32);
    CHECK(cv.dims.w == 32);
    CHECK(cv.dims == cm.dims);
    CHECK(cv.dims.d < 64);
    for (float f : cv.values) CHECK(f == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(count_label(cm, 1) > 0);
}

TEST_CASE("case seeds differ across cases and reproduce") {
    CHECK(case_seed(42, "case_000") == case_seed(42, "case_000"));
    CHECK(case_seed(42, "case_000") != case_seed(42, "case_001"));
    CHECK(case_seed(42, "case_000") != case_seed(43, "case_000"));
}

TEST_CASE("sample store round-trips bitwise") {
    namespace fs = std::filesystem;
    std::string dir = "pp_store_test";
    SampleStore store;
    store.seed = 99;
    store.config_hash = "deadbeef";
    store.patch_dims = Dims{8, 8, 8};
    std::mt19937_64 rng(5);
    for (int i = 0; i < 3; ++i) {
        Sample s;
        s.image = Volume::create(Dims{4, 5, 6}, Spacing{1, 1, 1}, 0.0f);
        for (float& f : s.image.values) f = float(std::uniform_real_distribution<>(0, 1)(rng));
        s.target = Mask::create(Dims{4, 5, 6}, Spacing{1, 1, 1}, uint8_t(i % 2));
        s.kind = i == 0 ? SampleKind::whole
                        : (i == 1 ? SampleKind::patch_positive : SampleKind::patch_negative);
        s.case_id = "case_" + std::to_string(i);
        s.origin[0] = -i;
        s.origin[2] = 2 * i;
        store.samples.push_back(std::move(s));
    }
    write_sample_store(store, dir);
    SampleStore back = read_sample_store(dir);
    CHECK(back.seed == 99);
    CHECK(back.config_hash == "deadbeef");
    CHECK(back.patch_dims == store.patch_dims);
    REQUIRE(back.samples.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(back.samples[i].image.values == store.samples[i].image.values);
        CHECK(back.samples[i].target.labels == store.samples[i].target.labels);
        CHECK(back.samples[i].kind == store.samples[i].kind);
        CHECK(back.samples[i].case_id == store.samples[i].case_id);
        CHECK(back.samples[i].origin[0] == store.samples[i].origin[0]);
        CHECK(back.samples[i].origin[2] == store.samples[i].origin[2]);
    }
    fs::remove_all(dir);
}

TEST_CASE("preprocess_dataset writes a store with all three sample kinds") {
    namespace fs = std::filesystem;
    std::string data_dir = "pp_ds_test";
    fs::create_directories(data_dir);
    DatasetManifest manifest;
    manifest.seed = 7;
    manifest.config_hash = "cfg";
    std::mt19937_64 rng(13);
    for (int i = 0; i < 3; ++i) {
        Dims d{12, 20, 20};
        Volume v = Volume::create(d, Spacing{1, 1, 1}, 0.0f);
        for (float& f : v.values) f = float(std::uniform_real_distribution<>(-150, 200)(rng));
        Mask m = Mask::create(d, Spacing{1, 1, 1}, 0);
        fill_block(m, 2, 9, 3, 16, 3, 16, 1);
        fill_block(m, 4, 6, 5, 8, 5, 8, 2);
        if (i == 1) fill_block(m, 7, 8, 12, 14, 11, 14, 2);
        std::string id = "case_" + std::to_string(i);
        write_raw(v, data_dir + "/" + id + "_vol.raw");
        write_raw(m, data_dir + "/" + id + "_mask.raw");
        manifest.cases.push_back(
            {id, id + "_vol.raw", id + "_mask.raw", i == 2 ? "test" : "train"});
    }
    std::string mpath = data_dir + "/dataset.json";
    write_manifest(manifest, mpath);

    PreprocessConfig cfg;
    cfg.subvol_depth = 4;
    cfg.subvol_stride = 2;
    cfg.inplane_h = 16;
    cfg.inplane_w = 16;
    cfg.patch_round_multiple = 4;
    cfg.z_margin = 1;
    std::string out_dir = data_dir + "/samples";
    auto counts = preprocess_dataset(manifest, mpath, cfg, out_dir, 21, "cfg");
    CHECK(counts.whole > 0);
    CHECK(counts.positive == 3);  // one component in case_0, two in case_1
    CHECK(counts.negative > 0);
    CHECK(counts.patch_dims.d % 4 == 0);

    SampleStore store = read_sample_store(out_dir);
    CHECK(int(store.samples.size()) == counts.whole + counts.positive + counts.negative);
    int whole = 0, pos = 0, neg = 0;
    for (const auto& s : store.samples) {
        CHECK(s.case_id.substr(0, 5) == "case_");
        CHECK(s.case_id != "case_2");  // test split excluded
        if (s.kind == SampleKind::whole) {
            ++whole;
            CHECK(s.image.dims == Dims{4, 16, 16});
        } else if (s.kind == SampleKind::patch_positive) {
            ++pos;
            CHECK(s.image.dims == counts.patch_dims);
            CHECK(count_label(s.target, 1) > 0);
        } else {
            ++neg;
            CHECK(count_label(s.target, 1) == 0);
        }
        for (float f : s.image.values) {
            CHECK(f >= 0.0f);
            CHECK(f <= 1.0f);  // windowed
        }
    }
    CHECK(whole == counts.whole);
    CHECK(pos == counts.positive);
    CHECK(neg == counts.negative);

    // Same seed reproduces the store bitwise; a different seed moves patches.
    auto counts2 = preprocess_dataset(manifest, mpath, cfg, out_dir + "2", 21, "cfg");
    SampleStore store2 = read_sample_store(out_dir + "2");
    REQUIRE(store2.samples.size() == store.samples.size());
    for (size_t i = 0; i < store.samples.size(); ++i)
        CHECK(store2.samples[i].image.values == store.samples[i].image.values);
    CHECK(counts2.whole == counts.whole);
    fs::remove_all(data_dir);
}

TEST_CASE("config validation rejects inconsistent settings") {
    PreprocessConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    CHECK(cfg.window_lo == -200.0);
    CHECK(cfg.window_hi == 250.0);
    CHECK(cfg.subvol_depth == 16);
    CHECK(cfg.subvol_stride == 8);
    CHECK(cfg.inplane_h == 64);
    CHECK(cfg.patch_round_multiple == 8);

    PreprocessConfig bad = cfg;
    bad.subvol_stride = 20;
    CHECK_THROWS_AS(validate(bad), DataError);
    bad = cfg;
    bad.window_hi = bad.window_lo;
    CHECK_THROWS_AS(validate(bad), DataError);
    bad = cfg;
    bad.target_spacing.y = 0.0;
    CHECK_THROWS_AS(validate(bad), DataError);
}

}  // TEST_SUITE
