#include <cstdint>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "curriseg/errors.hpp"
#include "curriseg/slices.hpp"

using namespace curriseg;

namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("slices") {

TEST_CASE("gray mapping and header") {
    Volume v = Volume::create(Dims{2, 2, 3}, Spacing{}, 0.0f);
    v.at(1, 0, 0) = 0.0f;
    v.at(1, 0, 1) = 0.5f;
    v.at(1, 0, 2) = 1.0f;
    v.at(1, 1, 0) = -2.0f;  // clamps to black
    v.at(1, 1, 1) = 3.0f;   // clamps to white
    auto bytes = render_slice_ppm(v, nullptr, 1);
    std::string header = "P6\n3 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 2 * 3 * 3);
    CHECK(std::string(bytes.begin(), bytes.begin() + header.size()) == header);
    const unsigned char* px = bytes.data() + header.size();
    CHECK(px[0] == 0);
    CHECK(px[3] == 128);
    CHECK(px[4] == 128);
    CHECK(px[5] == 128);
    CHECK(px[6] == 255);
    CHECK(px[9] == 0);
    CHECK(px[12] == 255);
}

TEST_CASE("overlay paints pure green, one pixel per mask voxel") {
    Volume v = Volume::create(Dims{1, 4, 4}, Spacing{}, 0.5f);
    Mask m = Mask::create(Dims{1, 4, 4}, Spacing{}, 0);
    m.at(0, 1, 2) = 1;
    m.at(0, 3, 0) = 1;
    auto bytes = render_slice_ppm(v, &m, 0);
    size_t header = std::string("P6\n4 4\n255\n").size();
    int green = 0;
    for (int i = 0; i < 16; ++i) {
        const unsigned char* px = bytes.data() + header + 3 * i;
        if (px[0] == 0 && px[1] == 255 && px[2] == 0) ++green;
    }
    CHECK(green == 2);

    // empty overlay renders identically to no overlay
    Mask empty = Mask::create(Dims{1, 4, 4}, Spacing{}, 0);
    CHECK(render_slice_ppm(v, &empty, 0) == render_slice_ppm(v, nullptr, 0));
}

TEST_CASE("comment line and validation") {
    Volume v = Volume::create(Dims{1, 2, 2}, Spacing{}, 0.0f);
    auto bytes = render_slice_ppm(v, nullptr, 0, "seed 5 config abc");
    std::string text(bytes.begin(), bytes.end());
    CHECK(text.rfind("P6\n# seed 5 config abc\n2 2\n255\n", 0) == 0);

    CHECK_THROWS_AS(render_slice_ppm(v, nullptr, 1), DataError);
    CHECK_THROWS_AS(render_slice_ppm(v, nullptr, -1), DataError);
    Mask wrong = Mask::create(Dims{1, 2, 3}, Spacing{}, 0);
    CHECK_THROWS_AS(render_slice_ppm(v, &wrong, 0), DataError);
    CHECK_THROWS_AS(render_slice_ppm(v, nullptr, 0, "two\nlines"), DataError);
}

TEST_CASE("export writes a deterministic trio per slice") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "curriseg_slices_test";
    fs::remove_all(dir);

    Volume v = Volume::create(Dims{3, 4, 4}, Spacing{}, 0.25f);
    Mask gt = Mask::create(Dims{3, 4, 4}, Spacing{}, 0);
    gt.at(1, 1, 1) = 1;
    Mask pred = Mask::create(Dims{3, 4, 4}, Spacing{}, 0);
    pred.at(1, 2, 2) = 1;

    auto paths = export_slices((dir / "a").string(), v, gt, pred, {0, 1});
    REQUIRE(paths.size() == 6);
    CHECK(fs::path(paths[0]).filename() == "z0_input.ppm");
    CHECK(fs::path(paths[1]).filename() == "z0_gt.ppm");
    CHECK(fs::path(paths[2]).filename() == "z0_pred.ppm");
    CHECK(fs::path(paths[3]).filename() == "z1_input.ppm");
    for (const auto& p : paths) CHECK(fs::exists(p));

    auto again = export_slices((dir / "b").string(), v, gt, pred, {0, 1});
    for (size_t i = 0; i < paths.size(); ++i)
        CHECK(read_bytes(paths[i]) == read_bytes(again[i]));

    // slice 0 has no overlay voxels, so all three images coincide
    CHECK(read_bytes(paths[0]) == read_bytes(paths[1]));
    CHECK(read_bytes(paths[0]) == read_bytes(paths[2]));
    // slice 1 differs between gt and pred
    CHECK(read_bytes(paths[4]) != read_bytes(paths[5]));

    CHECK_THROWS_AS(export_slices((dir / "c").string(), v, gt, pred, {}), DataError);
    CHECK_THROWS_AS(export_slices((dir / "c").string(), v, gt, pred, {7}), DataError);
    fs::remove_all(dir);
}

}  // TEST_SUITE
