#include "curriseg/slices.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "curriseg/errors.hpp"

namespace curriseg {

std::vector<unsigned char> render_slice_ppm(const Volume& v, const Mask* overlay, int z,
                                            const std::string& comment) {
    if (z < 0 || z >= v.dims.d)
        throw DataError("slice index " + std::to_string(z) + " outside depth " +
                        std::to_string(v.dims.d));
    if (overlay && !(overlay->dims == v.dims))
        throw DataError("overlay dims " + dims_str(overlay->dims) + " do not match volume dims " +
                        dims_str(v.dims));
    if (comment.find('\n') != std::string::npos)
        throw DataError("ppm comment must be a single line");

    std::string header = "P6\n";
    if (!comment.empty()) header += "# " + comment + "\n";
    header += std::to_string(v.dims.w) + " " + std::to_string(v.dims.h) + "\n255\n";

    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(out.size() + size_t(v.dims.h) * v.dims.w * 3);
    for (int y = 0; y < v.dims.h; ++y)
        for (int x = 0; x < v.dims.w; ++x) {
            if (overlay && overlay->at(z, y, x) != 0) {
                out.push_back(0);
                out.push_back(255);
                out.push_back(0);
            } else {
                double g = std::clamp(double(v.at(z, y, x)), 0.0, 1.0);
                auto byte = static_cast<unsigned char>(std::lround(g * 255.0));
                out.push_back(byte);
                out.push_back(byte);
                out.push_back(byte);
            }
        }
    return out;
}

std::vector<std::string> export_slices(const std::string& dir, const Volume& v, const Mask& gt,
                                       const Mask& pred, const std::vector<int>& zs,
                                       const std::string& comment) {
    if (zs.empty()) throw DataError("no slice indices given");
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> paths;
    auto write = [&](const std::string& name, const Mask* overlay, int z) {
        std::vector<unsigned char> bytes = render_slice_ppm(v, overlay, z, comment);
        std::string path = (fs::path(dir) / name).string();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path);
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        paths.push_back(path);
    };
    for (int z : zs) {
        std::string stem = "z" + std::to_string(z);
        write(stem + "_input.ppm", nullptr, z);
        write(stem + "_gt.ppm", &gt, z);
        write(stem + "_pred.ppm", &pred, z);
    }
    return paths;
}

}  // namespace curriseg
