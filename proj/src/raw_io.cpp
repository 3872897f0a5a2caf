#include <filesystem>
#include <fstream>

#include "curriseg/binio.hpp"
#include "curriseg/errors.hpp"
#include "curriseg/volume_io.hpp"
#include "json.hpp"

namespace curriseg {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'E', 'G', 'V', 'O', 'L', '\0'};
constexpr uint32_t kRawVersion = 1;
constexpr uint32_t kDtypeF32 = 1;  // Volume
constexpr uint32_t kDtypeU8 = 2;   // Mask

struct RawHeader {
    uint32_t dtype = 0;
    Dims dims;
    Spacing spacing;
    std::string provenance;
};

void write_header(std::ostream& os, uint32_t dtype, const Dims& dims, const Spacing& sp,
                  const std::string& provenance) {
    binio::put_bytes(os, kMagic, 8);
    binio::put_u32(os, kRawVersion);
    binio::put_u32(os, dtype);
    binio::put_u32(os, static_cast<uint32_t>(dims.d));
    binio::put_u32(os, static_cast<uint32_t>(dims.h));
    binio::put_u32(os, static_cast<uint32_t>(dims.w));
    binio::put_f64(os, sp.z);
    binio::put_f64(os, sp.y);
    binio::put_f64(os, sp.x);
    binio::put_string(os, provenance);
}

RawHeader read_header(std::istream& is, const std::string& path) {
    char magic[8];
    binio::get_bytes(is, magic, 8, "raw volume magic");
    if (std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a raw volume file (bad magic): " + path);
    const uint32_t version = binio::get_u32(is, "raw volume version");
    if (version != kRawVersion)
        throw DataError("unsupported raw volume version " + std::to_string(version) + " in " + path);
    RawHeader h;
    h.dtype = binio::get_u32(is, "raw volume dtype");
    h.dims.d = static_cast<int>(binio::get_u32(is, "raw volume dims"));
    h.dims.h = static_cast<int>(binio::get_u32(is, "raw volume dims"));
    h.dims.w = static_cast<int>(binio::get_u32(is, "raw volume dims"));
    if (h.dims.d <= 0 || h.dims.h <= 0 || h.dims.w <= 0 || h.dims.numel() > (1ll << 34))
        throw DataError("implausible raw volume dims in " + path);
    h.spacing.z = binio::get_f64(is, "raw volume spacing");
    h.spacing.y = binio::get_f64(is, "raw volume spacing");
    h.spacing.x = binio::get_f64(is, "raw volume spacing");
    if (!(h.spacing.z > 0) || !(h.spacing.y > 0) || !(h.spacing.x > 0))
        throw DataError("non-positive spacing in " + path);
    h.provenance = binio::get_string(is, "raw volume provenance");
    return h;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    return os;
}

}  // namespace

void write_raw(const Volume& volume, const std::string& path) {
    if (static_cast<int64_t>(volume.values.size()) != volume.dims.numel())
        throw DataError("volume value count does not match dims " + dims_str(volume.dims));
    auto os = open_out(path);
    write_header(os, kDtypeF32, volume.dims, volume.spacing, volume.provenance);
    for (float v : volume.values) binio::put_f32(os, v);
    if (!os) throw DataError("failed while writing " + path);
}

void write_raw(const Mask& mask, const std::string& path) {
    if (static_cast<int64_t>(mask.labels.size()) != mask.dims.numel())
        throw DataError("mask label count does not match dims " + dims_str(mask.dims));
    for (uint8_t v : mask.labels)
        if (v > 2) throw DataError("mask contains label " + std::to_string(v) + ", only {0,1,2} are valid");
    auto os = open_out(path);
    write_header(os, kDtypeU8, mask.dims, mask.spacing, mask.provenance);
    binio::put_bytes(os, mask.labels.data(), mask.labels.size());
    if (!os) throw DataError("failed while writing " + path);
}

Volume read_raw_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open raw volume: " + path);
    RawHeader h = read_header(is, path);
    if (h.dtype != kDtypeF32)
        throw DataError(path + " holds a mask, not a volume (dtype " + std::to_string(h.dtype) + ")");
    Volume v = Volume::create(h.dims, h.spacing);
    v.provenance = std::move(h.provenance);
    for (auto& x : v.values) x = binio::get_f32(is, "raw volume payload");
    return v;
}

Mask read_raw_mask(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open raw mask: " + path);
    RawHeader h = read_header(is, path);
    if (h.dtype != kDtypeU8)
        throw DataError(path + " holds a volume, not a mask (dtype " + std::to_string(h.dtype) + ")");
    Mask m = Mask::create(h.dims, h.spacing);
    m.provenance = std::move(h.provenance);
    binio::get_bytes(is, m.labels.data(), m.labels.size(), "raw mask payload");
    for (uint8_t v : m.labels)
        if (v > 2) throw DataError("mask payload contains label " + std::to_string(v) + " in " + path);
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["seed"] = manifest.seed;
    j["config_hash"] = manifest.config_hash;
    auto& cases = j["cases"] = nlohmann::json::array();
    for (const auto& c : manifest.cases)
        cases.push_back({{"id", c.id},
                         {"volume", c.volume_path},
                         {"mask", c.mask_path},
                         {"split", c.split}});
    auto os = open_out(path);
    os << j.dump(2) << "\n";
    if (!os) throw DataError("failed while writing " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest " + path + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.seed = j.value("seed", 0ull);
        m.config_hash = j.value("config_hash", "");
        for (const auto& c : j.at("cases")) {
            CaseEntry e;
            e.id = c.at("id").get<std::string>();
            e.volume_path = c.at("volume").get<std::string>();
            e.mask_path = c.at("mask").get<std::string>();
            e.split = c.value("split", "train");
            if (e.split != "train" && e.split != "test")
                throw DataError("manifest case '" + e.id + "' has unknown split '" + e.split + "'");
            m.cases.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path + " is missing fields: " + e.what());
    }
    return m;
}

std::string manifest_relative(const std::string& manifest_path, const std::string& entry_path) {
    std::filesystem::path p(entry_path);
    if (p.is_absolute()) return entry_path;
    return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

}  // namespace curriseg
