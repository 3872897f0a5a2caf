#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "curriseg/errors.hpp"
#include "curriseg/log.hpp"
#include "curriseg/volume_io.hpp"

namespace curriseg {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw DataError("cannot open NIfTI file: " + path);
    const auto size = is.tellg();
    is.seekg(0);
    std::vector<unsigned char> buf(static_cast<size_t>(size));
    if (!buf.empty()) is.read(reinterpret_cast<char*>(buf.data()), size);
    if (!is) throw DataError("failed while reading " + path);
    return buf;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in, const std::string& path) {
    z_stream strm{};
    if (inflateInit2(&strm, 15 + 32) != Z_OK) throw DataError("zlib initialization failed");
    std::vector<unsigned char> out(std::max<size_t>(in.size() * 4, 1 << 16));
    strm.next_in = const_cast<unsigned char*>(in.data());
    strm.avail_in = static_cast<uInt>(in.size());
    size_t written = 0;
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        strm.next_out = out.data() + written;
        strm.avail_out = static_cast<uInt>(out.size() - written);
        ret = inflate(&strm, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&strm);
            throw DataError("corrupt gzip stream in " + path);
        }
        written = out.size() - strm.avail_out;
        if (ret == Z_OK && strm.avail_in == 0 && strm.avail_out > 0) {
            inflateEnd(&strm);
            throw DataError("truncated gzip stream in " + path);
        }
    }
    inflateEnd(&strm);
    out.resize(written);
    return out;
}

int16_t rd_i16(const unsigned char* b) {
    return static_cast<int16_t>(static_cast<uint16_t>(b[0]) | (static_cast<uint16_t>(b[1]) << 8));
}

int32_t rd_i32(const unsigned char* b) {
    uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                 (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    return static_cast<int32_t>(u);
}

float rd_f32(const unsigned char* b) {
    uint32_t u = static_cast<uint32_t>(rd_i32(b));
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

// NIfTI-1 datatype codes.
constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtFloat32 = 16;

}  // namespace

NiftiResult read_nifti(const std::string& path) {
    std::vector<unsigned char> buf = read_file(path);
    if (buf.size() >= 2 && buf[0] == 0x1f && buf[1] == 0x8b) buf = gunzip(buf, path);
    if (buf.size() < 348) throw DataError("not NIfTI-1: shorter than the 348-byte header: " + path);

    if (std::memcmp(buf.data() + 344, "ni1", 4) == 0)
        throw DataError("two-file NIfTI (magic \"ni1\") is unsupported, need single-file \"n+1\": " + path);
    if (std::memcmp(buf.data() + 344, "n+1", 4) != 0)
        throw DataError("not NIfTI-1 (bad magic): " + path);

    const int32_t hdr_size = rd_i32(buf.data());
    if (hdr_size != 348) {
        if (hdr_size == 0x5C010000)
            throw DataError("big-endian NIfTI is unsupported: " + path);
        throw DataError("not NIfTI-1 (header size " + std::to_string(hdr_size) + "): " + path);
    }

    const int16_t rank = rd_i16(buf.data() + 40);
    if (rank < 3 || rank > 7)
        throw DataError("NIfTI dim[0]=" + std::to_string(rank) + " unsupported (need 3-D): " + path);
    const int nx = rd_i16(buf.data() + 42), ny = rd_i16(buf.data() + 44), nz = rd_i16(buf.data() + 46);
    if (nx < 1 || ny < 1 || nz < 1)
        throw DataError("NIfTI has non-positive spatial dims: " + path);
    for (int i = 4; i <= rank; ++i)
        if (rd_i16(buf.data() + 40 + 2 * static_cast<size_t>(i)) > 1)
            throw DataError("NIfTI with a non-trivial dimension beyond 3-D is unsupported: " + path);

    const int16_t dtype = rd_i16(buf.data() + 70);
    if (dtype != kDtUint8 && dtype != kDtInt16 && dtype != kDtFloat32)
        throw DataError("unsupported NIfTI datatype code " + std::to_string(dtype) + " in " + path);
    const size_t elem = dtype == kDtUint8 ? 1 : dtype == kDtInt16 ? 2 : 4;

    Spacing spacing;
    const double pd[3] = {rd_f32(buf.data() + 80), rd_f32(buf.data() + 84), rd_f32(buf.data() + 88)};
    double fixed[3];
    for (int i = 0; i < 3; ++i) {
        fixed[i] = pd[i];
        if (!(pd[i] > 0.0)) {
            log_warn("NIfTI pixdim[" + std::to_string(i + 1) + "] is " + std::to_string(pd[i]) +
                     ", substituting 1.0 mm: " + path);
            fixed[i] = 1.0;
        }
    }
    spacing.x = fixed[0];
    spacing.y = fixed[1];
    spacing.z = fixed[2];

    const float vox_offset_f = rd_f32(buf.data() + 108);
    if (!(vox_offset_f >= 348.0f) || std::isnan(vox_offset_f))
        throw DataError("NIfTI vox_offset " + std::to_string(vox_offset_f) + " is invalid: " + path);
    const size_t vox_offset = static_cast<size_t>(vox_offset_f);

    const float slope = rd_f32(buf.data() + 112);
    const float inter = rd_f32(buf.data() + 116);
    if (rd_i16(buf.data() + 252) != 0 || rd_i16(buf.data() + 254) != 0)
        log_warn("NIfTI orientation matrices (qform/sform) are ignored: " + path);

    const int64_t n = static_cast<int64_t>(nx) * ny * nz;
    if (vox_offset + static_cast<size_t>(n) * elem > buf.size())
        throw DataError("truncated NIfTI data section (need " + std::to_string(n * elem) +
                        " bytes at offset " + std::to_string(vox_offset) + "): " + path);

    // NIfTI stores x fastest, z slowest — the same linear order as our
    // (z,y,x) layout with W=nx, H=ny, D=nz, so values copy straight through.
    NiftiResult out;
    out.volume = Volume::create({nz, ny, nx}, spacing);
    out.volume.provenance = "nifti:" + std::filesystem::path(path).filename().string();
    const unsigned char* src = buf.data() + vox_offset;
    const bool scaled = slope != 0.0f;
    bool label_like = dtype != kDtFloat32;
    for (int64_t i = 0; i < n; ++i) {
        double v;
        if (dtype == kDtUint8) {
            v = src[i];
        } else if (dtype == kDtInt16) {
            v = rd_i16(src + 2 * i);
        } else {
            v = rd_f32(src + 4 * i);
        }
        if (scaled) v = v * slope + inter;
        out.volume.values[i] = static_cast<float>(v);
        if (label_like && !(v == 0.0 || v == 1.0 || v == 2.0)) label_like = false;
    }
    if (label_like && n > 0) {
        Mask m = Mask::create({nz, ny, nx}, spacing);
        m.provenance = out.volume.provenance;
        for (int64_t i = 0; i < n; ++i) m.labels[i] = static_cast<uint8_t>(out.volume.values[i]);
        out.labels = std::move(m);
    }
    return out;
}

}  // namespace curriseg
