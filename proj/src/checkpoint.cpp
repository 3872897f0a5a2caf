#include "curriseg/checkpoint.hpp"

#include <fstream>

#include "curriseg/binio.hpp"
#include "curriseg/errors.hpp"

namespace curriseg {

namespace {
constexpr char kMagic[8] = {'C', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    binio::put_bytes(os, kMagic, 8);
    binio::put_u32(os, kCheckpointVersion);
    binio::put_string(os, data.meta_json);
    binio::put_u32(os, static_cast<uint32_t>(data.params.size()));
    for (const auto& p : data.params) {
        binio::put_string(os, p.name);
        os.put(p.trainable ? 1 : 0);
        const Shape& s = p.tensor.shape();
        binio::put_u32(os, static_cast<uint32_t>(s.size()));
        for (int d : s) binio::put_u32(os, static_cast<uint32_t>(d));
        binio::put_f64_array(os, p.tensor.values());
    }
    os.put(data.has_optimizer ? 1 : 0);
    if (data.has_optimizer) {
        binio::put_f64(os, data.opt.hyper.lr);
        binio::put_f64(os, data.opt.hyper.beta1);
        binio::put_f64(os, data.opt.hyper.beta2);
        binio::put_f64(os, data.opt.hyper.eps);
        binio::put_u64(os, static_cast<uint64_t>(data.opt.step_count));
        binio::put_u32(os, static_cast<uint32_t>(data.opt.m.size()));
        for (const auto& [name, m] : data.opt.m) {
            auto vit = data.opt.v.find(name);
            if (vit == data.opt.v.end() || vit->second.size() != m.size())
                throw DataError("optimizer state for '" + name + "' has mismatched moment buffers");
            binio::put_string(os, name);
            binio::put_u64(os, m.size());
            binio::put_f64_array(os, m);
            binio::put_f64_array(os, vit->second);
        }
    }
    if (!os) throw DataError("failed while writing checkpoint: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    binio::get_bytes(is, magic, 8, "checkpoint magic");
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a checkpoint file (bad magic): " + path);
    const uint32_t version = binio::get_u32(is, "checkpoint version");
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);

    CheckpointData data;
    data.meta_json = binio::get_string(is, "checkpoint metadata", 64u << 20);
    const uint32_t n_params = binio::get_u32(is, "parameter count");
    data.params.reserve(n_params);
    for (uint32_t i = 0; i < n_params; ++i) {
        Parameter p;
        p.name = binio::get_string(is, "parameter name");
        int flag = is.get();
        if (flag == EOF) throw DataError("truncated file while reading parameter flags");
        p.trainable = flag != 0;
        const uint32_t rank = binio::get_u32(is, "parameter rank");
        if (rank > 8) throw DataError("implausible parameter rank in " + path);
        Shape shape(rank);
        int64_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<int>(binio::get_u32(is, "parameter shape"));
            if (d <= 0) throw DataError("non-positive parameter extent in " + path);
            numel *= d;
        }
        if (numel > (1ll << 32)) throw DataError("implausible parameter size in " + path);
        p.tensor = Tensor::from(shape, binio::get_f64_array(is, static_cast<uint64_t>(numel),
                                                            "parameter values"));
        data.params.push_back(std::move(p));
    }
    const int has_opt = is.get();
    if (has_opt == EOF) throw DataError("truncated file while reading optimizer flag");
    data.has_optimizer = has_opt != 0;
    if (data.has_optimizer) {
        data.opt.hyper.lr = binio::get_f64(is, "optimizer lr");
        data.opt.hyper.beta1 = binio::get_f64(is, "optimizer beta1");
        data.opt.hyper.beta2 = binio::get_f64(is, "optimizer beta2");
        data.opt.hyper.eps = binio::get_f64(is, "optimizer eps");
        data.opt.step_count = static_cast<int64_t>(binio::get_u64(is, "optimizer step count"));
        const uint32_t n_entries = binio::get_u32(is, "optimizer entry count");
        for (uint32_t i = 0; i < n_entries; ++i) {
            std::string name = binio::get_string(is, "optimizer entry name");
            const uint64_t count = binio::get_u64(is, "optimizer entry size");
            if (count > (1ull << 32)) throw DataError("implausible optimizer entry size in " + path);
            data.opt.m[name] = binio::get_f64_array(is, count, "first moments");
            data.opt.v[name] = binio::get_f64_array(is, count, "second moments");
        }
    }
    return data;
}

}  // namespace curriseg
