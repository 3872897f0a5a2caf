#include "curriseg/network.hpp"

#include <cmath>
#include <stdexcept>

#include "curriseg/errors.hpp"
#include "curriseg/ops.hpp"
#include "curriseg/preprocess.hpp"

namespace curriseg {

namespace {

enum class Init { he, zero, one };

// The output head starts with damped weights so fresh networks predict near
// p = 0.5 instead of saturating the sigmoid.
constexpr double kHeadGain = 0.1;

// Single source of truth for the parameter set: build, counting, and forward
// all agree on names and shapes by construction.
template <typename Fn>
void for_each_param(const NetworkConfig& cfg, Fn fn) {
    int k = cfg.kernel;
    auto ch = [&](int level) { return channels_at_level(cfg.base_channels, level, cfg.channel_cap); };
    auto conv = [&](const std::string& name, int co, int ci, int kk) {
        fn(name + ".weight", Shape{co, ci, kk, kk, kk}, Init::he, int64_t(ci) * kk * kk * kk);
        fn(name + ".bias", Shape{co}, Init::zero, 0);
    };
    auto norm = [&](const std::string& name, int c) {
        fn(name + ".gamma", Shape{c}, Init::one, 0);
        fn(name + ".beta", Shape{c}, Init::zero, 0);
    };
    auto block = [&](const std::string& prefix, int cin, int cout) {
        norm(prefix + ".norm1", cin);
        conv(prefix + ".conv1", cout, cin, k);
        norm(prefix + ".norm2", cout);
        conv(prefix + ".conv2", cout, cout, k);
        if (cin != cout) conv(prefix + ".proj", cout, cin, 1);
    };

    conv("stem", ch(0), cfg.in_channels, k);
    for (int l = 0; l < cfg.levels; ++l) {
        for (int b = 0; b < cfg.blocks_per_level[l]; ++b)
            block("enc" + std::to_string(l) + ".block" + std::to_string(b), ch(l), ch(l));
        if (l + 1 < cfg.levels) conv("enc" + std::to_string(l) + ".down", ch(l + 1), ch(l), k);
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        // Transposed conv halves the channel count; layout is [C_in, C_out, k^3].
        fn("dec" + std::to_string(l) + ".up.weight", Shape{ch(l + 1), ch(l), 2, 2, 2}, Init::he,
           int64_t(ch(l + 1)) * 8);
        fn("dec" + std::to_string(l) + ".up.bias", Shape{ch(l)}, Init::zero, 0);
        for (int b = 0; b < cfg.blocks_per_level[l]; ++b)
            block("dec" + std::to_string(l) + ".block" + std::to_string(b),
                  b == 0 ? 2 * ch(l) : ch(l), ch(l));
    }
    conv("head", cfg.out_channels, ch(0), 1);
}

}  // namespace

void validate(const NetworkConfig& cfg) {
    if (cfg.base_channels < 1) throw DataError("base_channels must be positive");
    if (cfg.channel_cap < cfg.base_channels)
        throw DataError("channel_cap must be at least base_channels");
    if (cfg.levels < 1) throw DataError("levels must be positive");
    if (int(cfg.blocks_per_level.size()) != cfg.levels)
        throw DataError("blocks_per_level must list exactly one entry per level (got " +
                        std::to_string(cfg.blocks_per_level.size()) + " for " +
                        std::to_string(cfg.levels) + " levels)");
    for (int b : cfg.blocks_per_level)
        if (b < 1) throw DataError("blocks_per_level entries must be positive");
    if (cfg.kernel < 1 || cfg.kernel % 2 == 0)
        throw DataError("kernel must be odd so convolutions preserve shape");
    if (cfg.in_channels < 1 || cfg.out_channels < 1)
        throw DataError("channel counts must be positive");
}

NetworkConfig desk_network_config() {
    NetworkConfig cfg;
    cfg.base_channels = 8;
    cfg.levels = 3;
    cfg.blocks_per_level = {1, 2, 2};
    return cfg;
}

int channels_at_level(int base, int level, int cap) {
    int64_t c = base;
    for (int l = 0; l < level && c < cap; ++l) c *= 2;
    return int(std::min<int64_t>(c, cap));
}

const Tensor& Network::param(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::logic_error("no parameter named " + name);
    return params[it->second].tensor;
}

Tensor& Network::param(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::logic_error("no parameter named " + name);
    return params[it->second].tensor;
}

Network build_network(const NetworkConfig& cfg, uint64_t seed) {
    validate(cfg);
    Network net;
    net.config = cfg;
    std::mt19937_64 rng(seed);
    for_each_param(cfg, [&](const std::string& name, Shape shape, Init init, int64_t fan_in) {
        Tensor t;
        switch (init) {
            case Init::he: {
                double stddev = std::sqrt(2.0 / double(fan_in));
                if (name == "head.weight") stddev *= kHeadGain;
                t = Tensor::randn(shape, rng, stddev);
                break;
            }
            case Init::zero: t = Tensor::zeros(shape); break;
            case Init::one: t = Tensor::full(shape, 1.0); break;
        }
        t.set_requires_grad(true);
        net.index.emplace(name, int(net.params.size()));
        net.params.push_back(Parameter{name, t, true});
    });
    if (net.index.size() != net.params.size())
        throw std::logic_error("duplicate parameter name in network layout");
    return net;
}

int64_t param_count(const NetworkConfig& cfg) {
    validate(cfg);
    int64_t total = 0;
    for_each_param(cfg, [&](const std::string&, Shape shape, Init, int64_t) {
        total += shape_numel(shape);
    });
    return total;
}

Tensor forward(const Network& net, const Tensor& x) {
    const NetworkConfig& cfg = net.config;
    if (x.shape().size() != 5)
        throw std::invalid_argument("network input must be rank 5, got " + shape_str(x.shape()));
    if (x.shape()[1] != cfg.in_channels)
        throw std::invalid_argument("network expects " + std::to_string(cfg.in_channels) +
                                    " input channels, got " + std::to_string(x.shape()[1]));
    int div = 1 << (cfg.levels - 1);
    for (int a = 2; a < 5; ++a)
        if (x.shape()[a] % div != 0)
            throw std::invalid_argument("spatial dims must each be divisible by " +
                                        std::to_string(div) + ", got " + shape_str(x.shape()));

    int pad = cfg.kernel / 2;
    auto P = [&](const std::string& n) -> const Tensor& { return net.param(n); };
    auto block = [&](Tensor h, const std::string& prefix, int cin, int cout) {
        Tensor t = ops::instance_norm(h, P(prefix + ".norm1.gamma"), P(prefix + ".norm1.beta"));
        t = ops::relu(t);
        t = ops::conv3d(t, P(prefix + ".conv1.weight"), P(prefix + ".conv1.bias"), 1, pad);
        t = ops::instance_norm(t, P(prefix + ".norm2.gamma"), P(prefix + ".norm2.beta"));
        t = ops::relu(t);
        t = ops::conv3d(t, P(prefix + ".conv2.weight"), P(prefix + ".conv2.bias"), 1, pad);
        Tensor sc = cin == cout
                        ? h
                        : ops::conv3d(h, P(prefix + ".proj.weight"), P(prefix + ".proj.bias"), 1, 0);
        return ops::add(t, sc);
    };
    auto ch = [&](int level) { return channels_at_level(cfg.base_channels, level, cfg.channel_cap); };

    Tensor h = ops::conv3d(x, P("stem.weight"), P("stem.bias"), 1, pad);
    std::vector<Tensor> skips(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) {
        for (int b = 0; b < cfg.blocks_per_level[l]; ++b)
            h = block(h, "enc" + std::to_string(l) + ".block" + std::to_string(b), ch(l), ch(l));
        skips[l] = h;
        if (l + 1 < cfg.levels)
            h = ops::conv3d(h, P("enc" + std::to_string(l) + ".down.weight"),
                            P("enc" + std::to_string(l) + ".down.bias"), 2, pad);
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        h = ops::conv_transpose3d(h, P("dec" + std::to_string(l) + ".up.weight"),
                                  P("dec" + std::to_string(l) + ".up.bias"), 2);
        h = ops::concat_channels(h, skips[l]);
        for (int b = 0; b < cfg.blocks_per_level[l]; ++b)
            h = block(h, "dec" + std::to_string(l) + ".block" + std::to_string(b),
                      b == 0 ? 2 * ch(l) : ch(l), ch(l));
    }
    h = ops::conv3d(h, P("head.weight"), P("head.bias"), 1, 0);
    return ops::sigmoid(h);
}

Volume predict_probabilities(const Network& net, const Volume& v, int window_depth,
                             int window_stride) {
    if (window_depth < 1 || window_stride < 1 || window_stride > window_depth)
        throw DataError("window stride must lie in [1, window depth]");
    NoGradGuard ng;
    int D = v.dims.d, H = v.dims.h, W = v.dims.w;
    std::vector<int> starts = D >= window_depth
                                  ? subvolume_starts(D, window_depth, window_stride)
                                  : std::vector<int>{0};
    int64_t plane = int64_t(H) * W;
    std::vector<double> sum(v.dims.numel(), 0.0);
    std::vector<int> cover(D, 0);
    for (int s : starts) {
        Tensor x = Tensor::zeros({1, 1, window_depth, H, W});
        double* xd = x.data();
        for (int dz = 0; dz < window_depth; ++dz) {
            int z = s + dz;
            if (z >= D) break;
            const float* src = v.values.data() + z * plane;
            std::copy(src, src + plane, xd + dz * plane);
        }
        Tensor y = forward(net, x);
        const double* yd = y.data();
        for (int dz = 0; dz < window_depth; ++dz) {
            int z = s + dz;
            if (z >= D) break;
            double* dst = sum.data() + z * plane;
            const double* row = yd + dz * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] += row[i];
            ++cover[z];
        }
    }
    Volume probs = Volume::create(v.dims, v.spacing, 0.0f);
    probs.provenance = "prediction";
    for (int z = 0; z < D; ++z) {
        double inv = 1.0 / cover[z];
        const double* src = sum.data() + z * plane;
        float* dst = probs.values.data() + z * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = float(src[i] * inv);
    }
    return probs;
}

Mask predict_mask(const Network& net, const Volume& v, int window_depth, int window_stride,
                  double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw DataError("threshold must lie strictly between 0 and 1");
    Volume probs = predict_probabilities(net, v, window_depth, window_stride);
    Mask out = Mask::create(v.dims, v.spacing, 0);
    out.provenance = "prediction";
    for (int64_t i = 0; i < v.dims.numel(); ++i)
        out.labels[i] = probs.values[i] >= threshold ? 1 : 0;
    return out;
}

}  // namespace curriseg
