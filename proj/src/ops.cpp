#include "curriseg/ops.hpp"

#include <cmath>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include "curriseg/kernels.hpp"

namespace curriseg::ops {

namespace {

using kernels::Conv3dDims;

const char* kAxisNames[5] = {"batch", "channel", "depth", "height", "width"};

bool impl_needs_grad(const TensorImpl& t) {
    return t.requires_grad || t.node != nullptr;
}

std::vector<double>& ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
    return t.grad;
}

bool should_track(std::initializer_list<const Tensor*> inputs) {
    if (!grad_recording_enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->needs_grad()) return true;
    return false;
}

void check_rank(const Tensor& t, size_t rank, const std::string& what) {
    if (!t.defined()) throw std::invalid_argument(what + " is undefined");
    if (t.shape().size() != rank)
        throw std::invalid_argument(what + " must be " + std::to_string(rank) + "-D, got shape " +
                                    shape_str(t.shape()));
}

std::shared_ptr<GradNode> input_node(const Tensor& t) {
    return t.defined() ? t.impl()->node : nullptr;
}

Conv3dDims conv_dims_checked(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                             int padding, bool transpose) {
    const char* op = transpose ? "conv_transpose3d" : "conv3d";
    check_rank(x, 5, std::string(op) + " input");
    check_rank(w, 5, std::string(op) + " weight");
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (ws[2] != ws[3] || ws[2] != ws[4])
        throw std::invalid_argument(std::string(op) + ": weight must be cubic, got " + shape_str(ws));
    const int k = ws[2];
    if (k > 16) throw std::invalid_argument(std::string(op) + ": kernel extent > 16 unsupported");
    if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be positive");
    if (padding < 0) throw std::invalid_argument(std::string(op) + ": padding must be non-negative");
    const int cin_axis = transpose ? 0 : 1;  // weight axis holding C_in
    if (xs[1] != ws[cin_axis])
        throw std::invalid_argument(std::string(op) + ": channel axis mismatch: input has " +
                                    std::to_string(xs[1]) + " channels, weight expects " +
                                    std::to_string(ws[cin_axis]));
    const int co = transpose ? ws[1] : ws[0];
    if (bias.defined() && bias.numel() != co)
        throw std::invalid_argument(std::string(op) + ": bias axis mismatch: " +
                                    std::to_string(bias.numel()) + " entries for " +
                                    std::to_string(co) + " output channels");
    if (!transpose) {
        for (int a = 2; a < 5; ++a)
            if (xs[a] + 2 * padding < k)
                throw std::invalid_argument(std::string("conv3d: ") + kAxisNames[a] + " extent " +
                                            std::to_string(xs[a]) + " plus padding is smaller than kernel " +
                                            std::to_string(k));
        return Conv3dDims::conv(xs[0], xs[1], xs[2], xs[3], xs[4], co, k, stride, padding);
    }
    return Conv3dDims::conv_transpose(xs[0], xs[1], xs[2], xs[3], xs[4], co, k, stride);
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    const Conv3dDims d = conv_dims_checked(x, w, bias, stride, padding, false);
    Tensor out = Tensor::zeros({d.n, d.co, d.dz, d.dy, d.dx});
    kernels::conv3d_forward(x.data(), w.data(), bias.defined() ? bias.data() : nullptr, out.data(), d);
    if (should_track({&x, &w, &bias})) {
        auto xi = x.impl();
        auto wi = w.impl();
        auto bi = bias.defined() ? bias.impl() : nullptr;
        std::weak_ptr<TensorImpl> ow = out.impl();
        std::vector<std::shared_ptr<GradNode>> ins{input_node(x), input_node(w)};
        if (bi) ins.push_back(bi->node);
        out.impl()->node = detail::make_node(std::move(ins), [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty()) return;
            const double* gy = o->grad.data();
            if (impl_needs_grad(*xi)) {
                ensure_grad(*xi);
                kernels::conv3d_backward_input(gy, wi->values.data(), xi->grad.data(), d);
            }
            if (impl_needs_grad(*wi)) {
                ensure_grad(*wi);
                kernels::conv3d_backward_weight(gy, xi->values.data(), wi->grad.data(), d);
            }
            if (bi && impl_needs_grad(*bi)) {
                ensure_grad(*bi);
                kernels::conv3d_backward_bias(gy, bi->grad.data(), d);
            }
        });
    }
    return out;
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
    const Conv3dDims d = conv_dims_checked(x, w, bias, stride, 0, true);
    Tensor out = Tensor::zeros({d.n, d.co, d.dz, d.dy, d.dx});
    kernels::conv_transpose3d_forward(x.data(), w.data(), bias.defined() ? bias.data() : nullptr,
                                      out.data(), d);
    if (should_track({&x, &w, &bias})) {
        auto xi = x.impl();
        auto wi = w.impl();
        auto bi = bias.defined() ? bias.impl() : nullptr;
        std::weak_ptr<TensorImpl> ow = out.impl();
        std::vector<std::shared_ptr<GradNode>> ins{input_node(x), input_node(w)};
        if (bi) ins.push_back(bi->node);
        out.impl()->node = detail::make_node(std::move(ins), [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty()) return;
            const double* gy = o->grad.data();
            if (impl_needs_grad(*xi)) {
                ensure_grad(*xi);
                kernels::conv_transpose3d_backward_input(gy, wi->values.data(), xi->grad.data(), d);
            }
            if (impl_needs_grad(*wi)) {
                ensure_grad(*wi);
                kernels::conv_transpose3d_backward_weight(gy, xi->values.data(), wi->grad.data(), d);
            }
            if (bi && impl_needs_grad(*bi)) {
                ensure_grad(*bi);
                kernels::conv_transpose3d_backward_bias(gy, bi->grad.data(), d);
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    if (!x.defined()) throw std::invalid_argument("relu input is undefined");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (should_track({&x})) {
        auto xi = x.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(x)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty() || !impl_needs_grad(*xi)) return;
            auto& gx = ensure_grad(*xi);
            for (size_t i = 0; i < gx.size(); ++i)
                if (xi->values[i] > 0.0) gx[i] += o->grad[i];
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    if (!x.defined()) throw std::invalid_argument("sigmoid input is undefined");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (size_t i = 0; i < xv.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    if (should_track({&x})) {
        auto xi = x.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(x)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty() || !impl_needs_grad(*xi)) return;
            auto& gx = ensure_grad(*xi);
            for (size_t i = 0; i < gx.size(); ++i) {
                const double s = o->values[i];
                gx[i] += o->grad[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined()) throw std::invalid_argument("add input is undefined");
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
    if (should_track({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(a), input_node(b)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty()) return;
            if (impl_needs_grad(*ai)) detail::accumulate_grad(*ai, o->grad);
            if (impl_needs_grad(*bi)) detail::accumulate_grad(*bi, o->grad);
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    if (!x.defined()) throw std::invalid_argument("scale input is undefined");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (size_t i = 0; i < xv.size(); ++i) ov[i] = factor * xv[i];
    if (should_track({&x})) {
        auto xi = x.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(x)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty() || !impl_needs_grad(*xi)) return;
            auto& gx = ensure_grad(*xi);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += factor * o->grad[i];
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check_rank(a, 5, "concat_channels first input");
    check_rank(b, 5, "concat_channels second input");
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    for (int axis : {0, 2, 3, 4})
        if (as[axis] != bs[axis])
            throw std::invalid_argument(std::string("concat_channels: ") + kAxisNames[axis] +
                                        " axis mismatch: " + std::to_string(as[axis]) + " vs " +
                                        std::to_string(bs[axis]));
    const int n = as[0], ca = as[1], cb = bs[1];
    const int64_t sp = static_cast<int64_t>(as[2]) * as[3] * as[4];
    Tensor out = Tensor::zeros({n, ca + cb, as[2], as[3], as[4]});
    const double* av = a.data();
    const double* bv = b.data();
    double* ov = out.data();
    for (int i = 0; i < n; ++i) {
        std::copy(av + i * ca * sp, av + (i + 1) * ca * sp, ov + i * (ca + cb) * sp);
        std::copy(bv + i * cb * sp, bv + (i + 1) * cb * sp, ov + i * (ca + cb) * sp + ca * sp);
    }
    if (should_track({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(a), input_node(b)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty()) return;
            const double* gy = o->grad.data();
            if (impl_needs_grad(*ai)) {
                auto& ga = ensure_grad(*ai);
                for (int i = 0; i < n; ++i) {
                    const double* src = gy + i * (ca + cb) * sp;
                    double* dst = ga.data() + i * ca * sp;
                    for (int64_t j = 0; j < ca * sp; ++j) dst[j] += src[j];
                }
            }
            if (impl_needs_grad(*bi)) {
                auto& gb = ensure_grad(*bi);
                for (int i = 0; i < n; ++i) {
                    const double* src = gy + i * (ca + cb) * sp + ca * sp;
                    double* dst = gb.data() + i * cb * sp;
                    for (int64_t j = 0; j < cb * sp; ++j) dst[j] += src[j];
                }
            }
        });
    }
    return out;
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    check_rank(x, 5, "instance_norm input");
    if (!gamma.defined() || !beta.defined())
        throw std::invalid_argument("instance_norm gamma/beta are undefined");
    const Shape& xs = x.shape();
    const int n = xs[0], c = xs[1];
    const int64_t sp = static_cast<int64_t>(xs[2]) * xs[3] * xs[4];
    if (gamma.numel() != c || beta.numel() != c)
        throw std::invalid_argument("instance_norm: channel axis mismatch: input has " +
                                    std::to_string(c) + " channels, gamma/beta have " +
                                    std::to_string(gamma.numel()) + "/" + std::to_string(beta.numel()));
    if (eps <= 0.0) throw std::invalid_argument("instance_norm: eps must be positive");

    Tensor out = Tensor::zeros(xs);
    std::vector<double> mean(static_cast<size_t>(n) * c), istd(static_cast<size_t>(n) * c);
    const double* xv = x.data();
    const double* gv = gamma.data();
    const double* bv = beta.data();
    double* ov = out.data();
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const double* slice = xv + (static_cast<int64_t>(i) * c + ch) * sp;
            double* oslice = ov + (static_cast<int64_t>(i) * c + ch) * sp;
            double mu = 0.0;
            for (int64_t j = 0; j < sp; ++j) mu += slice[j];
            mu /= static_cast<double>(sp);
            double var = 0.0;
            for (int64_t j = 0; j < sp; ++j) {
                const double dvj = slice[j] - mu;
                var += dvj * dvj;
            }
            var /= static_cast<double>(sp);
            const double is = 1.0 / std::sqrt(var + eps);
            mean[i * c + ch] = mu;
            istd[i * c + ch] = is;
            const double g = gv[ch], b = bv[ch];
            for (int64_t j = 0; j < sp; ++j) oslice[j] = (slice[j] - mu) * is * g + b;
        }

    if (should_track({&x, &gamma, &beta})) {
        auto xi = x.impl();
        auto gi = gamma.impl();
        auto bi = beta.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node(
            {input_node(x), input_node(gamma), input_node(beta)},
            [=, mean = std::move(mean), istd = std::move(istd)]() {
                auto o = ow.lock();
                if (!o || o->grad.empty()) return;
                const double* gy = o->grad.data();
                const bool want_x = impl_needs_grad(*xi);
                const bool want_g = impl_needs_grad(*gi);
                const bool want_b = impl_needs_grad(*bi);
                if (want_x) ensure_grad(*xi);
                if (want_g) ensure_grad(*gi);
                if (want_b) ensure_grad(*bi);
                for (int i = 0; i < n; ++i)
                    for (int ch = 0; ch < c; ++ch) {
                        const int64_t base = (static_cast<int64_t>(i) * c + ch) * sp;
                        const double mu = mean[i * c + ch];
                        const double is = istd[i * c + ch];
                        const double* xs_ = xi->values.data() + base;
                        const double* gys = gy + base;
                        double s1 = 0.0, s2 = 0.0;
                        for (int64_t j = 0; j < sp; ++j) {
                            s1 += gys[j];
                            s2 += gys[j] * (xs_[j] - mu) * is;
                        }
                        if (want_g) gi->grad[ch] += s2;
                        if (want_b) bi->grad[ch] += s1;
                        if (want_x) {
                            const double g = gi->values[ch];
                            const double m1 = s1 / static_cast<double>(sp);
                            const double m2 = s2 / static_cast<double>(sp);
                            double* gx = xi->grad.data() + base;
                            for (int64_t j = 0; j < sp; ++j) {
                                const double xh = (xs_[j] - mu) * is;
                                gx[j] += g * is * (gys[j] - m1 - xh * m2);
                            }
                        }
                    }
            });
    }
    return out;
}

Tensor soft_dice_loss(const Tensor& pred, const Tensor& target, double smooth) {
    if (!pred.defined() || !target.defined())
        throw std::invalid_argument("soft_dice_loss input is undefined");
    if (pred.shape() != target.shape())
        throw std::invalid_argument("soft_dice_loss: shape mismatch " + shape_str(pred.shape()) +
                                    " vs " + shape_str(target.shape()));
    if (smooth < 0.0) throw std::invalid_argument("soft_dice_loss: smooth must be non-negative");
    const auto& pv = pred.values();
    const auto& tv = target.values();
    double sp = 0.0, st = 0.0, spt = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        sp += pv[i];
        st += tv[i];
        spt += pv[i] * tv[i];
    }
    const double numer = 2.0 * spt + smooth;
    const double denom = sp + st + smooth;
    // denom == 0 only for smooth == 0 with both sides empty: perfect agreement.
    const double loss = denom > 0.0 ? 1.0 - numer / denom : 0.0;
    Tensor out = Tensor::scalar(loss);
    if (should_track({&pred})) {
        auto pi = pred.impl();
        auto ti = target.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(pred)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty() || !impl_needs_grad(*pi) || denom <= 0.0) return;
            const double gy = o->grad[0];
            auto& gp = ensure_grad(*pi);
            const double inv2 = 1.0 / (denom * denom);
            for (size_t i = 0; i < gp.size(); ++i)
                gp[i] += gy * -(2.0 * ti->values[i] * denom - numer) * inv2;
        });
    }
    return out;
}

Tensor bce_loss(const Tensor& pred, const Tensor& target, double eps) {
    if (!pred.defined() || !target.defined())
        throw std::invalid_argument("bce_loss input is undefined");
    if (pred.shape() != target.shape())
        throw std::invalid_argument("bce_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                    shape_str(target.shape()));
    const auto& pv = pred.values();
    const auto& tv = target.values();
    const double inv_n = 1.0 / static_cast<double>(pv.size());
    double acc = 0.0;
    for (size_t i = 0; i < pv.size(); ++i)
        acc -= tv[i] * std::log(pv[i] + eps) + (1.0 - tv[i]) * std::log(1.0 - pv[i] + eps);
    Tensor out = Tensor::scalar(acc * inv_n);
    if (should_track({&pred})) {
        auto pi = pred.impl();
        auto ti = target.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(pred)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty() || !impl_needs_grad(*pi)) return;
            const double gy = o->grad[0];
            auto& gp = ensure_grad(*pi);
            for (size_t i = 0; i < gp.size(); ++i) {
                const double t = ti->values[i], p = pi->values[i];
                gp[i] += gy * inv_n * (-t / (p + eps) + (1.0 - t) / (1.0 - p + eps));
            }
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    if (!x.defined()) throw std::invalid_argument("sum_all input is undefined");
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (should_track({&x})) {
        auto xi = x.impl();
        std::weak_ptr<TensorImpl> ow = out.impl();
        out.impl()->node = detail::make_node({input_node(x)}, [=]() {
            auto o = ow.lock();
            if (!o || o->grad.empty() || !impl_needs_grad(*xi)) return;
            const double gy = o->grad[0];
            auto& gx = ensure_grad(*xi);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
        });
    }
    return out;
}

}  // namespace curriseg::ops
