#include "curriseg/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>

namespace curriseg::kernels {

namespace {

std::atomic<bool> g_parallel{true};

inline int64_t idx5(int a, int b, int c, int e, int f, int B, int C, int E, int F) {
    return ((((static_cast<int64_t>(a) * B + b) * C + c) * E + e) * F + f);
}

// Smallest ow >= 0 with ow*stride + kw - pad >= 0.
inline int first_out(int kw, int pad, int stride) {
    return pad > kw ? (pad - kw + stride - 1) / stride : 0;
}

// Largest ow with ow*stride + kw - pad <= wi-1, or -1 when none.
inline int last_out(int kw, int pad, int stride, int wi) {
    int num = wi - 1 + pad - kw;
    return num < 0 ? -1 : num / stride;
}

// yrow[ow] += sum_kw wrow[kw] * xrow[ow*stride + kw - pad] over valid taps.
inline void accum_row(const double* xrow, const double* wrow, double* yrow,
                      int k, int pad, int stride, int wi, int wo) {
    if (stride == 1) {
        // Interior columns where every tap lands inside the input row.
        int lo = std::min(std::max(0, pad), wo);
        int hi = std::min(wo - 1, wi - k + pad);
        if (k == 3 && hi >= lo) {
            const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
            const double* xs = xrow - pad;
            for (int ow = lo; ow <= hi; ++ow)
                yrow[ow] += w0 * xs[ow] + w1 * xs[ow + 1] + w2 * xs[ow + 2];
        } else if (hi >= lo) {
            for (int kw = 0; kw < k; ++kw) {
                const double wv = wrow[kw];
                const double* xs = xrow + kw - pad;
                for (int ow = lo; ow <= hi; ++ow) yrow[ow] += wv * xs[ow];
            }
        }
        for (int ow = 0; ow < lo; ++ow)
            for (int kw = 0; kw < k; ++kw) {
                int iw = ow + kw - pad;
                if (iw >= 0 && iw < wi) yrow[ow] += wrow[kw] * xrow[iw];
            }
        for (int ow = std::max(hi + 1, lo); ow < wo; ++ow)
            for (int kw = 0; kw < k; ++kw) {
                int iw = ow + kw - pad;
                if (iw >= 0 && iw < wi) yrow[ow] += wrow[kw] * xrow[iw];
            }
        return;
    }
    for (int kw = 0; kw < k; ++kw) {
        const double wv = wrow[kw];
        int lo = first_out(kw, pad, stride);
        int hi = std::min(wo - 1, last_out(kw, pad, stride, wi));
        for (int ow = lo; ow <= hi; ++ow) yrow[ow] += wv * xrow[ow * stride + kw - pad];
    }
}

// One (n,co) output block of conv3d.
void conv3d_block(const double* x, const double* w, const double* bias, double* y,
                  const Conv3dDims& d, int n, int co) {
    const int k = d.k, s = d.stride, p = d.pad;
    const double bv = bias ? bias[co] : 0.0;
    for (int od = 0; od < d.dz; ++od)
        for (int oh = 0; oh < d.dy; ++oh) {
            double* yrow = y + idx5(n, co, od, oh, 0, d.co, d.dz, d.dy, d.dx);
            for (int ow = 0; ow < d.dx; ++ow) yrow[ow] = bv;
            for (int ci = 0; ci < d.ci; ++ci) {
                const double* xc = x + idx5(n, ci, 0, 0, 0, d.ci, d.di, d.hi, d.wi);
                const double* wc = w + (static_cast<int64_t>(co) * d.ci + ci) * k * k * k;
                for (int kd = 0; kd < k; ++kd) {
                    const int id = od * s + kd - p;
                    if (id < 0 || id >= d.di) continue;
                    for (int kh = 0; kh < k; ++kh) {
                        const int ih = oh * s + kh - p;
                        if (ih < 0 || ih >= d.hi) continue;
                        accum_row(xc + (static_cast<int64_t>(id) * d.hi + ih) * d.wi,
                                  wc + (kd * k + kh) * k, yrow, k, p, s, d.wi, d.dx);
                    }
                }
            }
        }
}

// One (n,ci,id) gradient block of conv3d w.r.t. its input.
void conv3d_bwd_input_block(const double* gy, const double* w, double* gx,
                            const Conv3dDims& d, int n, int ci, int id) {
    const int k = d.k, s = d.stride, p = d.pad;
    for (int ih = 0; ih < d.hi; ++ih) {
        double* gxrow = gx + idx5(n, ci, id, ih, 0, d.ci, d.di, d.hi, d.wi);
        for (int co = 0; co < d.co; ++co) {
            const double* gyc = gy + idx5(n, co, 0, 0, 0, d.co, d.dz, d.dy, d.dx);
            const double* wc = w + (static_cast<int64_t>(co) * d.ci + ci) * k * k * k;
            for (int kd = 0; kd < k; ++kd) {
                const int t = id + p - kd;
                if (t < 0 || t % s) continue;
                const int od = t / s;
                if (od >= d.dz) continue;
                for (int kh = 0; kh < k; ++kh) {
                    const int u = ih + p - kh;
                    if (u < 0 || u % s) continue;
                    const int oh = u / s;
                    if (oh >= d.dy) continue;
                    const double* gyrow = gyc + (static_cast<int64_t>(od) * d.dy + oh) * d.dx;
                    const double* wrow = wc + (kd * k + kh) * k;
                    for (int kw = 0; kw < k; ++kw) {
                        const double wv = wrow[kw];
                        int lo = first_out(kw, p, s);
                        int hi = std::min(d.dx - 1, last_out(kw, p, s, d.wi));
                        if (s == 1) {
                            double* gxs = gxrow + kw - p;
                            for (int ow = lo; ow <= hi; ++ow) gxs[ow] += wv * gyrow[ow];
                        } else {
                            for (int ow = lo; ow <= hi; ++ow)
                                gxrow[ow * s + kw - p] += wv * gyrow[ow];
                        }
                    }
                }
            }
        }
    }
}

// Gradient of conv3d w.r.t. one (co,ci) weight slab.
void conv3d_bwd_weight_block(const double* gy, const double* x, double* gw,
                             const Conv3dDims& d, int co, int ci) {
    const int k = d.k, s = d.stride, p = d.pad;
    double* gwc = gw + (static_cast<int64_t>(co) * d.ci + ci) * k * k * k;
    for (int kd = 0; kd < k; ++kd)
        for (int kh = 0; kh < k; ++kh) {
            double acc[16] = {0.0};  // per-kw sums, k <= 16
            for (int n = 0; n < d.n; ++n) {
                const double* gyc = gy + idx5(n, co, 0, 0, 0, d.co, d.dz, d.dy, d.dx);
                const double* xc = x + idx5(n, ci, 0, 0, 0, d.ci, d.di, d.hi, d.wi);
                for (int od = 0; od < d.dz; ++od) {
                    const int id = od * s + kd - p;
                    if (id < 0 || id >= d.di) continue;
                    for (int oh = 0; oh < d.dy; ++oh) {
                        const int ih = oh * s + kh - p;
                        if (ih < 0 || ih >= d.hi) continue;
                        const double* gyrow = gyc + (static_cast<int64_t>(od) * d.dy + oh) * d.dx;
                        const double* xrow = xc + (static_cast<int64_t>(id) * d.hi + ih) * d.wi;
                        if (s == 1 && k == 3) {
                            int lo = std::min(std::max(0, p), d.dx);
                            int hi = std::min(d.dx - 1, d.wi - k + p);
                            const double* xs = xrow - p;
                            double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                            for (int ow = lo; ow <= hi; ++ow) {
                                const double g = gyrow[ow];
                                a0 += g * xs[ow];
                                a1 += g * xs[ow + 1];
                                a2 += g * xs[ow + 2];
                            }
                            acc[0] += a0;
                            acc[1] += a1;
                            acc[2] += a2;
                            for (int ow = 0; ow < lo; ++ow)
                                for (int kw = 0; kw < k; ++kw) {
                                    int iw = ow + kw - p;
                                    if (iw >= 0 && iw < d.wi) acc[kw] += gyrow[ow] * xrow[iw];
                                }
                            for (int ow = std::max(hi + 1, lo); ow < d.dx; ++ow)
                                for (int kw = 0; kw < k; ++kw) {
                                    int iw = ow + kw - p;
                                    if (iw >= 0 && iw < d.wi) acc[kw] += gyrow[ow] * xrow[iw];
                                }
                        } else {
                            for (int kw = 0; kw < k; ++kw) {
                                double a = 0.0;
                                int lo = first_out(kw, p, s);
                                int hi = std::min(d.dx - 1, last_out(kw, p, s, d.wi));
                                for (int ow = lo; ow <= hi; ++ow)
                                    a += gyrow[ow] * xrow[ow * s + kw - p];
                                acc[kw] += a;
                            }
                        }
                    }
                }
            }
            for (int kw = 0; kw < k; ++kw) gwc[(kd * k + kh) * k + kw] += acc[kw];
        }
}

// One (n,co,od) output block of the transposed convolution.
void convt_block(const double* x, const double* w, const double* bias, double* y,
                 const Conv3dDims& d, int n, int co, int od) {
    const int k = d.k, s = d.stride;
    const double bv = bias ? bias[co] : 0.0;
    for (int oh = 0; oh < d.dy; ++oh) {
        double* yrow = y + idx5(n, co, od, oh, 0, d.co, d.dz, d.dy, d.dx);
        for (int ow = 0; ow < d.dx; ++ow) yrow[ow] = bv;
        for (int ci = 0; ci < d.ci; ++ci) {
            const double* xc = x + idx5(n, ci, 0, 0, 0, d.ci, d.di, d.hi, d.wi);
            const double* wc = w + (static_cast<int64_t>(ci) * d.co + co) * k * k * k;
            for (int kd = 0; kd < k; ++kd) {
                const int t = od - kd;
                if (t < 0 || t % s) continue;
                const int id = t / s;
                if (id >= d.di) continue;
                for (int kh = 0; kh < k; ++kh) {
                    const int u = oh - kh;
                    if (u < 0 || u % s) continue;
                    const int ih = u / s;
                    if (ih >= d.hi) continue;
                    const double* xrow = xc + (static_cast<int64_t>(id) * d.hi + ih) * d.wi;
                    const double* wrow = wc + (kd * k + kh) * k;
                    for (int kw = 0; kw < k; ++kw) {
                        const double wv = wrow[kw];
                        const int iw_hi = std::min(d.wi - 1, (d.dx - 1 - kw) / s);
                        for (int iw = 0; iw <= iw_hi; ++iw)
                            yrow[iw * s + kw] += wv * xrow[iw];
                    }
                }
            }
        }
    }
}

// Input gradient of the transposed convolution; every tap is in range by
// construction of the output extent.
void convt_bwd_input_block(const double* gy, const double* w, double* gx,
                           const Conv3dDims& d, int n, int ci, int id) {
    const int k = d.k, s = d.stride;
    for (int ih = 0; ih < d.hi; ++ih) {
        double* gxrow = gx + idx5(n, ci, id, ih, 0, d.ci, d.di, d.hi, d.wi);
        for (int co = 0; co < d.co; ++co) {
            const double* gyc = gy + idx5(n, co, 0, 0, 0, d.co, d.dz, d.dy, d.dx);
            const double* wc = w + (static_cast<int64_t>(ci) * d.co + co) * k * k * k;
            for (int kd = 0; kd < k; ++kd) {
                const int od = id * s + kd;
                for (int kh = 0; kh < k; ++kh) {
                    const int oh = ih * s + kh;
                    const double* gyrow = gyc + (static_cast<int64_t>(od) * d.dy + oh) * d.dx;
                    const double* wrow = wc + (kd * k + kh) * k;
                    for (int kw = 0; kw < k; ++kw) {
                        const double wv = wrow[kw];
                        for (int iw = 0; iw < d.wi; ++iw)
                            gxrow[iw] += wv * gyrow[iw * s + kw];
                    }
                }
            }
        }
    }
}

void convt_bwd_weight_block(const double* gy, const double* x, double* gw,
                            const Conv3dDims& d, int ci, int co) {
    const int k = d.k, s = d.stride;
    double* gwc = gw + (static_cast<int64_t>(ci) * d.co + co) * k * k * k;
    for (int kd = 0; kd < k; ++kd)
        for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
                double acc = 0.0;
                for (int n = 0; n < d.n; ++n) {
                    const double* gyc = gy + idx5(n, co, 0, 0, 0, d.co, d.dz, d.dy, d.dx);
                    const double* xc = x + idx5(n, ci, 0, 0, 0, d.ci, d.di, d.hi, d.wi);
                    for (int id = 0; id < d.di; ++id) {
                        const int od = id * s + kd;
                        for (int ih = 0; ih < d.hi; ++ih) {
                            const int oh = ih * s + kh;
                            const double* gyrow =
                                gyc + (static_cast<int64_t>(od) * d.dy + oh) * d.dx + kw;
                            const double* xrow =
                                xc + (static_cast<int64_t>(id) * d.hi + ih) * d.wi;
                            double a = 0.0;
                            for (int iw = 0; iw < d.wi; ++iw) a += xrow[iw] * gyrow[iw * s];
                            acc += a;
                        }
                    }
                }
                gwc[(kd * k + kh) * k + kw] += acc;
            }
}

}  // namespace

bool parallel_enabled() {
    return g_parallel.load();
}

void set_parallel(bool enabled) {
    g_parallel.store(enabled);
}

Conv3dDims Conv3dDims::conv(int n, int ci, int di, int hi, int wi, int co, int k, int stride, int pad) {
    Conv3dDims d{};
    d.n = n; d.ci = ci; d.co = co;
    d.di = di; d.hi = hi; d.wi = wi;
    d.k = k; d.stride = stride; d.pad = pad;
    d.dz = (di + 2 * pad - k) / stride + 1;
    d.dy = (hi + 2 * pad - k) / stride + 1;
    d.dx = (wi + 2 * pad - k) / stride + 1;
    return d;
}

Conv3dDims Conv3dDims::conv_transpose(int n, int ci, int di, int hi, int wi, int co, int k, int stride) {
    Conv3dDims d{};
    d.n = n; d.ci = ci; d.co = co;
    d.di = di; d.hi = hi; d.wi = wi;
    d.k = k; d.stride = stride; d.pad = 0;
    d.dz = (di - 1) * stride + k;
    d.dy = (hi - 1) * stride + k;
    d.dx = (wi - 1) * stride + k;
    return d;
}

void conv3d_forward_serial(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int co = 0; co < d.co; ++co) conv3d_block(x, w, bias, y, d, n, co);
}

void conv3d_forward_omp(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int co = 0; co < d.co; ++co) conv3d_block(x, w, bias, y, d, n, co);
}

void conv3d_forward(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d) {
    if (parallel_enabled())
        conv3d_forward_omp(x, w, bias, y, d);
    else
        conv3d_forward_serial(x, w, bias, y, d);
}

void conv3d_backward_input_serial(const double* gy, const double* w, double* gx, const Conv3dDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int ci = 0; ci < d.ci; ++ci)
            for (int id = 0; id < d.di; ++id) conv3d_bwd_input_block(gy, w, gx, d, n, ci, id);
}

void conv3d_backward_input_omp(const double* gy, const double* w, double* gx, const Conv3dDims& d) {
#pragma omp parallel for collapse(3) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int ci = 0; ci < d.ci; ++ci)
            for (int id = 0; id < d.di; ++id) conv3d_bwd_input_block(gy, w, gx, d, n, ci, id);
}

void conv3d_backward_input(const double* gy, const double* w, double* gx, const Conv3dDims& d) {
    if (parallel_enabled())
        conv3d_backward_input_omp(gy, w, gx, d);
    else
        conv3d_backward_input_serial(gy, w, gx, d);
}

void conv3d_backward_weight_serial(const double* gy, const double* x, double* gw, const Conv3dDims& d) {
    for (int co = 0; co < d.co; ++co)
        for (int ci = 0; ci < d.ci; ++ci) conv3d_bwd_weight_block(gy, x, gw, d, co, ci);
}

void conv3d_backward_weight_omp(const double* gy, const double* x, double* gw, const Conv3dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < d.co; ++co)
        for (int ci = 0; ci < d.ci; ++ci) conv3d_bwd_weight_block(gy, x, gw, d, co, ci);
}

void conv3d_backward_weight(const double* gy, const double* x, double* gw, const Conv3dDims& d) {
    if (parallel_enabled())
        conv3d_backward_weight_omp(gy, x, gw, d);
    else
        conv3d_backward_weight_serial(gy, x, gw, d);
}

void conv3d_backward_bias(const double* gy, double* gb, const Conv3dDims& d) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.co; ++co) {
        double acc = 0.0;
        for (int n = 0; n < d.n; ++n) {
            const double* gyc = gy + idx5(n, co, 0, 0, 0, d.co, d.dz, d.dy, d.dx);
            const int64_t vol = static_cast<int64_t>(d.dz) * d.dy * d.dx;
            for (int64_t i = 0; i < vol; ++i) acc += gyc[i];
        }
        gb[co] += acc;
    }
}

void conv_transpose3d_forward_serial(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int co = 0; co < d.co; ++co)
            for (int od = 0; od < d.dz; ++od) convt_block(x, w, bias, y, d, n, co, od);
}

void conv_transpose3d_forward_omp(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d) {
#pragma omp parallel for collapse(3) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int co = 0; co < d.co; ++co)
            for (int od = 0; od < d.dz; ++od) convt_block(x, w, bias, y, d, n, co, od);
}

void conv_transpose3d_forward(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d) {
    if (parallel_enabled())
        conv_transpose3d_forward_omp(x, w, bias, y, d);
    else
        conv_transpose3d_forward_serial(x, w, bias, y, d);
}

void conv_transpose3d_backward_input_serial(const double* gy, const double* w, double* gx, const Conv3dDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int ci = 0; ci < d.ci; ++ci)
            for (int id = 0; id < d.di; ++id) convt_bwd_input_block(gy, w, gx, d, n, ci, id);
}

void conv_transpose3d_backward_input_omp(const double* gy, const double* w, double* gx, const Conv3dDims& d) {
#pragma omp parallel for collapse(3) schedule(static)
    for (int n = 0; n < d.n; ++n)
        for (int ci = 0; ci < d.ci; ++ci)
            for (int id = 0; id < d.di; ++id) convt_bwd_input_block(gy, w, gx, d, n, ci, id);
}

void conv_transpose3d_backward_input(const double* gy, const double* w, double* gx, const Conv3dDims& d) {
    if (parallel_enabled())
        conv_transpose3d_backward_input_omp(gy, w, gx, d);
    else
        conv_transpose3d_backward_input_serial(gy, w, gx, d);
}

void conv_transpose3d_backward_weight_serial(const double* gy, const double* x, double* gw, const Conv3dDims& d) {
    for (int ci = 0; ci < d.ci; ++ci)
        for (int co = 0; co < d.co; ++co) convt_bwd_weight_block(gy, x, gw, d, ci, co);
}

void conv_transpose3d_backward_weight_omp(const double* gy, const double* x, double* gw, const Conv3dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < d.ci; ++ci)
        for (int co = 0; co < d.co; ++co) convt_bwd_weight_block(gy, x, gw, d, ci, co);
}

void conv_transpose3d_backward_weight(const double* gy, const double* x, double* gw, const Conv3dDims& d) {
    if (parallel_enabled())
        conv_transpose3d_backward_weight_omp(gy, x, gw, d);
    else
        conv_transpose3d_backward_weight_serial(gy, x, gw, d);
}

void conv_transpose3d_backward_bias(const double* gy, double* gb, const Conv3dDims& d) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.co; ++co) {
        double acc = 0.0;
        for (int n = 0; n < d.n; ++n) {
            const double* gyc = gy + idx5(n, co, 0, 0, 0, d.co, d.dz, d.dy, d.dx);
            const int64_t vol = static_cast<int64_t>(d.dz) * d.dy * d.dx;
            for (int64_t i = 0; i < vol; ++i) acc += gyc[i];
        }
        gb[co] += acc;
    }
}

}  // namespace curriseg::kernels
