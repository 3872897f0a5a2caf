#pragma once

// Brute-force reference implementations used only by tests. Deliberately
// written as direct nested-loop summations so they share no code (and no
// mistakes) with the production kernels.

#include <vector>

#include "curriseg/kernels.hpp"

namespace testsupport {

using curriseg::kernels::Conv3dDims;

inline void conv3d_oracle(const double* x, const double* w, const double* bias, double* y,
                          const Conv3dDims& d) {
    for (int n = 0; n < d.n; ++n)
        for (int co = 0; co < d.co; ++co)
            for (int od = 0; od < d.dz; ++od)
                for (int oh = 0; oh < d.dy; ++oh)
                    for (int ow = 0; ow < d.dx; ++ow) {
                        double acc = bias ? bias[co] : 0.0;
                        for (int ci = 0; ci < d.ci; ++ci)
                            for (int kd = 0; kd < d.k; ++kd)
                                for (int kh = 0; kh < d.k; ++kh)
                                    for (int kw = 0; kw < d.k; ++kw) {
                                        const int id = od * d.stride + kd - d.pad;
                                        const int ih = oh * d.stride + kh - d.pad;
                                        const int iw = ow * d.stride + kw - d.pad;
                                        if (id < 0 || id >= d.di || ih < 0 || ih >= d.hi ||
                                            iw < 0 || iw >= d.wi)
                                            continue;
                                        const double xv =
                                            x[((((static_cast<long long>(n) * d.ci + ci) * d.di + id) * d.hi + ih) * d.wi + iw)];
                                        const double wv =
                                            w[((((static_cast<long long>(co) * d.ci + ci) * d.k + kd) * d.k + kh) * d.k + kw)];
                                        acc += xv * wv;
                                    }
                        y[((((static_cast<long long>(n) * d.co + co) * d.dz + od) * d.dy + oh) * d.dx + ow)] = acc;
                    }
}

inline void conv_transpose3d_oracle(const double* x, const double* w, const double* bias, double* y,
                                    const Conv3dDims& d) {
    const long long out_n = static_cast<long long>(d.n) * d.co * d.dz * d.dy * d.dx;
    for (long long i = 0; i < out_n; ++i) y[i] = 0.0;
    for (int n = 0; n < d.n; ++n)
        for (int ci = 0; ci < d.ci; ++ci)
            for (int id = 0; id < d.di; ++id)
                for (int ih = 0; ih < d.hi; ++ih)
                    for (int iw = 0; iw < d.wi; ++iw) {
                        const double xv =
                            x[((((static_cast<long long>(n) * d.ci + ci) * d.di + id) * d.hi + ih) * d.wi + iw)];
                        for (int co = 0; co < d.co; ++co)
                            for (int kd = 0; kd < d.k; ++kd)
                                for (int kh = 0; kh < d.k; ++kh)
                                    for (int kw = 0; kw < d.k; ++kw) {
                                        const int od = id * d.stride + kd;
                                        const int oh = ih * d.stride + kh;
                                        const int ow = iw * d.stride + kw;
                                        const double wv =
                                            w[((((static_cast<long long>(ci) * d.co + co) * d.k + kd) * d.k + kh) * d.k + kw)];
                                        y[((((static_cast<long long>(n) * d.co + co) * d.dz + od) * d.dy + oh) * d.dx + ow)] += xv * wv;
                                    }
                    }
    if (bias)
        for (int n = 0; n < d.n; ++n)
            for (int co = 0; co < d.co; ++co)
                for (long long i = 0; i < static_cast<long long>(d.dz) * d.dy * d.dx; ++i)
                    y[(static_cast<long long>(n) * d.co + co) * d.dz * d.dy * d.dx + i] += bias[co];
}

}  // namespace testsupport
