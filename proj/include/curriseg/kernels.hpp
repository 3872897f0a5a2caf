#pragma once

// Dense 3D convolution kernels. Every kernel comes in two variants: a plain
// serial reference and an OpenMP one. The parallel variants partition work
// over independent output (or gradient) elements only — no reduction is ever
// split across threads — so both variants produce bitwise-identical results
// for any thread count, and runs are reproducible.
//
// Gradient kernels accumulate (+=) into their destination buffer.

namespace curriseg::kernels {

// Process-wide switch consulted by the dispatching entry points.
bool parallel_enabled();
void set_parallel(bool enabled);

struct Conv3dDims {
    int n;                // batch
    int ci, co;           // channels in/out
    int di, hi, wi;       // input spatial
    int k;                // cubic kernel extent
    int stride;
    int pad;              // zero padding, conv3d only
    int dz, dy, dx;       // output spatial

    static Conv3dDims conv(int n, int ci, int di, int hi, int wi, int co, int k, int stride, int pad);
    static Conv3dDims conv_transpose(int n, int ci, int di, int hi, int wi, int co, int k, int stride);
};

// y[n,co,od,oh,ow] = bias[co] + sum_{ci,kd,kh,kw} x[n,ci,od*s+kd-p,...] * w[co,ci,kd,kh,kw]
void conv3d_forward_serial(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d);
void conv3d_forward_omp(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d);
void conv3d_forward(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d);

void conv3d_backward_input_serial(const double* gy, const double* w, double* gx, const Conv3dDims& d);
void conv3d_backward_input_omp(const double* gy, const double* w, double* gx, const Conv3dDims& d);
void conv3d_backward_input(const double* gy, const double* w, double* gx, const Conv3dDims& d);

void conv3d_backward_weight_serial(const double* gy, const double* x, double* gw, const Conv3dDims& d);
void conv3d_backward_weight_omp(const double* gy, const double* x, double* gw, const Conv3dDims& d);
void conv3d_backward_weight(const double* gy, const double* x, double* gw, const Conv3dDims& d);

void conv3d_backward_bias(const double* gy, double* gb, const Conv3dDims& d);

// Transposed convolution; weight layout [ci,co,k,k,k], no padding.
// y[n,co,od,oh,ow] = bias[co] + sum over (ci,kd,kh,kw) with od = id*s + kd.
void conv_transpose3d_forward_serial(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d);
void conv_transpose3d_forward_omp(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d);
void conv_transpose3d_forward(const double* x, const double* w, const double* bias, double* y, const Conv3dDims& d);

void conv_transpose3d_backward_input_serial(const double* gy, const double* w, double* gx, const Conv3dDims& d);
void conv_transpose3d_backward_input_omp(const double* gy, const double* w, double* gx, const Conv3dDims& d);
void conv_transpose3d_backward_input(const double* gy, const double* w, double* gx, const Conv3dDims& d);

void conv_transpose3d_backward_weight_serial(const double* gy, const double* x, double* gw, const Conv3dDims& d);
void conv_transpose3d_backward_weight_omp(const double* gy, const double* x, double* gw, const Conv3dDims& d);
void conv_transpose3d_backward_weight(const double* gy, const double* x, double* gw, const Conv3dDims& d);

void conv_transpose3d_backward_bias(const double* gy, double* gb, const Conv3dDims& d);

}  // namespace curriseg::kernels
