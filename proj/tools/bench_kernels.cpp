// Times the OpenMP convolution kernels against their serial reference on a
// network-sized workload and checks the two produce bitwise-identical output.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "curriseg/kernels.hpp"

using namespace curriseg::kernels;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_buf(size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return best;
}

struct BenchCase {
    std::string name;
    size_t out_elems;
    std::function<void(double*)> serial;
    std::function<void(double*)> omp;
};

}  // namespace

int main(int argc, char** argv) {
    int reps = 3;
    if (argc > 1) reps = std::max(1, std::atoi(argv[1]));

    // one mid-level layer of the desk network on a whole subvolume
    const Conv3dDims cv = Conv3dDims::conv(1, 8, 16, 32, 32, 8, 3, 1, 1);
    const Conv3dDims dn = Conv3dDims::conv(1, 8, 16, 32, 32, 16, 2, 2, 0);
    const Conv3dDims up = Conv3dDims::conv_transpose(1, 16, 8, 16, 16, 8, 2, 2);

    std::mt19937_64 rng(12345);
    auto x_cv = random_buf(size_t(cv.n) * cv.ci * cv.di * cv.hi * cv.wi, rng);
    auto w_cv = random_buf(size_t(cv.co) * cv.ci * cv.k * cv.k * cv.k, rng);
    auto b_cv = random_buf(cv.co, rng);
    auto gy_cv = random_buf(size_t(cv.n) * cv.co * cv.dz * cv.dy * cv.dx, rng);
    auto x_dn = random_buf(size_t(dn.n) * dn.ci * dn.di * dn.hi * dn.wi, rng);
    auto w_dn = random_buf(size_t(dn.co) * dn.ci * dn.k * dn.k * dn.k, rng);
    auto b_dn = random_buf(dn.co, rng);
    auto x_up = random_buf(size_t(up.n) * up.ci * up.di * up.hi * up.wi, rng);
    auto w_up = random_buf(size_t(up.ci) * up.co * up.k * up.k * up.k, rng);
    auto b_up = random_buf(up.co, rng);
    auto gy_up = random_buf(size_t(up.n) * up.co * up.dz * up.dy * up.dx, rng);

    std::vector<BenchCase> cases;
    cases.push_back(BenchCase{"conv3d_forward 8->8 k3 16x32x32",
                     gy_cv.size(),
                     [&](double* y) { conv3d_forward_serial(x_cv.data(), w_cv.data(), b_cv.data(), y, cv); },
                     [&](double* y) { conv3d_forward_omp(x_cv.data(), w_cv.data(), b_cv.data(), y, cv); }});
    cases.push_back(BenchCase{"conv3d_backward_input",
                     x_cv.size(),
                     [&](double* g) { conv3d_backward_input_serial(gy_cv.data(), w_cv.data(), g, cv); },
                     [&](double* g) { conv3d_backward_input_omp(gy_cv.data(), w_cv.data(), g, cv); }});
    cases.push_back(BenchCase{"conv3d_backward_weight",
                     w_cv.size(),
                     [&](double* g) { conv3d_backward_weight_serial(gy_cv.data(), x_cv.data(), g, cv); },
                     [&](double* g) { conv3d_backward_weight_omp(gy_cv.data(), x_cv.data(), g, cv); }});
    cases.push_back(BenchCase{"strided conv3d_forward 8->16 k2 s2",
                     size_t(dn.n) * dn.co * dn.dz * dn.dy * dn.dx,
                     [&](double* y) { conv3d_forward_serial(x_dn.data(), w_dn.data(), b_dn.data(), y, dn); },
                     [&](double* y) { conv3d_forward_omp(x_dn.data(), w_dn.data(), b_dn.data(), y, dn); }});
    cases.push_back(BenchCase{"conv_transpose3d_forward 16->8 k2 s2",
                     gy_up.size(),
                     [&](double* y) { conv_transpose3d_forward_serial(x_up.data(), w_up.data(), b_up.data(), y, up); },
                     [&](double* y) { conv_transpose3d_forward_omp(x_up.data(), w_up.data(), b_up.data(), y, up); }});
    cases.push_back(BenchCase{"conv_transpose3d_backward_input",
                     x_up.size(),
                     [&](double* g) { conv_transpose3d_backward_input_serial(gy_up.data(), w_up.data(), g, up); },
                     [&](double* g) { conv_transpose3d_backward_input_omp(gy_up.data(), w_up.data(), g, up); }});
    cases.push_back(BenchCase{"conv_transpose3d_backward_weight",
                     w_up.size(),
                     [&](double* g) { conv_transpose3d_backward_weight_serial(gy_up.data(), x_up.data(), g, up); },
                     [&](double* g) { conv_transpose3d_backward_weight_omp(gy_up.data(), x_up.data(), g, up); }});

    std::printf("best of %d runs\n", reps);
    std::printf("%-36s %12s %12s %9s %9s\n", "kernel", "serial s", "omp s", "speedup", "bitwise");
    bool all_match = true;
    for (const BenchCase& c : cases) {
        std::vector<double> ys(c.out_elems), yo(c.out_elems);
        double ts = time_best_of(reps, [&] { c.serial(ys.data()); });
        double to = time_best_of(reps, [&] { c.omp(yo.data()); });
        bool match =
            std::memcmp(ys.data(), yo.data(), c.out_elems * sizeof(double)) == 0;
        all_match = all_match && match;
        std::printf("%-36s %12.4f %12.4f %8.2fx %9s\n", c.name.c_str(), ts, to, ts / to,
                    match ? "ok" : "DIFFER");
    }
    if (!all_match) {
        std::printf("serial and omp outputs differ\n");
        return 1;
    }
    return 0;
}
