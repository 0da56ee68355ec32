// Timing comparison of the serial reference kernels against the OpenMP
// kernels: wave stepping on a 64x64-with-collar grid and the 3x3
// convolution passes at network batch sizes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <omp.h>

#include "pat/kernels.hpp"
#include "pat/rng.hpp"

using namespace pat;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_per_call(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void report(const std::string& name, double serial_s, double omp_s, double work_units) {
    std::printf("%-34s %10.3f us %10.3f us %8.2fx %10.2f MU/s\n", name.c_str(),
                serial_s * 1e6, omp_s * 1e6, serial_s / omp_s, work_units / omp_s / 1e6);
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng_uniform(rng, -1.0, 1.0);
    return v;
}

}  // namespace

int main() {
    std::printf("threads available: %d\n", omp_get_max_threads());
    std::printf("%-34s %13s %13s %9s %13s\n", "kernel", "serial", "openmp", "speedup",
                "omp rate");

    std::mt19937_64 rng(1234);

    // wave step on an 84x84 computational grid (64 + 2*10 collar)
    {
        const int nx = 84, ny = 84;
        kernels::WaveDims d{nx, ny};
        std::vector<double> ax(nx + 1, 1.0), ay(ny + 1, 1.0), cx(nx, 1.0), cy(ny, 1.0);
        std::vector<double> bx = random_vec(static_cast<std::size_t>(ny) * (nx + 1), rng);
        std::vector<double> by = random_vec(static_cast<std::size_t>(ny + 1) * nx, rng);
        std::vector<double> kx = random_vec(static_cast<std::size_t>(ny) * nx, rng);
        std::vector<double> ky = random_vec(static_cast<std::size_t>(ny) * nx, rng);
        kernels::WaveCoeffs c{ax.data(), ay.data(), bx.data(), by.data(),
                              cx.data(), cy.data(), kx.data(), ky.data()};

        auto ux0 = random_vec(static_cast<std::size_t>(ny) * (nx + 1), rng);
        auto uy0 = random_vec(static_cast<std::size_t>(ny + 1) * nx, rng);
        auto px0 = random_vec(static_cast<std::size_t>(ny) * nx, rng);
        auto py0 = random_vec(static_cast<std::size_t>(ny) * nx, rng);

        auto ux = ux0, uy = uy0, px = px0, py = py0;
        const double ts = seconds_per_call(
            [&] {
                kernels::update_velocity_serial(d, c, ux.data(), uy.data(), px.data(), py.data());
                kernels::update_pressure_serial(d, c, px.data(), py.data(), ux.data(), uy.data(),
                                                nullptr, nullptr);
            },
            200);
        ux = ux0; uy = uy0; px = px0; py = py0;
        const double tp = seconds_per_call(
            [&] {
                kernels::update_velocity_omp(d, c, ux.data(), uy.data(), px.data(), py.data());
                kernels::update_pressure_omp(d, c, px.data(), py.data(), ux.data(), uy.data(),
                                             nullptr, nullptr);
            },
            200);
        report("wave step 84x84", ts, tp, static_cast<double>(nx) * ny);
    }

    // 3x3 convolutions at the network's channel widths, batch 16, 32x32
    struct ConvCase {
        const char* name;
        int cin, cout;
    };
    const ConvCase cases[] = {{"conv3x3 1->32", 1, 32},
                              {"conv3x3 32->32", 32, 32},
                              {"conv3x3 96->64", 96, 64},
                              {"conv3x3 64->32", 64, 32}};
    const int n = 16, h = 32, w = 32;
    for (const ConvCase& cc : cases) {
        auto x = random_vec(static_cast<std::size_t>(n) * cc.cin * h * w, rng);
        auto k = random_vec(static_cast<std::size_t>(cc.cout) * cc.cin * 9, rng);
        auto b = random_vec(cc.cout, rng);
        std::vector<double> y(static_cast<std::size_t>(n) * cc.cout * h * w);
        const double flops = 2.0 * n * cc.cout * cc.cin * 9.0 * h * w;

        const double ts = seconds_per_call(
            [&] {
                kernels::conv3x3_forward_serial(n, cc.cin, cc.cout, h, w, x.data(), k.data(),
                                                b.data(), y.data());
            },
            10);
        const double tp = seconds_per_call(
            [&] {
                kernels::conv3x3_forward_omp(n, cc.cin, cc.cout, h, w, x.data(), k.data(),
                                             b.data(), y.data());
            },
            10);
        report(cc.name + std::string(" fwd b16"), ts, tp, flops);

        std::vector<double> gk(k.size(), 0.0), gb(b.size(), 0.0);
        const double tsw = seconds_per_call(
            [&] {
                kernels::conv3x3_backward_weights_serial(n, cc.cin, cc.cout, h, w, x.data(),
                                                         y.data(), gk.data(), gb.data());
            },
            10);
        const double tpw = seconds_per_call(
            [&] {
                kernels::conv3x3_backward_weights_omp(n, cc.cin, cc.cout, h, w, x.data(),
                                                      y.data(), gk.data(), gb.data());
            },
            10);
        report(cc.name + std::string(" bwd-w b16"), tsw, tpw, flops);
    }
    return 0;
}
