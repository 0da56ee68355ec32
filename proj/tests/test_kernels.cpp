#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "pat/kernels.hpp"
#include "pat/rng.hpp"

using namespace pat;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                               double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng_uniform(rng, lo, hi);
    return v;
}

struct WaveFixture {
    int nx, ny;
    kernels::WaveDims d;
    std::vector<double> ax, ay, bx, by, cx, cy, kx, ky, gx, gy;
    std::vector<double> ux, uy, px, py;

    WaveFixture(int nx_, int ny_, std::uint64_t seed) : nx(nx_), ny(ny_), d{nx_, ny_} {
        std::mt19937_64 rng(seed);
        ax = random_vec(nx + 1, rng, 0.9, 1.0);
        ay = random_vec(ny + 1, rng, 0.9, 1.0);
        bx = random_vec(static_cast<std::size_t>(ny) * (nx + 1), rng);
        by = random_vec(static_cast<std::size_t>(ny + 1) * nx, rng);
        // rigid walls carry zero face factors
        for (int j = 0; j < ny; ++j) {
            bx[static_cast<std::size_t>(j) * (nx + 1)] = 0.0;
            bx[static_cast<std::size_t>(j) * (nx + 1) + nx] = 0.0;
        }
        for (int i = 0; i < nx; ++i) {
            by[i] = 0.0;
            by[static_cast<std::size_t>(ny) * nx + i] = 0.0;
        }
        cx = random_vec(nx, rng, 0.9, 1.0);
        cy = random_vec(ny, rng, 0.9, 1.0);
        kx = random_vec(static_cast<std::size_t>(ny) * nx, rng);
        ky = random_vec(static_cast<std::size_t>(ny) * nx, rng);
        gx = random_vec(nx, rng);
        gy = random_vec(ny, rng);
        ux = random_vec(static_cast<std::size_t>(ny) * (nx + 1), rng);
        uy = random_vec(static_cast<std::size_t>(ny + 1) * nx, rng);
        px = random_vec(static_cast<std::size_t>(ny) * nx, rng);
        py = random_vec(static_cast<std::size_t>(ny) * nx, rng);
        for (int j = 0; j < ny; ++j) {
            ux[static_cast<std::size_t>(j) * (nx + 1)] = 0.0;
            ux[static_cast<std::size_t>(j) * (nx + 1) + nx] = 0.0;
        }
        for (int i = 0; i < nx; ++i) {
            uy[i] = 0.0;
            uy[static_cast<std::size_t>(ny) * nx + i] = 0.0;
        }
    }

    kernels::WaveCoeffs coeffs() const {
        return {ax.data(), ay.data(), bx.data(), by.data(),
                cx.data(), cy.data(), kx.data(), ky.data()};
    }
};

}  // namespace

TEST_CASE("wave kernels: OpenMP variants are bit-identical to the serial reference") {
    WaveFixture fa(23, 17, 5), fb(23, 17, 5);
    const auto c = fa.coeffs();

    for (int step = 0; step < 5; ++step) {
        kernels::update_velocity_serial(fa.d, c, fa.ux.data(), fa.uy.data(), fa.px.data(),
                                        fa.py.data());
        kernels::update_velocity_omp(fb.d, fb.coeffs(), fb.ux.data(), fb.uy.data(), fb.px.data(),
                                     fb.py.data());
        std::vector<double> divx_a(fa.px.size()), divy_a(fa.px.size());
        std::vector<double> divx_b(fa.px.size()), divy_b(fa.px.size());
        kernels::update_pressure_serial(fa.d, c, fa.px.data(), fa.py.data(), fa.ux.data(),
                                        fa.uy.data(), divx_a.data(), divy_a.data());
        kernels::update_pressure_omp(fb.d, fb.coeffs(), fb.px.data(), fb.py.data(), fb.ux.data(),
                                     fb.uy.data(), divx_b.data(), divy_b.data());
        REQUIRE(fa.ux == fb.ux);
        REQUIRE(fa.uy == fb.uy);
        REQUIRE(fa.px == fb.px);
        REQUIRE(fa.py == fb.py);
        REQUIRE(divx_a == divx_b);
        REQUIRE(divy_a == divy_b);
    }
}

TEST_CASE("adjoint kernels: OpenMP variants are bit-identical to the serial reference") {
    WaveFixture fa(19, 21, 6), fb(19, 21, 6);
    std::mt19937_64 rng(77);
    const auto divx = random_vec(fa.px.size(), rng);
    const auto divy = random_vec(fa.px.size(), rng);
    std::vector<double> kga(fa.px.size(), 0.0), kgb(fa.px.size(), 0.0);

    for (int step = 0; step < 3; ++step) {
        kernels::adjoint_pressure_serial(fa.d, fa.coeffs(), fa.px.data(), fa.py.data(),
                                         fa.ux.data(), fa.uy.data(), divx.data(), divy.data(),
                                         fa.gx.data(), fa.gy.data(), kga.data());
        kernels::adjoint_pressure_omp(fb.d, fb.coeffs(), fb.px.data(), fb.py.data(), fb.ux.data(),
                                      fb.uy.data(), divx.data(), divy.data(), fb.gx.data(),
                                      fb.gy.data(), kgb.data());
        kernels::adjoint_velocity_serial(fa.d, fa.coeffs(), fa.ux.data(), fa.uy.data(),
                                         fa.px.data(), fa.py.data());
        kernels::adjoint_velocity_omp(fb.d, fb.coeffs(), fb.ux.data(), fb.uy.data(), fb.px.data(),
                                      fb.py.data());
        REQUIRE(fa.ux == fb.ux);
        REQUIRE(fa.uy == fb.uy);
        REQUIRE(fa.px == fb.px);
        REQUIRE(fa.py == fb.py);
        REQUIRE(kga == kgb);
    }
}

TEST_CASE("one wave step: the adjoint kernels transpose the forward kernels") {
    // <T s, t> == <s, T^T t> for the full step map on random states
    const int nx = 13, ny = 11;
    WaveFixture fwd(nx, ny, 31);
    WaveFixture adj(nx, ny, 32);
    const WaveFixture fwd0 = fwd;  // keep the input state
    const WaveFixture adj0 = adj;

    kernels::update_velocity_serial(fwd.d, fwd.coeffs(), fwd.ux.data(), fwd.uy.data(),
                                    fwd.px.data(), fwd.py.data());
    kernels::update_pressure_serial(fwd.d, fwd.coeffs(), fwd.px.data(), fwd.py.data(),
                                    fwd.ux.data(), fwd.uy.data(), nullptr, nullptr);

    kernels::adjoint_pressure_serial(adj.d, fwd0.coeffs(), adj.px.data(), adj.py.data(),
                                     adj.ux.data(), adj.uy.data(), nullptr, nullptr, nullptr,
                                     nullptr, nullptr);
    kernels::adjoint_velocity_serial(adj.d, fwd0.coeffs(), adj.ux.data(), adj.uy.data(),
                                     adj.px.data(), adj.py.data());

    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
        return s;
    };
    const double lhs = dot(fwd.ux, adj0.ux) + dot(fwd.uy, adj0.uy) + dot(fwd.px, adj0.px) +
                       dot(fwd.py, adj0.py);
    const double rhs = dot(fwd0.ux, adj.ux) + dot(fwd0.uy, adj.uy) + dot(fwd0.px, adj.px) +
                       dot(fwd0.py, adj.py);
    CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-13);
}

TEST_CASE("conv kernels: OpenMP variants are bit-identical to the serial reference") {
    const int n = 3, cin = 5, cout = 7, h = 12, w = 9;
    std::mt19937_64 rng(8);
    const auto x = random_vec(static_cast<std::size_t>(n) * cin * h * w, rng);
    const auto k = random_vec(static_cast<std::size_t>(cout) * cin * 9, rng);
    const auto b = random_vec(cout, rng);
    const auto gy = random_vec(static_cast<std::size_t>(n) * cout * h * w, rng);

    std::vector<double> ys(static_cast<std::size_t>(n) * cout * h * w), yp = ys;
    kernels::conv3x3_forward_serial(n, cin, cout, h, w, x.data(), k.data(), b.data(), ys.data());
    kernels::conv3x3_forward_omp(n, cin, cout, h, w, x.data(), k.data(), b.data(), yp.data());
    REQUIRE(ys == yp);

    std::vector<double> gxs(x.size()), gxp(x.size());
    kernels::conv3x3_backward_data_serial(n, cin, cout, h, w, gy.data(), k.data(), gxs.data());
    kernels::conv3x3_backward_data_omp(n, cin, cout, h, w, gy.data(), k.data(), gxp.data());
    REQUIRE(gxs == gxp);

    std::vector<double> gks(k.size(), 0.0), gkp(k.size(), 0.0), gbs(cout, 0.0), gbp(cout, 0.0);
    kernels::conv3x3_backward_weights_serial(n, cin, cout, h, w, x.data(), gy.data(), gks.data(),
                                             gbs.data());
    kernels::conv3x3_backward_weights_omp(n, cin, cout, h, w, x.data(), gy.data(), gkp.data(),
                                          gbp.data());
    REQUIRE(gks == gkp);
    REQUIRE(gbs == gbp);
}

TEST_CASE("conv forward matches a brute-force zero-padded correlation") {
    const int n = 2, cin = 3, cout = 4, h = 7, w = 6;
    std::mt19937_64 rng(9);
    const auto x = random_vec(static_cast<std::size_t>(n) * cin * h * w, rng);
    const auto kk = random_vec(static_cast<std::size_t>(cout) * cin * 9, rng);
    const auto bias = random_vec(cout, rng);

    std::vector<double> y(static_cast<std::size_t>(n) * cout * h * w);
    kernels::conv3x3_forward_serial(n, cin, cout, h, w, x.data(), kk.data(), bias.data(),
                                    y.data());

    auto xat = [&](int nn, int c, int j, int i) -> double {
        if (j < 0 || j >= h || i < 0 || i >= w) return 0.0;
        return x[((static_cast<std::size_t>(nn) * cin + c) * h + j) * w + i];
    };
    for (int nn = 0; nn < n; ++nn)
        for (int oc = 0; oc < cout; ++oc)
            for (int j = 0; j < h; ++j)
                for (int i = 0; i < w; ++i) {
                    double acc = bias[oc];
                    for (int c = 0; c < cin; ++c)
                        for (int dj = 0; dj < 3; ++dj)
                            for (int di = 0; di < 3; ++di)
                                acc += kk[((static_cast<std::size_t>(oc) * cin + c) * 3 + dj) * 3 + di] *
                                       xat(nn, c, j + dj - 1, i + di - 1);
                    const double got = y[((static_cast<std::size_t>(nn) * cout + oc) * h + j) * w + i];
                    REQUIRE(got == doctest::Approx(acc).epsilon(1e-12));
                }
}

TEST_CASE("conv backward matches finite differences of a quadratic readout") {
    // J = 1/2 sum y^2; dJ/dk and dJ/dx via the backward kernels vs central FD
    const int n = 2, cin = 2, cout = 3, h = 5, w = 5;
    std::mt19937_64 rng(10);
    auto x = random_vec(static_cast<std::size_t>(n) * cin * h * w, rng);
    auto kk = random_vec(static_cast<std::size_t>(cout) * cin * 9, rng);
    const auto bias = random_vec(cout, rng);

    auto objective = [&](const std::vector<double>& xx, const std::vector<double>& kv) {
        std::vector<double> y(static_cast<std::size_t>(n) * cout * h * w);
        kernels::conv3x3_forward_serial(n, cin, cout, h, w, xx.data(), kv.data(), bias.data(),
                                        y.data());
        double s = 0.0;
        for (double v : y) s += 0.5 * v * v;
        return s;
    };

    std::vector<double> y(static_cast<std::size_t>(n) * cout * h * w);
    kernels::conv3x3_forward_serial(n, cin, cout, h, w, x.data(), kk.data(), bias.data(),
                                    y.data());
    std::vector<double> gk(kk.size(), 0.0), gb(cout, 0.0), gx(x.size());
    kernels::conv3x3_backward_weights_serial(n, cin, cout, h, w, x.data(), y.data(), gk.data(),
                                             gb.data());
    kernels::conv3x3_backward_data_serial(n, cin, cout, h, w, y.data(), kk.data(), gx.data());

    const double hstep = 1e-6;
    std::mt19937_64 pick(11);
    for (int t = 0; t < 12; ++t) {
        const std::size_t idx = pick() % kk.size();
        auto kp = kk, km = kk;
        kp[idx] += hstep;
        km[idx] -= hstep;
        const double fd = (objective(x, kp) - objective(x, km)) / (2 * hstep);
        REQUIRE(gk[idx] == doctest::Approx(fd).epsilon(1e-6));
    }
    for (int t = 0; t < 12; ++t) {
        const std::size_t idx = pick() % x.size();
        auto xp = x, xm = x;
        xp[idx] += hstep;
        xm[idx] -= hstep;
        const double fd = (objective(xp, kk) - objective(xm, kk)) / (2 * hstep);
        REQUIRE(gx[idx] == doctest::Approx(fd).epsilon(1e-6));
    }
}
