#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pat/adjoint.hpp"
#include "pat/phantom.hpp"
#include "pat/rng.hpp"

using namespace pat;

namespace {

ScalarField2D random_field(const GridSpec& g, std::mt19937_64& rng, double lo, double hi) {
    ScalarField2D f(g);
    for (double& v : f.values) v = rng_uniform(rng, lo, hi);
    return f;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

ForwardOperator heterogeneous_operator(int n, int n_steps, std::uint64_t seed,
                                       int pml_cells = 10) {
    const GridSpec grid{n, n, 1e-4};
    std::mt19937_64 rng(seed);
    Medium medium{random_field(grid, rng, 1480.0, 3198.0), ScalarField2D(grid, 1.0)};
    const SimConfig cfg = make_sim_config(grid, medium, n_steps, 0.3, pml_cells);
    return make_forward_operator(medium, sensor_layout(grid), cfg);
}

// dense row-major matrix H[row, col], row = data index, col = pixel
struct DenseH {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;
    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

DenseH explicit_matrix(const ForwardOperator& op) {
    const std::size_t cols = op.config.grid.cells();
    const std::size_t rows =
        static_cast<std::size_t>(op.sensors.count()) * op.config.n_steps;
    DenseH H{rows, cols, std::vector<double>(rows * cols, 0.0)};
    for (std::size_t col = 0; col < cols; ++col) {
        ScalarField2D impulse(op.config.grid, 0.0);
        impulse.values[col] = 1.0;
        const SensorData resp = apply_forward(op, impulse);
        for (std::size_t r = 0; r < rows; ++r) H.at(r, col) = resp.samples[r];
    }
    return H;
}

}  // namespace

TEST_CASE("apply_forward basics: zero map and scaling") {
    const ForwardOperator op = heterogeneous_operator(12, 40, 1);
    const SensorData zero = apply_forward(op, ScalarField2D(op.config.grid, 0.0));
    for (double v : zero.samples) REQUIRE(v == 0.0);

    std::mt19937_64 rng(2);
    const ScalarField2D p0 = random_field(op.config.grid, rng, -1.0, 1.0);
    ScalarField2D doubled = p0;
    for (double& v : doubled.values) v *= 2.0;
    const SensorData g1 = apply_forward(op, p0);
    const SensorData g2 = apply_forward(op, doubled);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < g1.samples.size(); ++k) {
        num += (g2.samples[k] - 2.0 * g1.samples[k]) * (g2.samples[k] - 2.0 * g1.samples[k]);
        den += g1.samples[k] * g1.samples[k];
    }
    CHECK(std::sqrt(num) <= 1e-12 * std::sqrt(den));
}

TEST_CASE("adjoint dot test: 16x16, 60 steps, 10 seeded pairs at 1e-10") {
    const ForwardOperator op = heterogeneous_operator(16, 60, 11);
    for (int trial = 0; trial < 10; ++trial) {
        std::mt19937_64 rng(100 + trial);
        const ScalarField2D x = random_field(op.config.grid, rng, -1.0, 1.0);
        SensorData y(op.sensors.count(), op.config.n_steps, op.config.dt);
        for (double& v : y.samples) v = rng_uniform(rng, -1.0, 1.0);

        const SensorData hx = apply_forward(op, x);
        const ScalarField2D hty = apply_adjoint(op, y);
        const double lhs = dot(hx.samples, y.samples);
        const double rhs = dot(x.values, hty.values);
        const double rel = std::abs(lhs - rhs) / (norm(hx.samples) * norm(y.samples) + 1e-300);
        REQUIRE(rel <= 1e-10);
    }
}

TEST_CASE("adjoint with zero data is zero") {
    const ForwardOperator op = heterogeneous_operator(12, 30, 19);
    const SensorData y(op.sensors.count(), op.config.n_steps, op.config.dt);
    const ScalarField2D hty = apply_adjoint(op, y);
    for (double v : hty.values) REQUIRE(v == 0.0);
}

TEST_CASE("explicit matrix oracle on 8x8: forward columns and adjoint transpose") {
    const ForwardOperator op = heterogeneous_operator(8, 24, 3);
    const DenseH H = explicit_matrix(op);

    std::mt19937_64 rng(4);
    SUBCASE("apply_forward equals the dense product") {
        const ScalarField2D p0 = random_field(op.config.grid, rng, -1.0, 1.0);
        const SensorData g = apply_forward(op, p0);
        for (std::size_t r = 0; r < H.rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < H.cols; ++c) acc += H.at(r, c) * p0.values[c];
            REQUIRE(std::abs(acc - g.samples[r]) <= 1e-12 * (1.0 + std::abs(acc)));
        }
    }

    SUBCASE("apply_adjoint equals the dense transpose, entrywise") {
        // H^T columns from adjoint solves on the data basis
        for (std::size_t r = 0; r < H.rows; r += 7) {  // stride keeps the case quick
            SensorData e(op.sensors.count(), op.config.n_steps, op.config.dt);
            e.samples[r] = 1.0;
            const ScalarField2D row = apply_adjoint(op, e);
            for (std::size_t c = 0; c < H.cols; ++c)
                REQUIRE(std::abs(row.values[c] - H.at(r, c)) <= 1e-12);
        }
    }
}

TEST_CASE("data_fidelity closed forms and dense cross-check") {
    const ForwardOperator op = heterogeneous_operator(8, 30, 5);
    std::mt19937_64 rng(6);
    const ScalarField2D p0 = random_field(op.config.grid, rng, 0.0, 1.0);
    const SensorData g = apply_forward(op, p0);

    SUBCASE("residual zero means zero fidelity") {
        CHECK(data_fidelity(op, p0, g) == 0.0);
    }
    SUBCASE("zero image gives half the squared norm of the data") {
        const double f = data_fidelity(op, ScalarField2D(op.config.grid, 0.0), g);
        CHECK(f == doctest::Approx(0.5 * dot(g.samples, g.samples)).epsilon(1e-14));
    }
    SUBCASE("matches the dense residual computation") {
        const DenseH H = explicit_matrix(op);
        const ScalarField2D q = random_field(op.config.grid, rng, 0.0, 1.0);
        double acc = 0.0;
        for (std::size_t r = 0; r < H.rows; ++r) {
            double hr = 0.0;
            for (std::size_t c = 0; c < H.cols; ++c) hr += H.at(r, c) * q.values[c];
            acc += 0.5 * (hr - g.samples[r]) * (hr - g.samples[r]);
        }
        CHECK(data_fidelity(op, q, g) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("grad_p0: definitional identity, zero at the optimum, finite differences") {
    const ForwardOperator op = heterogeneous_operator(12, 60, 7);
    std::mt19937_64 rng(8);
    const ScalarField2D p0_star = random_field(op.config.grid, rng, 0.0, 1.0);
    const SensorData g = apply_forward(op, p0_star);

    SUBCASE("zero residual gives an identically zero gradient") {
        const ScalarField2D gp = grad_p0(op, p0_star, g);
        for (double v : gp.values) REQUIRE(v == 0.0);
    }

    const ScalarField2D p0 = random_field(op.config.grid, rng, 0.0, 1.0);

    SUBCASE("equals apply_adjoint of the residual") {
        SensorData r = apply_forward(op, p0);
        for (std::size_t k = 0; k < r.samples.size(); ++k) r.samples[k] -= g.samples[k];
        const ScalarField2D via_adjoint = apply_adjoint(op, r);
        const ScalarField2D gp = grad_p0(op, p0, g);
        REQUIRE(gp.values == via_adjoint.values);
    }

    SUBCASE("central differences at 10 pixels, 1e-5 relative") {
        const ScalarField2D gp = grad_p0(op, p0, g);
        double gmax = 0.0;
        for (double v : gp.values) gmax = std::max(gmax, std::abs(v));
        const double h = 1e-6;
        std::mt19937_64 pick(9);
        int tested = 0;
        while (tested < 10) {
            const std::size_t k = pick() % gp.values.size();
            if (std::abs(gp.values[k]) < 1e-3 * gmax) continue;
            ScalarField2D plus = p0, minus = p0;
            plus.values[k] += h;
            minus.values[k] -= h;
            const double fd =
                (data_fidelity(op, plus, g) - data_fidelity(op, minus, g)) / (2.0 * h);
            REQUIRE(std::abs(fd - gp.values[k]) <= 1e-5 * std::abs(gp.values[k]));
            ++tested;
        }
    }
}

TEST_CASE("grad_c: zero at the optimum, per-cell and directional finite differences") {
    const GridSpec grid{12, 12, 1e-4};
    std::mt19937_64 rng(10);
    Medium med_true{random_field(grid, rng, 1480.0, 2200.0), ScalarField2D(grid, 1.0)};
    const ScalarField2D p0_true = random_field(grid, rng, 0.0, 1.0);
    const SensorArray sensors = sensor_layout(grid);
    // dt fixed against the table ceiling so perturbed speeds stay stable
    const SimConfig cfg = make_sim_config(grid, uniform_medium(grid, kSpeedMax), 60, 0.3, 10);
    const SensorData g = simulate_forward(med_true, p0_true, sensors, cfg);

    SUBCASE("zero residual gives an identically zero gradient") {
        ForwardOperator op = make_forward_operator(med_true, sensors, cfg);
        const ScalarField2D gc = grad_c(op, p0_true, g);
        for (double v : gc.values) REQUIRE(v == 0.0);
    }

    Medium med0{random_field(grid, rng, 1480.0, 2200.0), ScalarField2D(grid, 1.0)};
    const ScalarField2D p0 = random_field(grid, rng, 0.0, 1.0);
    ForwardOperator op = make_forward_operator(med0, sensors, cfg);
    const ScalarField2D gc = grad_c(op, p0, g);
    auto fidelity_at = [&](const ScalarField2D& c) {
        return data_fidelity(make_forward_operator(Medium{c, med0.rho}, sensors, cfg), p0, g);
    };

    SUBCASE("central differences at 10 cells, 1e-4 relative") {
        double gmax = 0.0;
        for (double v : gc.values) gmax = std::max(gmax, std::abs(v));
        const double h = 1e-3;
        std::mt19937_64 pick(11);
        int tested = 0;
        while (tested < 10) {
            const std::size_t k = pick() % gc.values.size();
            if (std::abs(gc.values[k]) < 1e-3 * gmax) continue;
            ScalarField2D plus = med0.c, minus = med0.c;
            plus.values[k] += h;
            minus.values[k] -= h;
            const double fd = (fidelity_at(plus) - fidelity_at(minus)) / (2.0 * h);
            REQUIRE(std::abs(fd - gc.values[k]) <= 1e-4 * std::abs(gc.values[k]));
            ++tested;
        }
    }

    SUBCASE("5 random directional derivatives, 1e-4 relative") {
        const double h = 1e-3;
        for (int trial = 0; trial < 5; ++trial) {
            std::mt19937_64 dir_rng(200 + trial);
            const ScalarField2D v = random_field(grid, dir_rng, -1.0, 1.0);
            ScalarField2D plus = med0.c, minus = med0.c;
            for (std::size_t k = 0; k < v.values.size(); ++k) {
                plus.values[k] += h * v.values[k];
                minus.values[k] -= h * v.values[k];
            }
            const double fd = (fidelity_at(plus) - fidelity_at(minus)) / (2.0 * h);
            const double an = dot(gc.values, v.values);
            REQUIRE(std::abs(fd - an) <= 1e-4 * std::abs(an));
        }
    }

    SUBCASE("edge cells get exact gradients through the collar replication") {
        const double h = 1e-3;
        for (const std::size_t k : {std::size_t(0), std::size_t(5),
                                    static_cast<std::size_t>(11 * 12 + 7)}) {
            ScalarField2D plus = med0.c, minus = med0.c;
            plus.values[k] += h;
            minus.values[k] -= h;
            const double fd = (fidelity_at(plus) - fidelity_at(minus)) / (2.0 * h);
            REQUIRE(std::abs(fd - gc.values[k]) <= 1e-4 * std::abs(gc.values[k]) + 1e-18);
        }
    }
}

TEST_CASE("fidelity_and_gradients agrees with the standalone operations") {
    const ForwardOperator op = heterogeneous_operator(10, 40, 12);
    std::mt19937_64 rng(13);
    const ScalarField2D p0 = random_field(op.config.grid, rng, 0.0, 1.0);
    SensorData g(op.sensors.count(), op.config.n_steps, op.config.dt);
    for (double& v : g.samples) v = rng_uniform(rng, -0.5, 0.5);

    const FidelityResult fr = fidelity_and_gradients(op, p0, g);
    CHECK(fr.value == data_fidelity(op, p0, g));
    CHECK(fr.grad.grad_p0.values == grad_p0(op, p0, g).values);
    CHECK(fr.grad.grad_c.values == grad_c(op, p0, g).values);
}

TEST_CASE("checkpointed history reproduces the full-history gradient bit-exactly") {
    const ForwardOperator op = heterogeneous_operator(10, 37, 14);
    std::mt19937_64 rng(15);
    const ScalarField2D p0 = random_field(op.config.grid, rng, 0.0, 1.0);
    SensorData g(op.sensors.count(), op.config.n_steps, op.config.dt);
    for (double& v : g.samples) v = rng_uniform(rng, -0.5, 0.5);

    const FidelityResult full = fidelity_and_gradients(op, p0, g);
    for (int stride : {1, 5, 7, 36, 100}) {
        HistoryConfig hist;
        hist.checkpoint_stride = stride;
        const FidelityResult chk = fidelity_and_gradients(op, p0, g, hist);
        REQUIRE(chk.value == full.value);
        REQUIRE(chk.grad.grad_p0.values == full.grad.grad_p0.values);
        REQUIRE(chk.grad.grad_c.values == full.grad.grad_c.values);
    }
}

TEST_CASE("history over budget asks for checkpointing") {
    const ForwardOperator op = heterogeneous_operator(10, 40, 16);
    std::mt19937_64 rng(17);
    const ScalarField2D p0 = random_field(op.config.grid, rng, 0.0, 1.0);
    SensorData g(op.sensors.count(), op.config.n_steps, op.config.dt);
    for (double& v : g.samples) v = rng_uniform(rng, -0.5, 0.5);

    HistoryConfig hist;
    hist.max_bytes = 1024;
    CHECK_THROWS_WITH_AS(fidelity_and_gradients(op, p0, g, hist),
                         doctest::Contains("checkpoint"), NumericError);
    hist.checkpoint_stride = 8;  // checkpointing lifts the budget
    CHECK_NOTHROW(fidelity_and_gradients(op, p0, g, hist));
}

TEST_CASE("shape mismatches are rejected") {
    const ForwardOperator op = heterogeneous_operator(10, 40, 18);
    SensorData bad(op.sensors.count(), op.config.n_steps - 1, op.config.dt);
    CHECK_THROWS_AS(apply_adjoint(op, bad), DataError);
    const GridSpec other{8, 8, 1e-4};
    CHECK_THROWS_AS(apply_forward(op, ScalarField2D(other, 0.0)), DataError);
}
