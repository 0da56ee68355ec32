#include "pat/selftest.hpp"

#include <cmath>
#include <random>

#include "pat/adjoint.hpp"
#include "pat/field.hpp"
#include "pat/phantom.hpp"
#include "pat/rng.hpp"
#include "pat/wave.hpp"

namespace pat {

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

ForwardOperator small_operator(int n, int n_steps, std::uint64_t seed) {
    const GridSpec grid{n, n, 1e-4};
    std::mt19937_64 rng(seed);
    Medium medium{random_field(grid, rng, 1480.0, 3198.0), ScalarField2D(grid, 1.0)};
    const SimConfig cfg = make_sim_config(grid, medium, n_steps, 0.3, 10);
    return make_forward_operator(medium, sensor_layout(grid), cfg);
}

}  // namespace

std::vector<CheckResult> selftest_adjoint() {
    const ForwardOperator op = small_operator(16, 60, 11);
    double worst = 0.0;
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
        worst = std::max(worst, rel);
    }
    return {{"adjoint dot test (10 pairs, 16x16, 60 steps)", worst <= 1e-10, worst, 1e-10}};
}

std::vector<CheckResult> selftest_gradcheck() {
    const GridSpec grid{12, 12, 1e-4};
    std::mt19937_64 rng(7);
    Medium med_true{random_field(grid, rng, 1480.0, 2200.0), ScalarField2D(grid, 1.0)};
    const ScalarField2D p0_true = random_field(grid, rng, 0.0, 1.0);
    const SensorArray sensors = sensor_layout(grid);
    // dt held against the physical ceiling so perturbed speeds stay stable
    const SimConfig cfg = make_sim_config(grid, uniform_medium(grid, kSpeedMax), 60, 0.3, 10);
    const SensorData g = simulate_forward(med_true, p0_true, sensors, cfg);

    Medium med0{random_field(grid, rng, 1480.0, 2200.0), ScalarField2D(grid, 1.0)};
    const ScalarField2D p0_0 = random_field(grid, rng, 0.0, 1.0);

    std::vector<CheckResult> out;

    // pressure gradient vs central differences
    {
        ForwardOperator op = make_forward_operator(med0, sensors, cfg);
        const ScalarField2D gp = grad_p0(op, p0_0, g);
        double gmax = 0.0;
        for (double v : gp.values) gmax = std::max(gmax, std::abs(v));
        const double h = 1e-6;
        double worst = 0.0;
        int tested = 0;
        std::mt19937_64 pick(21);
        while (tested < 10) {
            const std::size_t k = pick() % gp.values.size();
            if (std::abs(gp.values[k]) < 1e-3 * gmax) continue;
            ScalarField2D plus = p0_0, minus = p0_0;
            plus.values[k] += h;
            minus.values[k] -= h;
            const double fd =
                (data_fidelity(op, plus, g) - data_fidelity(op, minus, g)) / (2.0 * h);
            const double rel = std::abs(fd - gp.values[k]) / std::abs(gp.values[k]);
            worst = std::max(worst, rel);
            ++tested;
        }
        out.push_back({"grad_p0 vs central FD (10 pixels, 12x12)", worst <= 1e-5, worst, 1e-5});
    }

    // speed gradient vs central differences, per cell and directional
    {
        ForwardOperator op = make_forward_operator(med0, sensors, cfg);
        const ScalarField2D gc = grad_c(op, p0_0, g);
        double gmax = 0.0;
        for (double v : gc.values) gmax = std::max(gmax, std::abs(v));
        const double h = 1e-3;
        auto fidelity_at = [&](const ScalarField2D& c) {
            ForwardOperator o = make_forward_operator(Medium{c, med0.rho}, sensors, cfg);
            return data_fidelity(o, p0_0, g);
        };
        double worst = 0.0;
        int tested = 0;
        std::mt19937_64 pick(22);
        while (tested < 10) {
            const std::size_t k = pick() % gc.values.size();
            if (std::abs(gc.values[k]) < 1e-3 * gmax) continue;
            ScalarField2D plus = med0.c, minus = med0.c;
            plus.values[k] += h;
            minus.values[k] -= h;
            const double fd = (fidelity_at(plus) - fidelity_at(minus)) / (2.0 * h);
            const double rel = std::abs(fd - gc.values[k]) / std::abs(gc.values[k]);
            worst = std::max(worst, rel);
            ++tested;
        }
        out.push_back({"grad_c vs central FD (10 cells, 12x12)", worst <= 1e-4, worst, 1e-4});

        double worst_dir = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            std::mt19937_64 dir_rng(300 + trial);
            const ScalarField2D v = random_field(grid, dir_rng, -1.0, 1.0);
            ScalarField2D plus = med0.c, minus = med0.c;
            for (std::size_t k = 0; k < v.values.size(); ++k) {
                plus.values[k] += h * v.values[k];
                minus.values[k] -= h * v.values[k];
            }
            const double fd = (fidelity_at(plus) - fidelity_at(minus)) / (2.0 * h);
            const double an = dot(gc.values, v.values);
            worst_dir = std::max(worst_dir, std::abs(fd - an) / std::abs(an));
        }
        out.push_back({"grad_c directional FD (5 directions)", worst_dir <= 1e-4, worst_dir, 1e-4});
    }
    return out;
}

std::vector<CheckResult> selftest_energy() {
    const GridSpec grid{48, 48, 1e-4};
    const Medium medium = uniform_medium(grid, 1500.0);
    ScalarField2D p0(grid);
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) {
            const double dx = i - 23.5, dy = j - 23.5;
            p0.at(j, i) = std::exp(-(dx * dx + dy * dy) / (2.0 * 4.0 * 4.0));
        }
    const SensorArray sensors = sensor_layout(grid);

    std::vector<CheckResult> out;
    {
        // closed box: drift of the time-centered energy over 200 steps
        const SimConfig cfg = make_sim_config(grid, medium, 201, 0.3, 0);
        Propagator prop(medium, sensors, cfg);
        std::vector<WaveState> states;
        states.reserve(cfg.n_steps);
        prop.forward_trace(p0, [&](const WaveState& s) { states.push_back(s); });

        std::vector<double> energy(states.size() - 1);
        for (std::size_t n = 0; n + 1 < states.size(); ++n) {
            WaveState centered = states[n];
            for (std::size_t k = 0; k < centered.ux.size(); ++k)
                centered.ux[k] = 0.5 * (states[n].ux[k] + states[n + 1].ux[k]);
            for (std::size_t k = 0; k < centered.uy.size(); ++k)
                centered.uy[k] = 0.5 * (states[n].uy[k] + states[n + 1].uy[k]);
            energy[n] = discrete_energy(centered, medium);
        }
        const std::size_t third = energy.size() / 3;
        double head = 0.0, tail = 0.0;
        for (std::size_t n = 0; n < third; ++n) head += energy[n];
        for (std::size_t n = energy.size() - third; n < energy.size(); ++n) tail += energy[n];
        head /= third;
        tail /= third;
        const double drift = std::abs(tail - head) / head;
        out.push_back({"closed-wall energy drift over 200 steps", drift <= 1e-3, drift, 1e-3});
    }
    {
        // absorbing collar: the pulse leaves the box and its energy with it
        const SimConfig cfg = make_sim_config(grid, medium, 600, 0.3, 10);
        Propagator prop(medium, sensors, cfg);
        const Medium& cm = prop.comp_medium();
        double e0 = -1.0, e_end = 0.0;
        prop.forward_trace(p0, [&](const WaveState& s) {
            const double e = discrete_energy(s, cm);
            if (e0 < 0.0 && s.t_index == 0) e0 = e;
            e_end = e;
        });
        const double ratio = e_end / e0;
        out.push_back({"absorbing-collar residual energy after 599 steps", ratio <= 1e-3, ratio, 1e-3});
    }
    return out;
}

std::vector<CheckResult> selftest_all() {
    std::vector<CheckResult> out;
    for (auto&& part : {selftest_adjoint(), selftest_gradcheck(), selftest_energy()})
        out.insert(out.end(), part.begin(), part.end());
    return out;
}

}  // namespace pat
