#pragma once
// Built-in numerical health checks exposed through the CLI: the adjoint
// identity, finite-difference gradient checks, and energy behavior.

#include <string>
#include <vector>

namespace pat {

struct CheckResult {
    std::string name;
    bool pass = false;
    double worst = 0.0;   // worst observed discrepancy
    double limit = 0.0;   // acceptance threshold
};

// <Hx, y> vs <x, H^T y> on a 16x16 grid, 60 steps, 10 seeded pairs, 1e-10.
std::vector<CheckResult> selftest_adjoint();
// Central finite differences against grad_p0 (1e-5) and grad_c (1e-4) on a
// 12x12 grid, including 5 random directional derivatives.
std::vector<CheckResult> selftest_gradcheck();
// Closed-wall energy drift over 200 steps (1e-3) and absorbing-collar decay.
std::vector<CheckResult> selftest_energy();

std::vector<CheckResult> selftest_all();

}  // namespace pat
