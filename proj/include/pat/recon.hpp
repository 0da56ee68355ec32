#pragma once
// Baseline joint reconstruction: proximal-gradient descent on
// 1/2||g - H(c) p0||^2 + beta R(p0) with R = isotropic total variation plus
// a nonnegativity constraint, alternating p0 and c updates per outer
// iteration with Armijo backtracking for both step lengths.

#include <string>
#include <vector>

#include "pat/adjoint.hpp"
#include "pat/field.hpp"
#include "pat/wave.hpp"

namespace pat {

enum class Regularizer { none, tv };

struct ReconConfig {
    double beta = 1e-3;                  // regularization weight
    Regularizer reg = Regularizer::tv;
    int tv_iters = 20;                   // dual iterations inside the prox
    int max_outer = 100;
    double tol = 1e-6;                   // relative fidelity decrease stop
    double ls_shrink = 0.5;
    double ls_init_p = 1.0e4;            // initial pressure step length
    double ls_init_c = 1.0e9;            // initial speed step length
    double armijo_sigma = 1e-4;
    int ls_max_trials = 40;
    bool freeze_c = false;
    double c_lo = 1480.0;                // physical bounds replace bare c >= 0
    double c_hi = 3198.0;

    void validate() const;
};

// Isotropic TV with forward differences and Neumann edges.
double tv_value(const ScalarField2D& x);

// Approximate prox of tau*TV via a fixed number of dual projected-gradient
// iterations, composed with projection onto {x >= 0}.
ScalarField2D prox_nonneg_tv(const ScalarField2D& x, double tau, int tv_iters);

struct ReconIterate {
    double fidelity = 0.0;       // F after this iteration's updates
    double objective = 0.0;      // F + beta * TV(p0)
    double alpha_p = 0.0;
    double alpha_c = 0.0;
    double prox_residual = 0.0;  // ||prox output - gradient step point||
};

using ReconTrace = std::vector<ReconIterate>;

struct ReconResult {
    ScalarField2D p0;
    ScalarField2D c;
    ReconTrace trace;
    double initial_fidelity = 0.0;
    double initial_objective = 0.0;
    std::string diagnostic;  // non-empty if a line search gave up early
};

// CSV columns: iteration, F, objective, alpha_p, alpha_c.
void write_trace_csv(const std::string& path, const ReconResult& result);

ReconResult reconstruct_classical(const SensorData& g, const ScalarField2D& p0_init,
                                  const ScalarField2D& c_init, const ReconConfig& cfg,
                                  const SimConfig& sim, const SensorArray& sensors);

}  // namespace pat
