#pragma once
// Data fidelity 1/2 ||g - H(c) p0||^2 and its exact discrete gradients with
// respect to initial pressure and sound speed via adjoint-state sweeps.

#include <cstddef>
#include <memory>

#include "pat/field.hpp"
#include "pat/wave.hpp"

namespace pat {

// Fixed-speed forward map p0 -> sensor data, with cached update coefficients.
struct ForwardOperator {
    Medium medium;
    SensorArray sensors;
    SimConfig config;
    std::shared_ptr<const Propagator> prop;
};

ForwardOperator make_forward_operator(const Medium& medium, const SensorArray& sensors,
                                      const SimConfig& config);

// Controls the forward-history capture the speed gradient needs.
struct HistoryConfig {
    std::size_t max_bytes = std::size_t(4) << 30;
    int checkpoint_stride = 0;  // 0 = store the full capture
};

struct GradientPair {
    ScalarField2D grad_p0;  // fidelity per unit pressure
    ScalarField2D grad_c;   // fidelity per m/s
};

SensorData apply_forward(const ForwardOperator& op, const ScalarField2D& p0);
ScalarField2D apply_adjoint(const ForwardOperator& op, const SensorData& y);

double data_fidelity(const ForwardOperator& op, const ScalarField2D& p0, const SensorData& g);

ScalarField2D grad_p0(const ForwardOperator& op, const ScalarField2D& p0, const SensorData& g);
ScalarField2D grad_c(const ForwardOperator& op, const ScalarField2D& p0, const SensorData& g,
                     const HistoryConfig& hist = {});

// One forward sweep (with capture) plus one reverse sweep produces the
// fidelity value and both gradients together; this is what the solvers use.
struct FidelityResult {
    double value = 0.0;
    GradientPair grad;
};
FidelityResult fidelity_and_gradients(const ForwardOperator& op, const ScalarField2D& p0,
                                      const SensorData& g, const HistoryConfig& hist = {});

}  // namespace pat
