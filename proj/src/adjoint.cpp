#include "pat/adjoint.hpp"

#include <string>

namespace pat {

ForwardOperator make_forward_operator(const Medium& medium, const SensorArray& sensors,
                                      const SimConfig& config) {
    ForwardOperator op;
    op.medium = medium;
    op.sensors = sensors;
    op.config = config;
    op.prop = std::make_shared<Propagator>(medium, sensors, config);
    return op;
}

namespace {

const Propagator& prop_of(const ForwardOperator& op) {
    if (!op.prop) throw DataError("forward operator not initialized (use make_forward_operator)");
    return *op.prop;
}

// r = H p0 - g
SensorData residual(const SensorData& g, SensorData&& hp0) {
    if (g.n_sensors != hp0.n_sensors || g.n_steps != hp0.n_steps)
        throw DataError("measured data shape does not match operator");
    SensorData r = std::move(hp0);
    for (std::size_t k = 0; k < r.samples.size(); ++k) r.samples[k] -= g.samples[k];
    return r;
}

double half_sq_norm(const SensorData& r) {
    double s = 0.0;
    for (double v : r.samples) s += v * v;
    return 0.5 * s;
}

void check_history_budget(const Propagator& prop, const HistoryConfig& hist) {
    if (hist.checkpoint_stride == 0 && prop.history_bytes() > hist.max_bytes)
        throw NumericError("forward history needs " + std::to_string(prop.history_bytes()) +
                           " bytes, over the " + std::to_string(hist.max_bytes) +
                           " byte budget; set HistoryConfig::checkpoint_stride to enable "
                           "checkpointed recomputation");
}

}  // namespace

SensorData apply_forward(const ForwardOperator& op, const ScalarField2D& p0) {
    return prop_of(op).forward(p0);
}

ScalarField2D apply_adjoint(const ForwardOperator& op, const SensorData& y) {
    return prop_of(op).adjoint(y);
}

double data_fidelity(const ForwardOperator& op, const ScalarField2D& p0, const SensorData& g) {
    const Propagator& prop = prop_of(op);
    return half_sq_norm(residual(g, prop.forward(p0)));
}

ScalarField2D grad_p0(const ForwardOperator& op, const ScalarField2D& p0, const SensorData& g) {
    const Propagator& prop = prop_of(op);
    return prop.adjoint(residual(g, prop.forward(p0)));
}

ScalarField2D grad_c(const ForwardOperator& op, const ScalarField2D& p0, const SensorData& g,
                     const HistoryConfig& hist) {
    return fidelity_and_gradients(op, p0, g, hist).grad.grad_c;
}

FidelityResult fidelity_and_gradients(const ForwardOperator& op, const ScalarField2D& p0,
                                      const SensorData& g, const HistoryConfig& hist) {
    const Propagator& prop = prop_of(op);
    check_history_budget(prop, hist);

    FidelityResult out;
    std::vector<double> kappa_grad(prop.comp_grid().cells(), 0.0);

    if (hist.checkpoint_stride == 0) {
        DivHistory history;
        SensorData r = residual(g, prop.forward_with_history(p0, history));
        out.value = half_sq_norm(r);
        Propagator::FullHistoryProvider provider(history);
        out.grad.grad_p0 = prop.adjoint_with_kappa_grad(r, provider, kappa_grad);
    } else {
        Propagator::Checkpoints cps;
        SensorData r = residual(g, prop.forward_with_checkpoints(p0, hist.checkpoint_stride, cps));
        out.value = half_sq_norm(r);
        Propagator::CheckpointProvider provider(prop, cps);
        out.grad.grad_p0 = prop.adjoint_with_kappa_grad(r, provider, kappa_grad);
    }
    out.grad.grad_c = prop.kappa_grad_to_c_grad(kappa_grad);
    return out;
}

}  // namespace pat
