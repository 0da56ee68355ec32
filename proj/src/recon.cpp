#include "pat/recon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pat {

void ReconConfig::validate() const {
    if (beta < 0.0) throw DataError("beta must be >= 0");
    if (!(ls_shrink > 0.0) || !(ls_shrink < 1.0)) throw DataError("ls_shrink must lie in (0,1)");
    if (max_outer < 1) throw DataError("max_outer must be >= 1");
    if (tv_iters < 1) throw DataError("tv_iters must be >= 1");
    if (!(ls_init_p > 0.0) || !(ls_init_c > 0.0)) throw DataError("step lengths must be positive");
    if (!(c_lo > 0.0) || !(c_hi > c_lo)) throw DataError("speed bounds must satisfy 0 < lo < hi");
}

double tv_value(const ScalarField2D& x) {
    const int nx = x.grid.nx, ny = x.grid.ny;
    double tv = 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double gx = (i + 1 < nx) ? x.at(j, i + 1) - x.at(j, i) : 0.0;
            const double gy = (j + 1 < ny) ? x.at(j + 1, i) - x.at(j, i) : 0.0;
            tv += std::sqrt(gx * gx + gy * gy);
        }
    return tv;
}

ScalarField2D prox_nonneg_tv(const ScalarField2D& x, double tau, int tv_iters) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw DataError("prox parameter must be finite and >= 0");
    const int nx = x.grid.nx, ny = x.grid.ny;
    ScalarField2D out = x;

    if (tau > 0.0) {
        // dual projected gradient on min ||tau div p - x||^2/2 over |p| <= 1,
        // semi-implicit normalization step (step size 1/4)
        const double step = 0.25;
        std::vector<double> px(x.grid.cells(), 0.0), py(x.grid.cells(), 0.0);
        std::vector<double> w(x.grid.cells(), 0.0);
        for (int it = 0; it < tv_iters; ++it) {
            // w = div p - x / tau
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const std::size_t k = static_cast<std::size_t>(j) * nx + i;
                    double d = px[k] + py[k];
                    if (i > 0) d -= px[k - 1];
                    if (j > 0) d -= py[k - nx];
                    w[k] = d - x.values[k] / tau;
                }
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const std::size_t k = static_cast<std::size_t>(j) * nx + i;
                    const double qx = (i + 1 < nx) ? w[k + 1] - w[k] : 0.0;
                    const double qy = (j + 1 < ny) ? w[k + nx] - w[k] : 0.0;
                    const double denom = 1.0 + step * std::sqrt(qx * qx + qy * qy);
                    px[k] = (px[k] + step * qx) / denom;
                    py[k] = (py[k] + step * qy) / denom;
                }
        }
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const std::size_t k = static_cast<std::size_t>(j) * nx + i;
                double d = px[k] + py[k];
                if (i > 0) d -= px[k - 1];
                if (j > 0) d -= py[k - nx];
                out.values[k] = x.values[k] - tau * d;
            }
    }
    for (double& v : out.values) v = std::max(v, 0.0);
    return out;
}

void write_trace_csv(const std::string& path, const ReconResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.precision(17);
    out << "iteration,F,objective,alpha_p,alpha_c\n";
    for (std::size_t k = 0; k < result.trace.size(); ++k) {
        const ReconIterate& it = result.trace[k];
        out << (k + 1) << "," << it.fidelity << "," << it.objective << ","
            << it.alpha_p << "," << it.alpha_c << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

namespace {

double sq_dist(const ScalarField2D& a, const ScalarField2D& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        const double d = a.values[k] - b.values[k];
        s += d * d;
    }
    return s;
}

}  // namespace

ReconResult reconstruct_classical(const SensorData& g, const ScalarField2D& p0_init,
                                  const ScalarField2D& c_init, const ReconConfig& cfg,
                                  const SimConfig& sim, const SensorArray& sensors) {
    cfg.validate();
    g.validate();
    p0_init.validate("p0 initializer");
    c_init.validate("c initializer");
    if (!(p0_init.grid == sim.grid) || !(c_init.grid == sim.grid))
        throw DataError("initializer grids do not match simulation config");
    if (min_value(c_init) <= 0.0) throw DataError("c initializer must be positive");

    const ScalarField2D rho(sim.grid, 1.0);
    const double beta = cfg.reg == Regularizer::tv ? cfg.beta : 0.0;
    auto reg_term = [&](const ScalarField2D& p0) { return beta > 0.0 ? beta * tv_value(p0) : 0.0; };
    auto prox = [&](const ScalarField2D& v, double tau) {
        if (cfg.reg == Regularizer::tv && tau > 0.0) return prox_nonneg_tv(v, tau, cfg.tv_iters);
        ScalarField2D out = v;
        for (double& x : out.values) x = std::max(x, 0.0);
        return out;
    };

    ReconResult res;
    res.p0 = p0_init;
    res.c = c_init;

    double alpha_p = cfg.ls_init_p;
    double alpha_c = cfg.ls_init_c;
    double fidelity_prev = -1.0;

    for (int outer = 0; outer < cfg.max_outer; ++outer) {
        ForwardOperator op = make_forward_operator(Medium{res.c, rho}, sensors, sim);
        const FidelityResult fg = fidelity_and_gradients(op, res.p0, g);
        if (outer == 0) {
            res.initial_fidelity = fg.value;
            res.initial_objective = fg.value + reg_term(res.p0);
        }

        ReconIterate rec;

        // p0 update: prox step with backtracking on the composite objective
        const double obj_here = fg.value + reg_term(res.p0);
        ScalarField2D p0_next = res.p0;
        double fid_after_p = fg.value;
        {
            bool accepted = false;
            for (int trial = 0; trial < cfg.ls_max_trials; ++trial) {
                ScalarField2D cand(sim.grid);
                for (std::size_t k = 0; k < cand.values.size(); ++k)
                    cand.values[k] = res.p0.values[k] - alpha_p * fg.grad.grad_p0.values[k];
                rec.prox_residual = 0.0;
                ScalarField2D proxed = prox(cand, alpha_p * beta);
                rec.prox_residual = std::sqrt(sq_dist(proxed, cand));
                const double move = sq_dist(proxed, res.p0);
                const double f_cand = data_fidelity(op, proxed, g);
                const double obj_cand = f_cand + reg_term(proxed);
                if (obj_cand <= obj_here - cfg.armijo_sigma * move / alpha_p) {
                    p0_next = std::move(proxed);
                    fid_after_p = f_cand;
                    rec.alpha_p = alpha_p;
                    accepted = true;
                    break;
                }
                alpha_p *= cfg.ls_shrink;
            }
            if (!accepted) {
                res.diagnostic = "pressure line search failed after " +
                                 std::to_string(cfg.ls_max_trials) + " shrinkages at iteration " +
                                 std::to_string(outer + 1);
                break;
            }
        }

        // c update: projected gradient step, gradient from the iteration start
        ScalarField2D c_next = res.c;
        double fid_after_c = fid_after_p;
        if (!cfg.freeze_c) {
            bool accepted = false;
            for (int trial = 0; trial < cfg.ls_max_trials; ++trial) {
                ScalarField2D cand(sim.grid);
                for (std::size_t k = 0; k < cand.values.size(); ++k)
                    cand.values[k] = std::clamp(res.c.values[k] - alpha_c * fg.grad.grad_c.values[k],
                                                cfg.c_lo, cfg.c_hi);
                const double move = sq_dist(cand, res.c);
                if (move == 0.0) {  // gradient step fully clipped or zero
                    rec.alpha_c = alpha_c;
                    accepted = true;
                    break;
                }
                ForwardOperator op_cand =
                    make_forward_operator(Medium{cand, rho}, sensors, sim);
                const double f_cand = data_fidelity(op_cand, p0_next, g);
                if (f_cand <= fid_after_p - cfg.armijo_sigma * move / alpha_c) {
                    c_next = std::move(cand);
                    fid_after_c = f_cand;
                    rec.alpha_c = alpha_c;
                    accepted = true;
                    break;
                }
                alpha_c *= cfg.ls_shrink;
            }
            if (!accepted) {
                res.diagnostic = "speed line search failed after " +
                                 std::to_string(cfg.ls_max_trials) + " shrinkages at iteration " +
                                 std::to_string(outer + 1);
                res.p0 = std::move(p0_next);
                rec.fidelity = fid_after_p;
                rec.objective = fid_after_p + reg_term(res.p0);
                res.trace.push_back(rec);
                break;
            }
        }

        res.p0 = std::move(p0_next);
        res.c = std::move(c_next);
        rec.fidelity = fid_after_c;
        rec.objective = fid_after_c + reg_term(res.p0);
        res.trace.push_back(rec);

        // grow the accepted steps for the next iteration
        alpha_p *= 2.0;
        if (!cfg.freeze_c) alpha_c *= 2.0;

        const double ref = fidelity_prev >= 0.0 ? fidelity_prev : fg.value;
        const double drop = std::abs(ref - fid_after_c);
        if (drop <= cfg.tol * std::max(ref, 1e-300)) break;
        fidelity_prev = fid_after_c;
    }
    return res;
}

}  // namespace pat
