#pragma once
// Time-domain solver for the first-order acoustic system (pressure +
// velocity) on a staggered grid, with an absorbing collar and boundary
// sensor recording. Also hosts the exact transpose sweep used for
// adjoint-based gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pat/field.hpp"
#include "pat/kernels.hpp"

namespace pat {

struct SimConfig {
    GridSpec grid;          // imaging region (collar excluded)
    double dt = 0.0;        // [s]
    int n_steps = 0;        // recorded time samples, sample 0 at t = 0
    double cfl = 0.0;       // dt = cfl * dx / c_max at construction
    int pml_cells = 0;      // absorbing collar thickness per side [cells]
    double pml_alpha = 0.0; // peak absorption [1/s], quartic ramp

    void validate() const;
};

// dt = cfl * dx / max(c). The absorbing collar peak is calibrated so a
// normally incident plane wave at max(c) reflects below 1e-4 in amplitude:
// alpha = (profile_order+1) * c_max * ln(1e4) / (2 * pml_cells * dx).
SimConfig make_sim_config(const GridSpec& grid, const Medium& medium,
                          int n_steps, double cfl, int pml_cells);

// Plain-text key = value serialization (keys: nx, ny, dx, dt, n_steps, cfl,
// pml_cells, pml_alpha).
void write_sim_config(const std::string& path, const SimConfig& cfg);
SimConfig read_sim_config(const std::string& path);

// Ordered (row, col) pixel positions on the imaging-region boundary.
struct SensorArray {
    std::vector<std::pair<int, int>> positions;

    int count() const { return static_cast<int>(positions.size()); }
    void validate(const GridSpec& grid) const;  // distinct, on the boundary rectangle
};

// Pressure time series recorded at the sensors: samples[s*n_steps + n].
struct SensorData {
    int n_sensors = 0;
    int n_steps = 0;
    double dt = 0.0;
    std::vector<double> samples;

    SensorData() = default;
    SensorData(int sensors, int steps, double dt_)
        : n_sensors(sensors), n_steps(steps), dt(dt_),
          samples(static_cast<std::size_t>(sensors) * steps, 0.0) {}

    double& at(int s, int n) { return samples[static_cast<std::size_t>(s) * n_steps + n]; }
    double at(int s, int n) const { return samples[static_cast<std::size_t>(s) * n_steps + n]; }
    void validate() const;
};

ScalarField2D sensor_data_as_field(const SensorData& d);
SensorData sensor_data_from_field(const ScalarField2D& f, double dt);

// Snapshot of the propagating wavefield on the computational grid.
struct WaveState {
    ScalarField2D p;         // cell pressure
    std::vector<double> ux;  // ny x (nx+1) x-face velocities
    std::vector<double> uy;  // (ny+1) x nx y-face velocities
    int t_index = 0;
};

// E = 1/2 sum p^2/(rho c^2) dx^2 + 1/2 sum rho u^2 dx^2 over cells and
// interior faces (face density averages the two adjacent cells).
double discrete_energy(const WaveState& state, const Medium& medium);

// Per-step velocity-difference capture for the speed gradient.
struct DivHistory {
    int nx = 0, ny = 0, n_steps = 0;
    std::vector<double> divx;  // (n_steps-1) * ny*nx, step n stored at n-1
    std::vector<double> divy;
};

// Supplies the capture for one step at a time, visited in strictly
// decreasing step order by the reverse sweep.
class DivProvider {
public:
    virtual ~DivProvider() = default;
    virtual std::pair<const double*, const double*> divs(int step) = 0;
};

// Precomputed update coefficients for one (medium, config, sensors) triple.
// The medium is extended into the collar by edge replication; the collar
// absorption profile is fixed at construction and does not vary with c.
class Propagator {
public:
    Propagator(const Medium& medium, const SensorArray& sensors, const SimConfig& config);

    const GridSpec& imaging_grid() const { return imaging_grid_; }
    const GridSpec& comp_grid() const { return comp_grid_; }
    const Medium& comp_medium() const { return comp_medium_; }
    int n_steps() const { return n_steps_; }
    int n_sensors() const { return static_cast<int>(sensor_cells_.size()); }
    double dt() const { return dt_; }

    // Bytes of capture the speed gradient needs without checkpointing.
    std::size_t history_bytes() const;

    SensorData forward(const ScalarField2D& p0) const;
    SensorData forward_with_history(const ScalarField2D& p0, DivHistory& hist) const;
    // on_state is called with the state at every recorded sample, t_index 0
    // through n_steps-1.
    SensorData forward_trace(const ScalarField2D& p0,
                             const std::function<void(const WaveState&)>& on_state) const;

    // Checkpointed capture: full state every `stride` steps; segments are
    // replayed on demand during the reverse sweep.
    struct Checkpoints {
        int stride = 0;
        std::vector<std::vector<double>> states;  // packed ux|uy|px|py per checkpoint
    };
    SensorData forward_with_checkpoints(const ScalarField2D& p0, int stride,
                                        Checkpoints& cps) const;

    // Exact transpose of forward, restricted to the imaging region.
    ScalarField2D adjoint(const SensorData& y) const;

    // Transpose sweep that also accumulates the gradient of 1/2|..|^2-type
    // functionals with respect to the bulk modulus kappa = rho c^2 per
    // computational cell. Returns the adjoint image; kappa_grad_comp gets
    // ny_comp*nx_comp accumulated values.
    ScalarField2D adjoint_with_kappa_grad(const SensorData& y, DivProvider& divs,
                                          std::vector<double>& kappa_grad_comp) const;

    // Maps a per-computational-cell kappa gradient back to the imaging grid:
    // collar cells chain through the edge replication onto their source cell,
    // then dkappa/dc = 2 rho c is applied.
    ScalarField2D kappa_grad_to_c_grad(const std::vector<double>& kappa_grad_comp) const;

    class FullHistoryProvider : public DivProvider {
    public:
        explicit FullHistoryProvider(const DivHistory& h) : h_(&h) {}
        std::pair<const double*, const double*> divs(int step) override;
    private:
        const DivHistory* h_;
    };

    class CheckpointProvider : public DivProvider {
    public:
        CheckpointProvider(const Propagator& prop, const Checkpoints& cps);
        std::pair<const double*, const double*> divs(int step) override;
    private:
        void replay_segment(int first_step);
        const Propagator* prop_;
        const Checkpoints* cps_;
        int seg_begin_ = -1, seg_end_ = -1;  // captured steps in [seg_begin_, seg_end_)
        DivHistory seg_;
        std::vector<double> ux_, uy_, px_, py_;
    };

private:
    friend class CheckpointProvider;
    struct Work {  // one sweep's state buffers
        std::vector<double> ux, uy, px, py;
    };
    void init_state(const ScalarField2D& p0, Work& w) const;
    void record_sample(const Work& w, int n, SensorData& out) const;
    void step(Work& w, double* divx_out, double* divy_out) const;
    kernels::WaveCoeffs coeffs() const;
    WaveState snapshot(const Work& w, int t_index) const;

    GridSpec imaging_grid_;
    GridSpec comp_grid_;
    Medium comp_medium_;
    double dt_;
    int n_steps_;
    int pml_cells_;
    std::vector<std::size_t> sensor_cells_;   // computational-grid flat indices
    std::vector<double> ax_, ay_;             // face decay profiles
    std::vector<double> bx_, by_;             // face update factors (zero on walls)
    std::vector<double> cxc_, cyc_;           // cell decay profiles
    std::vector<double> kx_, ky_;             // cell update factors (kappa folded)
    std::vector<double> gx_, gy_;             // kappa-independent parts of kx_, ky_
};

// Pressure time series at the sensors for initial pressure p0 at rest.
SensorData simulate_forward(const Medium& medium, const ScalarField2D& p0,
                            const SensorArray& sensors, const SimConfig& config);

}  // namespace pat
