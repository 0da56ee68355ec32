#include "pat/wave.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pat {

namespace {

constexpr double kStabilityLimit = 0.70710678;  // 2-D staggered leapfrog bound 1/sqrt(2)
constexpr int kPmlOrder = 4;                    // quartic absorption ramp
constexpr double kPmlTargetReflection = 1e-4;

double pml_sigma(double xi, double alpha) {
    // xi in [0,1] is normalized depth into the collar
    double s = xi * xi;
    s *= s;
    return alpha * s;
}

}  // namespace

void SimConfig::validate() const {
    grid.validate();
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DataError("dt must be positive");
    if (n_steps < 1) throw DataError("n_steps must be >= 1");
    if (pml_cells < 0) throw DataError("pml_cells must be >= 0");
    if (!(cfl > 0.0) || !(cfl < 1.0)) throw DataError("cfl must lie in (0,1)");
    if (pml_alpha < 0.0 || !std::isfinite(pml_alpha)) throw DataError("pml_alpha must be >= 0");
}

SimConfig make_sim_config(const GridSpec& grid, const Medium& medium,
                          int n_steps, double cfl, int pml_cells) {
    grid.validate();
    medium.validate();
    if (!(medium.c.grid == grid)) throw DataError("medium grid does not match");
    if (!(cfl > 0.0) || !(cfl < 1.0)) throw DataError("cfl must lie in (0,1)");
    if (n_steps < 1) throw DataError("n_steps must be >= 1");
    if (pml_cells < 0) throw DataError("pml_cells must be >= 0");

    const double c_max = max_value(medium.c);
    SimConfig cfg;
    cfg.grid = grid;
    cfg.cfl = cfl;
    cfg.dt = cfl * grid.dx / c_max;
    cfg.n_steps = n_steps;
    cfg.pml_cells = pml_cells;
    cfg.pml_alpha = pml_cells > 0
        ? (kPmlOrder + 1) * c_max * std::log(1.0 / kPmlTargetReflection) /
              (2.0 * pml_cells * grid.dx)
        : 0.0;
    return cfg;
}

void write_sim_config(const std::string& path, const SimConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.precision(17);
    out << "nx = " << cfg.grid.nx << "\n"
        << "ny = " << cfg.grid.ny << "\n"
        << "dx = " << cfg.grid.dx << "\n"
        << "dt = " << cfg.dt << "\n"
        << "n_steps = " << cfg.n_steps << "\n"
        << "cfl = " << cfg.cfl << "\n"
        << "pml_cells = " << cfg.pml_cells << "\n"
        << "pml_alpha = " << cfg.pml_alpha << "\n";
    if (!out) throw DataError("write failed: " + path);
}

SimConfig read_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto need = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(std::string("config missing key: ") + key);
        return it->second;
    };
    SimConfig cfg;
    cfg.grid.nx = std::stoi(need("nx"));
    cfg.grid.ny = std::stoi(need("ny"));
    cfg.grid.dx = std::stod(need("dx"));
    cfg.dt = std::stod(need("dt"));
    cfg.n_steps = std::stoi(need("n_steps"));
    cfg.cfl = std::stod(need("cfl"));
    cfg.pml_cells = std::stoi(need("pml_cells"));
    cfg.pml_alpha = std::stod(need("pml_alpha"));
    cfg.validate();
    return cfg;
}

void SensorArray::validate(const GridSpec& grid) const {
    std::set<std::pair<int, int>> seen;
    for (const auto& [j, i] : positions) {
        if (j < 0 || j >= grid.ny || i < 0 || i >= grid.nx)
            throw DataError("sensor outside grid");
        if (j != 0 && j != grid.ny - 1 && i != 0 && i != grid.nx - 1)
            throw DataError("sensor not on the boundary rectangle");
        if (!seen.insert({j, i}).second) throw DataError("duplicate sensor position");
    }
}

void SensorData::validate() const {
    if (n_sensors < 1 || n_steps < 1) throw DataError("empty sensor data");
    if (samples.size() != static_cast<std::size_t>(n_sensors) * n_steps)
        throw DataError("sensor sample count mismatch");
    for (double v : samples)
        if (!std::isfinite(v)) throw NumericError("non-finite sensor sample");
}

ScalarField2D sensor_data_as_field(const SensorData& d) {
    ScalarField2D f;
    f.grid = GridSpec{d.n_steps, d.n_sensors, 1.0};
    f.values = d.samples;
    return f;
}

SensorData sensor_data_from_field(const ScalarField2D& f, double dt) {
    SensorData d;
    d.n_sensors = f.grid.ny;
    d.n_steps = f.grid.nx;
    d.dt = dt;
    d.samples = f.values;
    return d;
}

double discrete_energy(const WaveState& state, const Medium& medium) {
    const GridSpec& g = state.p.grid;
    if (!(medium.c.grid == g)) throw DataError("energy: medium grid does not match state");
    const int nx = g.nx, ny = g.ny;
    if (state.ux.size() != static_cast<std::size_t>(ny) * (nx + 1) ||
        state.uy.size() != static_cast<std::size_t>(ny + 1) * nx)
        throw DataError("energy: staggered array shapes do not match grid");
    const double cell_area = g.dx * g.dx;

    double e_pot = 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double p = state.p.at(j, i);
            const double kappa = medium.rho.at(j, i) * medium.c.at(j, i) * medium.c.at(j, i);
            e_pot += p * p / kappa;
        }

    double e_kin = 0.0;
    for (int j = 0; j < ny; ++j)
        for (int I = 1; I < nx; ++I) {
            const double rho_f = 0.5 * (medium.rho.at(j, I - 1) + medium.rho.at(j, I));
            const double u = state.ux[static_cast<std::size_t>(j) * (nx + 1) + I];
            e_kin += rho_f * u * u;
        }
    for (int J = 1; J < ny; ++J)
        for (int i = 0; i < nx; ++i) {
            const double rho_f = 0.5 * (medium.rho.at(J - 1, i) + medium.rho.at(J, i));
            const double u = state.uy[static_cast<std::size_t>(J) * nx + i];
            e_kin += rho_f * u * u;
        }
    return 0.5 * (e_pot + e_kin) * cell_area;
}

// ---------------------------------------------------------------------------
// Propagator

Propagator::Propagator(const Medium& medium, const SensorArray& sensors,
                       const SimConfig& config) {
    config.validate();
    medium.validate();
    if (!(medium.c.grid == config.grid))
        throw DataError("medium grid does not match simulation config");
    sensors.validate(config.grid);
    if (sensors.count() < 1) throw DataError("sensor array is empty");

    imaging_grid_ = config.grid;
    dt_ = config.dt;
    n_steps_ = config.n_steps;
    pml_cells_ = config.pml_cells;

    const int P = pml_cells_;
    const int nx = imaging_grid_.nx + 2 * P;
    const int ny = imaging_grid_.ny + 2 * P;
    const double dx = imaging_grid_.dx;
    comp_grid_ = GridSpec{nx, ny, dx};

    // extend the medium into the collar by edge replication
    comp_medium_.c = ScalarField2D(comp_grid_);
    comp_medium_.rho = ScalarField2D(comp_grid_);
    auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int js = clampi(j - P, 0, imaging_grid_.ny - 1);
            const int is = clampi(i - P, 0, imaging_grid_.nx - 1);
            comp_medium_.c.at(j, i) = medium.c.at(js, is);
            comp_medium_.rho.at(j, i) = medium.rho.at(js, is);
        }

    const double c_peak = max_value(comp_medium_.c);
    if (c_peak * dt_ / dx > kStabilityLimit)
        throw NumericError("CFL violation: c_max*dt/dx = " +
                           std::to_string(c_peak * dt_ / dx) + " exceeds the stability bound");

    // collar absorption: sigma_x depends on x only, sigma_y on y only
    const double alpha = config.pml_alpha;
    auto sigma_cell = [&](int i, int n_img) {
        if (P == 0) return 0.0;
        if (i < P) return pml_sigma((P - i - 0.5) / P, alpha);
        if (i >= P + n_img) return pml_sigma((i - P - n_img + 0.5) / P, alpha);
        return 0.0;
    };
    auto sigma_face = [&](int I, int n_img) {
        if (P == 0) return 0.0;
        if (I < P) return pml_sigma(static_cast<double>(P - I) / P, alpha);
        if (I > P + n_img) return pml_sigma(static_cast<double>(I - P - n_img) / P, alpha);
        return 0.0;
    };

    ax_.resize(nx + 1);
    bx_.assign(static_cast<std::size_t>(ny) * (nx + 1), 0.0);
    ay_.resize(ny + 1);
    by_.assign(static_cast<std::size_t>(ny + 1) * nx, 0.0);
    cxc_.resize(nx);
    cyc_.resize(ny);
    kx_.resize(comp_grid_.cells());
    ky_.resize(comp_grid_.cells());
    gx_.resize(nx);
    gy_.resize(ny);

    for (int I = 0; I <= nx; ++I) ax_[I] = std::exp(-sigma_face(I, imaging_grid_.nx) * dt_);
    for (int J = 0; J <= ny; ++J) ay_[J] = std::exp(-sigma_face(J, imaging_grid_.ny) * dt_);
    for (int i = 0; i < nx; ++i) {
        const double s = sigma_cell(i, imaging_grid_.nx);
        cxc_[i] = std::exp(-s * dt_);
        gx_[i] = -std::exp(-0.5 * s * dt_) * dt_ / dx;
    }
    for (int j = 0; j < ny; ++j) {
        const double s = sigma_cell(j, imaging_grid_.ny);
        cyc_[j] = std::exp(-s * dt_);
        gy_[j] = -std::exp(-0.5 * s * dt_) * dt_ / dx;
    }

    // interior faces only; walls keep b = 0 and act rigid
    for (int j = 0; j < ny; ++j)
        for (int I = 1; I < nx; ++I) {
            const double rho_f = 0.5 * (comp_medium_.rho.at(j, I - 1) + comp_medium_.rho.at(j, I));
            const double s = sigma_face(I, imaging_grid_.nx);
            bx_[static_cast<std::size_t>(j) * (nx + 1) + I] =
                -std::exp(-0.5 * s * dt_) * dt_ / (rho_f * dx);
        }
    for (int J = 1; J < ny; ++J)
        for (int i = 0; i < nx; ++i) {
            const double rho_f = 0.5 * (comp_medium_.rho.at(J - 1, i) + comp_medium_.rho.at(J, i));
            const double s = sigma_face(J, imaging_grid_.ny);
            by_[static_cast<std::size_t>(J) * nx + i] =
                -std::exp(-0.5 * s * dt_) * dt_ / (rho_f * dx);
        }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double kappa = comp_medium_.rho.at(j, i) * comp_medium_.c.at(j, i) *
                                 comp_medium_.c.at(j, i);
            kx_[static_cast<std::size_t>(j) * nx + i] = kappa * gx_[i];
            ky_[static_cast<std::size_t>(j) * nx + i] = kappa * gy_[j];
        }

    sensor_cells_.reserve(sensors.positions.size());
    for (const auto& [j, i] : sensors.positions)
        sensor_cells_.push_back(static_cast<std::size_t>(j + P) * nx + (i + P));
}

kernels::WaveCoeffs Propagator::coeffs() const {
    return kernels::WaveCoeffs{ax_.data(), ay_.data(), bx_.data(), by_.data(),
                               cxc_.data(), cyc_.data(), kx_.data(), ky_.data()};
}

void Propagator::init_state(const ScalarField2D& p0, Work& w) const {
    if (!(p0.grid == imaging_grid_)) throw DataError("p0 grid does not match simulation config");
    p0.validate("p0");
    const int nx = comp_grid_.nx, ny = comp_grid_.ny, P = pml_cells_;
    w.ux.assign(static_cast<std::size_t>(ny) * (nx + 1), 0.0);
    w.uy.assign(static_cast<std::size_t>(ny + 1) * nx, 0.0);
    w.px.assign(comp_grid_.cells(), 0.0);
    w.py.assign(comp_grid_.cells(), 0.0);
    for (int j = 0; j < imaging_grid_.ny; ++j)
        for (int i = 0; i < imaging_grid_.nx; ++i) {
            const double half = 0.5 * p0.at(j, i);
            const std::size_t idx = static_cast<std::size_t>(j + P) * nx + (i + P);
            w.px[idx] = half;
            w.py[idx] = half;
        }
}

void Propagator::record_sample(const Work& w, int n, SensorData& out) const {
    for (std::size_t s = 0; s < sensor_cells_.size(); ++s)
        out.at(static_cast<int>(s), n) = w.px[sensor_cells_[s]] + w.py[sensor_cells_[s]];
}

void Propagator::step(Work& w, double* divx_out, double* divy_out) const {
    const kernels::WaveDims d{comp_grid_.nx, comp_grid_.ny};
    const kernels::WaveCoeffs c = coeffs();
    kernels::update_velocity_omp(d, c, w.ux.data(), w.uy.data(), w.px.data(), w.py.data());
    kernels::update_pressure_omp(d, c, w.px.data(), w.py.data(), w.ux.data(), w.uy.data(),
                                 divx_out, divy_out);
}

WaveState Propagator::snapshot(const Work& w, int t_index) const {
    WaveState s;
    s.p = ScalarField2D(comp_grid_);
    for (std::size_t k = 0; k < w.px.size(); ++k) s.p.values[k] = w.px[k] + w.py[k];
    s.ux = w.ux;
    s.uy = w.uy;
    s.t_index = t_index;
    return s;
}

SensorData Propagator::forward(const ScalarField2D& p0) const {
    Work w;
    init_state(p0, w);
    SensorData out(n_sensors(), n_steps_, dt_);
    record_sample(w, 0, out);
    for (int n = 1; n < n_steps_; ++n) {
        step(w, nullptr, nullptr);
        record_sample(w, n, out);
    }
    return out;
}

SensorData Propagator::forward_with_history(const ScalarField2D& p0, DivHistory& hist) const {
    Work w;
    init_state(p0, w);
    const std::size_t cells = comp_grid_.cells();
    hist.nx = comp_grid_.nx;
    hist.ny = comp_grid_.ny;
    hist.n_steps = n_steps_;
    hist.divx.resize(cells * std::max(0, n_steps_ - 1));
    hist.divy.resize(cells * std::max(0, n_steps_ - 1));
    SensorData out(n_sensors(), n_steps_, dt_);
    record_sample(w, 0, out);
    for (int n = 1; n < n_steps_; ++n) {
        step(w, hist.divx.data() + cells * (n - 1), hist.divy.data() + cells * (n - 1));
        record_sample(w, n, out);
    }
    return out;
}

SensorData Propagator::forward_trace(const ScalarField2D& p0,
                                     const std::function<void(const WaveState&)>& on_state) const {
    Work w;
    init_state(p0, w);
    SensorData out(n_sensors(), n_steps_, dt_);
    record_sample(w, 0, out);
    if (on_state) on_state(snapshot(w, 0));
    for (int n = 1; n < n_steps_; ++n) {
        step(w, nullptr, nullptr);
        record_sample(w, n, out);
        if (on_state) on_state(snapshot(w, n));
    }
    return out;
}

SensorData Propagator::forward_with_checkpoints(const ScalarField2D& p0, int stride,
                                                Checkpoints& cps) const {
    if (stride < 1) throw DataError("checkpoint stride must be >= 1");
    Work w;
    init_state(p0, w);
    cps.stride = stride;
    cps.states.clear();
    auto pack = [&]() {
        std::vector<double> s;
        s.reserve(w.ux.size() + w.uy.size() + w.px.size() + w.py.size());
        s.insert(s.end(), w.ux.begin(), w.ux.end());
        s.insert(s.end(), w.uy.begin(), w.uy.end());
        s.insert(s.end(), w.px.begin(), w.px.end());
        s.insert(s.end(), w.py.begin(), w.py.end());
        cps.states.push_back(std::move(s));
    };
    SensorData out(n_sensors(), n_steps_, dt_);
    record_sample(w, 0, out);
    pack();  // state at step 0
    for (int n = 1; n < n_steps_; ++n) {
        step(w, nullptr, nullptr);
        record_sample(w, n, out);
        if (n % stride == 0 && n < n_steps_ - 1) pack();
    }
    return out;
}

std::size_t Propagator::history_bytes() const {
    return 2 * sizeof(double) * comp_grid_.cells() *
           static_cast<std::size_t>(std::max(0, n_steps_ - 1));
}

namespace {

// Injects one recorded sample's adjoint source into both split pressures.
inline void inject(const std::vector<std::size_t>& cells, const SensorData& y, int n,
                   std::vector<double>& apx, std::vector<double>& apy) {
    for (std::size_t s = 0; s < cells.size(); ++s) {
        const double v = y.at(static_cast<int>(s), n);
        apx[cells[s]] += v;
        apy[cells[s]] += v;
    }
}

}  // namespace

ScalarField2D Propagator::adjoint(const SensorData& y) const {
    std::vector<double> unused;
    DivHistory none;  // never dereferenced without a kappa gradient
    FullHistoryProvider provider(none);
    return adjoint_with_kappa_grad(y, provider, unused);
}

ScalarField2D Propagator::adjoint_with_kappa_grad(const SensorData& y, DivProvider& divs,
                                                  std::vector<double>& kappa_grad_comp) const {
    if (y.n_sensors != n_sensors() || y.n_steps != n_steps_)
        throw DataError("sensor data shape does not match operator");
    // kappa gradient is produced only when the caller passed a sized buffer
    const bool grad = kappa_grad_comp.size() == comp_grid_.cells();

    const int nx = comp_grid_.nx, ny = comp_grid_.ny;
    const kernels::WaveDims d{nx, ny};
    const kernels::WaveCoeffs c = coeffs();

    Work w;
    w.ux.assign(static_cast<std::size_t>(ny) * (nx + 1), 0.0);
    w.uy.assign(static_cast<std::size_t>(ny + 1) * nx, 0.0);
    w.px.assign(comp_grid_.cells(), 0.0);
    w.py.assign(comp_grid_.cells(), 0.0);

    for (int n = n_steps_ - 1; n >= 1; --n) {
        inject(sensor_cells_, y, n, w.px, w.py);
        const double* divx = nullptr;
        const double* divy = nullptr;
        if (grad) std::tie(divx, divy) = divs.divs(n);
        kernels::adjoint_pressure_omp(d, c, w.px.data(), w.py.data(), w.ux.data(), w.uy.data(),
                                      divx, divy, gx_.data(), gy_.data(),
                                      grad ? kappa_grad_comp.data() : nullptr);
        kernels::adjoint_velocity_omp(d, c, w.ux.data(), w.uy.data(), w.px.data(), w.py.data());
    }
    inject(sensor_cells_, y, 0, w.px, w.py);

    // transpose of the half/half split embedding, restricted to the imaging region
    ScalarField2D out(imaging_grid_);
    const int P = pml_cells_;
    for (int j = 0; j < imaging_grid_.ny; ++j)
        for (int i = 0; i < imaging_grid_.nx; ++i) {
            const std::size_t idx = static_cast<std::size_t>(j + P) * nx + (i + P);
            out.at(j, i) = 0.5 * (w.px[idx] + w.py[idx]);
        }
    return out;
}

ScalarField2D Propagator::kappa_grad_to_c_grad(const std::vector<double>& kappa_grad_comp) const {
    if (kappa_grad_comp.size() != comp_grid_.cells())
        throw DataError("kappa gradient size mismatch");
    ScalarField2D out(imaging_grid_);
    const int nx = comp_grid_.nx, ny = comp_grid_.ny, P = pml_cells_;
    auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int js = clampi(j - P, 0, imaging_grid_.ny - 1);
            const int is = clampi(i - P, 0, imaging_grid_.nx - 1);
            const double dkdc = 2.0 * comp_medium_.rho.at(j, i) * comp_medium_.c.at(j, i);
            out.at(js, is) += kappa_grad_comp[static_cast<std::size_t>(j) * nx + i] * dkdc;
        }
    return out;
}

std::pair<const double*, const double*> Propagator::FullHistoryProvider::divs(int step) {
    const std::size_t cells = static_cast<std::size_t>(h_->nx) * h_->ny;
    return {h_->divx.data() + cells * (step - 1), h_->divy.data() + cells * (step - 1)};
}

Propagator::CheckpointProvider::CheckpointProvider(const Propagator& prop, const Checkpoints& cps)
    : prop_(&prop), cps_(&cps) {}

void Propagator::CheckpointProvider::replay_segment(int first_step) {
    // segment [first_step, seg_end) replayed from the checkpoint at first_step-1
    const int stride = cps_->stride;
    const int cp_index = (first_step - 1) / stride;
    const int cp_step = cp_index * stride;
    const std::size_t nux = static_cast<std::size_t>(prop_->comp_grid_.ny) *
                            (prop_->comp_grid_.nx + 1);
    const std::size_t nuy = static_cast<std::size_t>(prop_->comp_grid_.ny + 1) *
                            prop_->comp_grid_.nx;
    const std::size_t cells = prop_->comp_grid_.cells();
    const std::vector<double>& packed = cps_->states.at(cp_index);
    ux_.assign(packed.begin(), packed.begin() + nux);
    uy_.assign(packed.begin() + nux, packed.begin() + nux + nuy);
    px_.assign(packed.begin() + nux + nuy, packed.begin() + nux + nuy + cells);
    py_.assign(packed.begin() + nux + nuy + cells, packed.end());

    seg_begin_ = cp_step + 1;
    seg_end_ = std::min(cp_step + stride, prop_->n_steps_ - 1) + 1;
    const int seg_len = seg_end_ - seg_begin_;
    seg_.nx = prop_->comp_grid_.nx;
    seg_.ny = prop_->comp_grid_.ny;
    seg_.divx.resize(cells * seg_len);
    seg_.divy.resize(cells * seg_len);

    Work w;
    w.ux = std::move(ux_);
    w.uy = std::move(uy_);
    w.px = std::move(px_);
    w.py = std::move(py_);
    for (int n = seg_begin_; n < seg_end_; ++n) {
        const std::size_t off = cells * (n - seg_begin_);
        prop_->step(w, seg_.divx.data() + off, seg_.divy.data() + off);
    }
    ux_ = std::move(w.ux);
    uy_ = std::move(w.uy);
    px_ = std::move(w.px);
    py_ = std::move(w.py);
}

std::pair<const double*, const double*> Propagator::CheckpointProvider::divs(int step) {
    if (step < seg_begin_ || step >= seg_end_) replay_segment(((step - 1) / cps_->stride) * cps_->stride + 1);
    const std::size_t cells = prop_->comp_grid_.cells();
    const std::size_t off = cells * (step - seg_begin_);
    return {seg_.divx.data() + off, seg_.divy.data() + off};
}

SensorData simulate_forward(const Medium& medium, const ScalarField2D& p0,
                            const SensorArray& sensors, const SimConfig& config) {
    Propagator prop(medium, sensors, config);
    return prop.forward(p0);
}

}  // namespace pat
