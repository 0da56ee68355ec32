#include "pat/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "pat/rng.hpp"

namespace pat {

namespace {

constexpr RegionValues kTable[6] = {
    {0.0, 1480.0}, {0.2, 1800.0}, {0.4, 1530.0},
    {0.6, 1520.0}, {0.8, 2600.0}, {1.0, 3198.0},
};

// Nominal geometry in normalized coordinates, x right and y up in [-1, 1].
struct Nominal {
    double cx, cy, a, b, theta;
};
constexpr Nominal kNominal[6] = {
    {0.0, -0.0184, 0.6624, 0.874, 0.0},   // 1: inner field
    {0.0, 0.0, 0.69, 0.92, 0.0},          // 2: outer ellipse
    {0.22, 0.0, 0.11, 0.31, -0.31416},    // 3: right lobe
    {-0.22, 0.0, 0.16, 0.41, 0.31416},    // 4: left lobe
    {0.0, 0.35, 0.21, 0.25, 0.0},         // 5: upper ellipse
    {0.0, -0.45, 0.08, 0.08, 0.0},        // 6: bright dot
};
constexpr bool kRandomized[6] = {true, false, true, true, true, false};

EllipseSpec to_pixels(const Nominal& n, const GridSpec& g) {
    EllipseSpec e;
    e.cx = (n.cx + 1.0) * 0.5 * g.nx;
    e.cy = (1.0 - n.cy) * 0.5 * g.ny;
    e.a = n.a * 0.5 * g.nx;
    e.b = n.b * 0.5 * g.ny;
    e.theta = -n.theta;  // row axis points down
    return e;
}

bool point_in_ellipse(const EllipseSpec& e, double x, double y, double margin = 1.0) {
    const double dx = x - e.cx, dy = y - e.cy;
    const double ct = std::cos(e.theta), st = std::sin(e.theta);
    const double xr = dx * ct + dy * st;
    const double yr = -dx * st + dy * ct;
    return (xr / e.a) * (xr / e.a) + (yr / e.b) * (yr / e.b) <= margin;
}

// Candidate stays inside the outer ellipse: 72 boundary samples, 3% margin.
bool contained(const EllipseSpec& cand, const EllipseSpec& outer) {
    const double ct = std::cos(cand.theta), st = std::sin(cand.theta);
    for (int k = 0; k < 72; ++k) {
        const double phi = 2.0 * 3.14159265358979323846 * k / 72.0;
        const double ex = cand.a * std::cos(phi), ey = cand.b * std::sin(phi);
        const double x = cand.cx + ex * ct - ey * st;
        const double y = cand.cy + ex * st + ey * ct;
        if (!point_in_ellipse(outer, x, y, 0.97)) return false;
    }
    return true;
}

}  // namespace

RegionValues region_values(int index) {
    if (index < 1 || index > 6)
        throw DataError("region index must lie in 1..6, got " + std::to_string(index));
    return kTable[index - 1];
}

PhantomSpec make_phantom_spec(const GridSpec& grid, std::uint64_t seed,
                              const std::vector<int>& omit_regions) {
    grid.validate();
    if (grid.nx < 32 || grid.ny < 32)
        throw DataError("phantom grid must be at least 32x32");
    for (int r : omit_regions)
        if (r < 1 || r > 6) throw DataError("omit region index out of range");

    PhantomSpec spec;
    spec.grid = grid;
    spec.seed = seed;
    spec.omit_regions = omit_regions;
    std::sort(spec.omit_regions.begin(), spec.omit_regions.end());
    spec.omit_regions.erase(std::unique(spec.omit_regions.begin(), spec.omit_regions.end()),
                            spec.omit_regions.end());

    std::mt19937_64 rng(seed);
    const EllipseSpec outer = to_pixels(kNominal[1], grid);
    // jitter amplitude is 15% of the outer semi-axes
    const double jx = 0.15 * outer.a, jy = 0.15 * outer.b;

    for (int r = 1; r <= 6; ++r) {
        const EllipseSpec nominal = to_pixels(kNominal[r - 1], grid);
        if (!kRandomized[r - 1]) {
            spec.ellipses[r - 1] = nominal;
            continue;
        }
        double shrink = 1.0;
        EllipseSpec cand;
        for (;;) {
            bool ok = false;
            for (int attempt = 0; attempt < 100; ++attempt) {
                cand = nominal;
                cand.cx += rng_uniform(rng, -jx, jx);
                cand.cy += rng_uniform(rng, -jy, jy);
                const double s = rng_uniform(rng, 0.7, 1.3) * shrink;
                cand.a = nominal.a * s;
                cand.b = nominal.b * s;
                if (contained(cand, outer)) {
                    ok = true;
                    break;
                }
            }
            if (ok) break;
            shrink *= 0.9;
        }
        spec.ellipses[r - 1] = cand;
    }
    return spec;
}

PhantomSample rasterize_phantom(const PhantomSpec& spec) {
    const GridSpec& g = spec.grid;
    PhantomSample sample;
    sample.grid = g;
    sample.labels.assign(g.cells(), 0);
    sample.p0 = ScalarField2D(g, kBackgroundP0);
    sample.c = ScalarField2D(g, kBackgroundC);

    auto omitted = [&](int r) {
        return std::binary_search(spec.omit_regions.begin(), spec.omit_regions.end(), r);
    };

    constexpr int kPaintOrder[6] = {2, 1, 3, 4, 5, 6};
    for (int r : kPaintOrder) {
        if (omitted(r)) continue;
        const EllipseSpec& e = spec.ellipses[r - 1];
        const RegionValues v = region_values(r);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                if (!point_in_ellipse(e, i + 0.5, j + 0.5)) continue;
                sample.labels[static_cast<std::size_t>(j) * g.nx + i] = r;
                sample.p0.at(j, i) = v.p0;
                sample.c.at(j, i) = v.c;
            }
    }
    return sample;
}

PhantomSample generate_phantom(const GridSpec& grid, std::uint64_t seed,
                               const std::vector<int>& omit_regions) {
    return rasterize_phantom(make_phantom_spec(grid, seed, omit_regions));
}

SensorArray sensor_layout(const GridSpec& grid) {
    grid.validate();
    SensorArray s;
    const int nx = grid.nx, ny = grid.ny;
    s.positions.reserve(2 * nx + 2 * ny - 4);
    for (int i = 0; i < nx; ++i) s.positions.emplace_back(0, i);
    for (int j = 1; j < ny; ++j) s.positions.emplace_back(j, nx - 1);
    for (int i = nx - 2; i >= 0; --i) s.positions.emplace_back(ny - 1, i);
    for (int j = ny - 2; j >= 1; --j) s.positions.emplace_back(j, 0);
    return s;
}

std::uint64_t sample_seed(std::uint64_t master_seed, int sample_index) {
    // splitmix64 step on master + (index+1) * golden gamma
    std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(sample_index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

ScalarField2D labels_as_field(const PhantomSample& s) {
    ScalarField2D f(s.grid);
    for (std::size_t k = 0; k < s.labels.size(); ++k) f.values[k] = s.labels[k];
    return f;
}

std::string sample_dirname(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d", index);
    return buf;
}

}  // namespace

DatasetManifest generate_dataset(const DatasetParams& params, const std::string& out_dir) {
    if (params.n_train < 0 || params.n_test < 0 || params.n_train + params.n_test < 1)
        throw DataError("dataset needs at least one sample");
    params.grid.validate();

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    // one config for every phantom, stable for the fastest table entry
    const Medium ref = uniform_medium(params.grid, kSpeedMax);
    const SimConfig sim = make_sim_config(params.grid, ref, params.n_steps, params.cfl,
                                          params.pml_cells);
    const SensorArray sensors = sensor_layout(params.grid);

    DatasetManifest m;
    m.params = params;
    m.sim = sim;
    m.root = out_dir;
    const int total = params.n_train + params.n_test;
    m.entries.resize(total);

    std::string first_error;
#pragma omp parallel for schedule(dynamic)
    for (int idx = 0; idx < total; ++idx) {
        try {
            const std::uint64_t seed = sample_seed(params.seed, idx);
            PhantomSample sample = generate_phantom(params.grid, seed, params.omit_regions);
            Medium medium{sample.c, ScalarField2D(params.grid, 1.0)};
            sample.g = simulate_forward(medium, sample.p0, sensors, sim);

            const std::string dir = sample_dirname(idx);
            fs::create_directories(fs::path(out_dir) / dir);
            write_field((fs::path(out_dir) / dir / "p0.patf").string(), sample.p0);
            write_field((fs::path(out_dir) / dir / "c.patf").string(), sample.c);
            write_field((fs::path(out_dir) / dir / "labels.patf").string(), labels_as_field(sample));
            write_field((fs::path(out_dir) / dir / "g.patf").string(),
                        sensor_data_as_field(*sample.g));

            m.entries[idx] = DatasetEntry{idx, idx < params.n_train, seed, dir};
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_error.empty())
                first_error = "sample " + std::to_string(idx) + ": " + e.what();
        }
    }
    if (!first_error.empty()) throw DataError("dataset generation failed: " + first_error);

    write_manifest((fs::path(out_dir) / "manifest.txt").string(), m);
    return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.precision(17);
    out << "n_train = " << m.params.n_train << "\n"
        << "n_test = " << m.params.n_test << "\n"
        << "master_seed = " << m.params.seed << "\n"
        << "nx = " << m.sim.grid.nx << "\n"
        << "ny = " << m.sim.grid.ny << "\n"
        << "dx = " << m.sim.grid.dx << "\n"
        << "dt = " << m.sim.dt << "\n"
        << "n_steps = " << m.sim.n_steps << "\n"
        << "cfl = " << m.sim.cfl << "\n"
        << "pml_cells = " << m.sim.pml_cells << "\n"
        << "pml_alpha = " << m.sim.pml_alpha << "\n";
    out << "omit_regions =";
    for (int r : m.params.omit_regions) out << " " << r;
    out << "\n";
    for (const auto& e : m.entries)
        out << "sample " << e.index << " " << (e.is_train ? "train" : "test") << " "
            << e.seed << " " << e.dir << "\n";
    if (!out) throw DataError("write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);

    DatasetManifest m;
    m.root = std::filesystem::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";

    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("sample ", 0) == 0) {
            std::istringstream ss(line);
            std::string tag, split;
            DatasetEntry e;
            ss >> tag >> e.index >> split >> e.seed >> e.dir;
            if (!ss || (split != "train" && split != "test"))
                throw DataError("bad sample line in manifest: " + line);
            e.is_train = split == "train";
            m.entries.push_back(e);
            continue;
        }
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
        if (it == kv.end()) throw DataError(std::string("manifest missing key: ") + key);
        return it->second;
    };
    m.params.n_train = std::stoi(need("n_train"));
    m.params.n_test = std::stoi(need("n_test"));
    m.params.seed = std::stoull(need("master_seed"));
    m.sim.grid.nx = std::stoi(need("nx"));
    m.sim.grid.ny = std::stoi(need("ny"));
    m.sim.grid.dx = std::stod(need("dx"));
    m.sim.dt = std::stod(need("dt"));
    m.sim.n_steps = std::stoi(need("n_steps"));
    m.sim.cfl = std::stod(need("cfl"));
    m.sim.pml_cells = std::stoi(need("pml_cells"));
    m.sim.pml_alpha = std::stod(need("pml_alpha"));
    m.sim.validate();
    m.params.grid = m.sim.grid;
    m.params.n_steps = m.sim.n_steps;
    m.params.cfl = m.sim.cfl;
    m.params.pml_cells = m.sim.pml_cells;
    {
        std::istringstream ss(kv.count("omit_regions") ? kv["omit_regions"] : std::string());
        int r;
        while (ss >> r) m.params.omit_regions.push_back(r);
    }
    return m;
}

}  // namespace pat
